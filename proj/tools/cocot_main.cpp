#include "cocot/cli.hpp"

int main(int argc, char** argv) { return cocot::cli::main_entry(argc, argv); }
