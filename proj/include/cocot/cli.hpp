#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cocot/chains.hpp"
#include "cocot/clients.hpp"
#include "cocot/eval.hpp"
#include "cocot/grounding.hpp"
#include "cocot/records.hpp"
#include "cocot/types.hpp"

namespace cocot::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitValidation = 2;

struct Paths {
  std::filesystem::path input;     // stage input; defaults to the previous stage's file in out_dir
  std::filesystem::path grounded;  // grounded records consulted by `infer`, `eval` and `report`
  std::filesystem::path chained;   // chain records consulted by `infer`
  std::filesystem::path fixtures;  // scripted model responses
  std::filesystem::path ocr_fixtures;
  std::filesystem::path out_dir = "out";
};

struct RunConfig {
  std::uint64_t seed = 0;
  int jobs = 4;
  bool strict = false;
  Paths paths;
  std::optional<Dataset> dataset;
  bool split = false;
  grounding::GroundingConfig grounding;
  chains::ChainBuilderConfig chain;
  eval::MatchConfig match;
  clients::ClientConfig client;
  std::vector<Strategy> strategies = all_strategies();
  std::optional<Strategy> baseline = Strategy::direct;
};

/// Overlays a JSON config document onto `cfg`. Unknown keys and wrong types
/// throw ConfigError naming the key path ("grounding.max_regions").
void apply_config(RunConfig& cfg, const records::Json& doc);

/// Reads and applies a JSON config file.
void load_config(RunConfig& cfg, const std::filesystem::path& path);

/// Checks field ranges. Path existence is checked per subcommand.
void validate(const RunConfig& cfg);

/// The run configuration as recorded in manifests. Paths, the worker count
/// and the auth token are left out so manifests do not depend on them.
records::Json effective_config(const RunConfig& cfg);

/// Runs one CLI invocation; args exclude the program name. Returns the
/// process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main_entry(int argc, char** argv);

}  // namespace cocot::cli
