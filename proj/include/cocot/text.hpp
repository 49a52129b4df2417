#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace cocot {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Lowercased maximal runs of ASCII alphanumerics. Bytes >= 0x80 are kept as
/// part of a token so UTF-8 words survive intact.
std::vector<std::string> alnum_tokens(std::string_view s);

/// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view data);

/// Process-wide warning sink. Thread-safe; defaults to stderr.
void log_warning(const std::string& message);
using WarningSink = std::function<void(const std::string&)>;
/// Installs a sink and returns the previous one.
WarningSink set_warning_sink(WarningSink sink);

}  // namespace cocot
