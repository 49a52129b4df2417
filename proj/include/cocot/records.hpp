#pragma once

// Line-delimited record format. One compact JSON object per line, UTF-8, keys
// in the order documented in docs/records.md, floats rounded to 6 decimals.

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cocot/types.hpp"

namespace cocot::records {

using Json = nlohmann::ordered_json;

/// Rounds to 6 decimal places so the shortest round-trip rendering stays short.
double round6(double v);

Json encode(const BBox& b);
Json encode(const Region& r);
Json encode(const Sample& s);
Json encode(const GroundedSample& g);
Json encode(const OcrWord& w);
Json encode(const OcrPage& p);
Json encode(const ReasoningStep& s);
Json encode(const ReasoningChain& c);
Json encode(const ChainedSample& c);
Json encode(const PredictionRecord& p);
Json encode(const RejectRecord& r);

// Decoders validate every invariant; bad input throws DecodeError.
BBox decode_bbox(const Json& j);
Region decode_region(const Json& j);
Sample decode_sample(const Json& j);
GroundedSample decode_grounded(const Json& j);
OcrWord decode_ocr_word(const Json& j);
OcrPage decode_ocr_page(const Json& j);
ReasoningStep decode_step(const Json& j);
ReasoningChain decode_chain(const Json& j);
ChainedSample decode_chained(const Json& j);
PredictionRecord decode_prediction(const Json& j);
RejectRecord decode_reject(const Json& j);

/// Compact single-line rendering (no trailing newline).
std::string to_line(const Json& j);

/// Parses one line; throws DecodeError on malformed JSON.
Json parse_line(const std::string& line);

/// Reads every non-blank line of a file and decodes it with `decode`.
/// DecodeError messages carry the 1-based line number.
template <typename Decode>
auto read_records(const std::filesystem::path& path, Decode decode) -> std::vector<decltype(decode(Json{}))>;

std::vector<Json> read_json_lines(const std::filesystem::path& path);

/// Writes one record per line, newline-terminated. Overwrites `path`.
void write_json_lines(const std::filesystem::path& path, const std::vector<Json>& rows);

template <typename T>
std::vector<Json> encode_all(const std::vector<T>& values) {
  std::vector<Json> out;
  out.reserve(values.size());
  for (const auto& v : values) out.push_back(encode(v));
  return out;
}

// Convenience wrappers for whole files.
std::vector<Sample> read_samples(const std::filesystem::path& path);
std::vector<GroundedSample> read_grounded(const std::filesystem::path& path);
std::vector<ChainedSample> read_chained(const std::filesystem::path& path);
std::vector<OcrPage> read_ocr_pages(const std::filesystem::path& path);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

}  // namespace cocot::records

#include "cocot/errors.hpp"

namespace cocot::records {

template <typename Decode>
auto read_records(const std::filesystem::path& path, Decode decode) -> std::vector<decltype(decode(Json{}))> {
  std::vector<decltype(decode(Json{}))> out;
  std::size_t line_no = 0;
  for (const auto& row : read_json_lines(path)) {
    ++line_no;
    try {
      out.push_back(decode(row));
    } catch (const DecodeError& e) {
      throw DecodeError(path.string() + ": record " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace cocot::records
