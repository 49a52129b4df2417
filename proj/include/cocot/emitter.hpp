#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cocot/geometry.hpp"
#include "cocot/records.hpp"
#include "cocot/types.hpp"

namespace cocot::emitter {

/// Reasoning-chain generation record: one per chain-referenced region.
struct Stage1Record {
  std::string sample_id;
  std::string image_path;
  BBox region_bbox;
  geometry::PadTransform region_crop_transform;
  std::string question;
  std::string description;
  std::string target_chain_text;
  friend bool operator==(const Stage1Record&, const Stage1Record&) = default;
};

/// Answer-synthesis record.
struct Stage2Record {
  std::string sample_id;
  std::string image_path;
  std::string question;
  std::string chain_text;
  std::string target_answer;
  friend bool operator==(const Stage2Record&, const Stage2Record&) = default;
};

/// Full gold answer list, kept beside the single-target Stage2 records.
struct GoldRecord {
  std::string sample_id;
  std::vector<std::string> answers;
  std::size_t region_count = 0;
  friend bool operator==(const GoldRecord&, const GoldRecord&) = default;
};

/// One Stage1Record per region the chain visits, in step order. Regions the
/// chain never selected emit nothing. Throws UsageError for an invalid chain.
std::vector<Stage1Record> decompose(const GroundedSample& gs, const ReasoningChain& chain,
                                    std::int64_t target = geometry::kDefaultTarget);

/// Target = first gold answer. Throws UsageError on empty chain text.
Stage2Record emit_stage2(const GroundedSample& gs, const std::string& chain_text);

GoldRecord gold_of(const GroundedSample& gs);

/// Reference fine-tuning hyperparameters carried in the manifest for
/// downstream trainers. Nothing here trains a model.
struct TrainingReference {
  double lr_stage1 = 2e-5;
  double lr_stage2 = 1e-5;
  int batch = 64;
  int per_device_batch = 1;
  int gradient_accumulation_steps = 64;
  int epochs = 1;
  std::int64_t image_side = geometry::kDefaultTarget;
  double train_fraction = 0.2;
  std::int64_t test_samples = 500;
};

struct RunSummary {
  std::string stage;
  std::uint64_t seed = 0;
  records::Json config;                     // effective run configuration
  std::vector<std::pair<std::string, std::size_t>> counts;  // name -> count, rendered in order
};

/// Manifest object: stage, seed, config, counts, the training reference fields and a
/// creation timestamp. The timestamp honours SOURCE_DATE_EPOCH when set.
records::Json write_manifest(const RunSummary& summary, const TrainingReference& ref = {});

records::Json encode(const geometry::PadTransform& t);
records::Json encode(const Stage1Record& r);
records::Json encode(const Stage2Record& r);
records::Json encode(const GoldRecord& r);
Stage1Record decode_stage1(const records::Json& j);
Stage2Record decode_stage2(const records::Json& j);
GoldRecord decode_gold(const records::Json& j);

}  // namespace cocot::emitter
