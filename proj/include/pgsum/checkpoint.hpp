#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "pgsum/model_config.hpp"
#include "pgsum/optimizer.hpp"
#include "pgsum/parameters.hpp"

namespace pgsum {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainingProgress {
  std::uint64_t epoch = 0;  // completed epochs
  std::uint64_t step = 0;   // completed updates
};

struct Checkpoint {
  ModelParameters params;
  OptimizerState optimizer;
  TrainingProgress progress;
  std::string extra_json = "null";  // caller-owned state, echoed verbatim
};

// Layout: "NATSCKPT", u32 version, u64 length + UTF-8 JSON block (model
// config, progress, Adam config and step, extra), then one record per
// tensor: u32 name length, name, u32 rank, u64 dims, little-endian doubles.
// Adam moments are stored as "adam.m/<name>" and "adam.v/<name>".
void save_checkpoint(std::ostream& out, const ModelParameters& params,
                     const OptimizerState& opt, const TrainingProgress& progress,
                     const std::string& extra_json = "null");
void save_checkpoint_file(const std::string& path,
                          const ModelParameters& params,
                          const OptimizerState& opt,
                          const TrainingProgress& progress,
                          const std::string& extra_json = "null");

// Throws DataError for a bad magic, unsupported version or truncated file,
// and ConfigError when `expected` is given and differs from the stored model
// config.
Checkpoint load_checkpoint(std::istream& in,
                           const ModelConfig* expected = nullptr);
Checkpoint load_checkpoint_file(const std::string& path,
                                const ModelConfig* expected = nullptr);

}  // namespace pgsum
