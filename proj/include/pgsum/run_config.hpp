#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pgsum/decoding.hpp"
#include "pgsum/model_config.hpp"
#include "pgsum/textdata.hpp"
#include "pgsum/training.hpp"

namespace pgsum {

enum class DecodeMode { kGreedy, kBeam, kDiverse };

std::string decode_mode_name(DecodeMode m);
DecodeMode parse_decode_mode(const std::string& name);

// Every knob of a run. Text form is UTF-8 `key = value` lines with `#`
// comments; later assignments win.
struct RunConfig {
  ModelConfig model;
  TrainerOptions trainer;
  EncodeLimits limits;
  std::size_t epochs = 10;
  double init_scale = 0.1;

  DecodeMode decode_mode = DecodeMode::kBeam;
  BeamOptions beam;
  std::size_t groups = 1;
  double diversity_lambda = 0.0;

  std::string train_path;
  std::string dev_path;
  std::string vocab_path;
  std::string input_path;
  std::string checkpoint_path;
  std::string resume_path;
  std::string output_dir = ".";

  RunConfig();

  // Throws ConfigError for an unknown key or a malformed value.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();
  static std::string help(const std::string& key);

  void read(std::istream& in);
  // Throws MissingFileError when the file cannot be opened.
  void read_file(const std::string& path);
  // Every key with its resolved value, one `key = value` per line.
  std::string to_text() const;

  // Model, schedule and decoding invariants; throws ConfigError.
  void validate() const;
};

}  // namespace pgsum
