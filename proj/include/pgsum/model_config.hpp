#pragma once

#include <cstddef>
#include <string>

namespace pgsum {

enum class Alignment { kDot, kGeneral, kConcat };

std::string alignment_name(Alignment a);
// Accepts "dot", "general", "concat" (case-insensitive). Throws ConfigError.
Alignment parse_alignment(const std::string& name);

struct ModelConfig {
  std::size_t d_emb = 128;
  std::size_t d_hidden = 256;  // per encoder direction
  std::size_t vocab_size = 50000;
  // Width of the concat alignment layer; 0 means decoder_dim().
  std::size_t d_align = 0;
  Alignment alignment = Alignment::kGeneral;
  bool pointer_gen = false;
  bool temporal_attn = false;
  bool intra_decoder = false;
  bool weight_sharing = false;
  bool coverage = false;
  // Lets temporal attention and coverage run together.
  bool allow_temporal_with_coverage = false;

  std::size_t encoder_dim() const { return 2 * d_hidden; }
  // The decoder cell is seeded with both encoder cells, so it is 2*d_hidden.
  std::size_t decoder_dim() const { return 2 * d_hidden; }
  std::size_t align_dim() const { return d_align ? d_align : decoder_dim(); }
  // Width of the attention-hidden input: z^e, optional z^d, then h^d.
  std::size_t output_feed_input() const;

  // Throws ConfigError naming the first violated invariant.
  void validate() const;

  // Letter plus five flags, e.g. "C10101" for concat, pointer, intra-decoder
  // and coverage.
  std::string model_id() const;
  // Overwrites alignment and flags from a model id.
  void apply_model_id(const std::string& id);

  std::string to_json() const;
  // Throws ConfigError on malformed input or unknown alignment.
  static ModelConfig from_json(const std::string& text);

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace pgsum
