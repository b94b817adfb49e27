#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pgsum/model_config.hpp"
#include "pgsum/tensor.hpp"

namespace pgsum {

// Gate weights for one LSTM, gates stacked in order input, forget,
// candidate, output. w: 4H x (I + H), b: 4H.
struct LstmWeights {
  Tensor w;
  Tensor b;
};

// Alignment parameters. general: w is key_dim x query_dim. concat: w is
// A x (key_dim + query_dim [+ 1 coverage column]), b and v have length A.
// dot uses none.
struct AlignmentWeights {
  Tensor w;
  Tensor b;
  Tensor v;
};

class ModelParameters {
 public:
  // Allocates every tensor the config needs, filled with zeros.
  explicit ModelParameters(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  // U(-scale, scale) in registration order from a 64-bit Mersenne Twister.
  void init_uniform(std::uint64_t seed, double scale = 0.1);

  // Allocated tensors under their checkpoint names, in a fixed order.
  std::vector<std::pair<std::string, Tensor>> named() const;
  std::vector<Tensor> tensors() const;
  // Throws IndexError for an unknown name.
  Tensor get(const std::string& name) const;
  std::size_t count() const;

  void set_requires_grad(bool value);
  void zero_grad();
  // Deep copy with fresh storage.
  ModelParameters clone() const;

  Tensor embedding;  // |V| x d_emb
  LstmWeights enc_fwd;
  LstmWeights enc_bwd;
  Tensor bridge_w;  // D x 2H
  Tensor bridge_b;
  LstmWeights dec;  // input is embedding plus previous attention hidden
  AlignmentWeights attn;
  AlignmentWeights intra;
  Tensor out_w;  // D x output_feed_input
  Tensor out_b;
  Tensor d2v_w;   // |V| x D, absent under weight sharing
  Tensor proj_w;  // d_emb x D, only under weight sharing
  Tensor d2v_b;
  Tensor switch_z;
  Tensor switch_h;
  Tensor switch_e;
  Tensor switch_b;

 private:
  ModelConfig config_;
};

}  // namespace pgsum
