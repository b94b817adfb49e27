#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pgsum/attention.hpp"
#include "pgsum/parameters.hpp"
#include "pgsum/repetition.hpp"
#include "pgsum/tensor.hpp"

namespace pgsum {

struct LstmState {
  Tensor h;
  Tensor c;
};

LstmState lstm_step(const LstmWeights& weights, const Tensor& x,
                    const Tensor& h_prev, const Tensor& c_prev);

struct EncoderOutput {
  Tensor states;  // J x 2H, forward then backward half
  Tensor h0;      // bridged decoder hidden
  Tensor c0;      // forward final cell, backward first cell
};

// Throws ContractError on an empty source. Ids outside [0, |V|) read UNK.
EncoderOutput encode(const ModelParameters& params,
                     std::span<const int> source_ids);

// W_z(z_e, [z_d], h) + b_z; pass an undefined z_d when intra-decoder is off.
Tensor attention_hidden(const ModelParameters& params, const Tensor& z_e,
                        const Tensor& z_d, const Tensor& h);

// |V| x D output matrix; tanh(E W_proj) under weight sharing.
Tensor output_matrix(const ModelParameters& params);
Tensor vocab_distribution(const ModelParameters& params,
                          const Tensor& attn_hidden);
Tensor vocab_distribution(const Tensor& out_matrix, const Tensor& bias,
                          const Tensor& attn_hidden);

// Everything the decoder reuses across steps for one source article.
struct SourceContext {
  EncoderOutput encoder;
  AttentionMemory memory;
  Tensor out_matrix;
  std::vector<int> source_ext_ids;
  std::size_t oov_count = 0;

  std::size_t length() const { return source_ext_ids.size(); }
};

// `source_ext_ids` defaults to `source_ids` when empty.
SourceContext prepare_source(const ModelParameters& params,
                             std::span<const int> source_ids,
                             std::span<const int> source_ext_ids = {},
                             std::size_t oov_count = 0);

struct DecoderState {
  Tensor h;
  Tensor c;
  Tensor feed;  // previous attention hidden, zeros before the first step
  TemporalHistory temporal;
  std::vector<Tensor> past;  // decoder hiddens of earlier steps
  CoverageState coverage;
  std::size_t step = 0;
};

DecoderState initial_state(const ModelParameters& params,
                           const SourceContext& source);

struct StepOutput {
  DecoderState state;
  Tensor scores;     // raw encoder alignment scores
  Tensor attention;  // encoder attention weights actually used
  Tensor context;
  Tensor intra_attention;  // undefined on the first step or when off
  Tensor intra_context;
  Tensor attn_hidden;
  Tensor p_vocab;
  Tensor p_gen;          // pointer only
  Tensor distribution;   // extended under the pointer, else p_vocab
  Tensor coverage_loss;  // coverage only
};

// Size of StepOutput::distribution for this source.
std::size_t output_size(const ModelParameters& params,
                        const SourceContext& source);

// Embedding fed for a previous token; ids outside the fixed vocabulary map to
// UNK.
Tensor input_embedding(const ModelParameters& params, int token);

StepOutput decoder_step(const ModelParameters& params,
                        const SourceContext& source, const DecoderState& state,
                        int prev_token);
// Same step with an explicit input embedding (fused inputs).
StepOutput decoder_step_embedded(const ModelParameters& params,
                                 const SourceContext& source,
                                 const DecoderState& state,
                                 const Tensor& embedding);

}  // namespace pgsum
