#pragma once

#include <vector>

#include "pgsum/model_config.hpp"
#include "pgsum/parameters.hpp"
#include "pgsum/tensor.hpp"

namespace pgsum {

// log sum_{k<t} exp(s_k) per source position; undefined before the first
// step.
struct TemporalHistory {
  Tensor log_sum;
  bool empty() const { return !log_sum.defined(); }
};

struct TemporalResult {
  Tensor weights;
  TemporalHistory history;
};

// Normalizes exp(s) by each position's accumulated past exp(s) (plain
// exp(s) on the first step), then renormalizes across positions.
TemporalResult temporal_attention(const Tensor& scores,
                                  const TemporalHistory& history);

struct IntraResult {
  Tensor weights;  // undefined when there is no past state
  Tensor context;  // zeros when there is no past state
};

// Attention of `hidden` over the previous decoder hiddens.
IntraResult intra_decoder_attention(const AlignmentWeights& weights,
                                    Alignment alignment,
                                    const std::vector<Tensor>& past,
                                    const Tensor& hidden);

struct CoverageState {
  Tensor coverage;    // u, length J
  Tensor total_loss;  // scalar sum of step losses so far
  std::size_t steps = 0;
};

CoverageState initial_coverage(std::size_t source_length);

struct CoverageResult {
  Tensor loss;  // sum_j min(alpha_j, u_j)
  CoverageState state;
};

// Throws ContractError if the incoming coverage has a negative entry.
CoverageResult coverage_step(const CoverageState& state, const Tensor& alpha);

}  // namespace pgsum
