#include "pgsum/repetition.hpp"

#include "pgsum/attention.hpp"
#include "pgsum/errors.hpp"

namespace pgsum {

TemporalResult temporal_attention(const Tensor& scores,
                                  const TemporalHistory& history) {
  if (!scores.defined() || scores.rank() != 1) {
    throw DimensionError("temporal_attention: scores must be a vector");
  }
  TemporalResult r;
  if (history.empty()) {
    r.weights = softmax(scores);
    r.history.log_sum = scores;
    return r;
  }
  if (history.log_sum.shape() != scores.shape()) {
    throw DimensionError("temporal_attention: history length mismatch");
  }
  // alpha_j proportional to exp(s_j) / sum_{k<t} exp(s_kj)
  r.weights = softmax(sub(scores, history.log_sum));
  r.history.log_sum = logaddexp(history.log_sum, scores);
  return r;
}

IntraResult intra_decoder_attention(const AlignmentWeights& weights,
                                    Alignment alignment,
                                    const std::vector<Tensor>& past,
                                    const Tensor& hidden) {
  IntraResult r;
  if (past.empty()) {
    r.context = Tensor::zeros({hidden.size()});
    return r;
  }
  AttentionResult a =
      attend(prepare_attention(weights, alignment, stack(past)), hidden);
  r.weights = a.weights;
  r.context = a.context;
  return r;
}

CoverageState initial_coverage(std::size_t source_length) {
  CoverageState s;
  s.coverage = Tensor::zeros({source_length});
  s.total_loss = Tensor::scalar(0.0);
  return s;
}

CoverageResult coverage_step(const CoverageState& state, const Tensor& alpha) {
  if (!state.coverage.defined() || state.coverage.shape() != alpha.shape()) {
    throw DimensionError("coverage_step: coverage and attention lengths differ");
  }
  for (double u : state.coverage.data()) {
    if (u < 0.0) throw ContractError("coverage_step: negative coverage entry");
  }
  CoverageResult r;
  r.loss = sum(minimum(alpha, state.coverage));
  r.state.coverage = add(state.coverage, alpha);
  r.state.total_loss = add(state.total_loss, r.loss);
  r.state.steps = state.steps + 1;
  return r;
}

}  // namespace pgsum
