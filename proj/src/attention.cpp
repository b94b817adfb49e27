#include "pgsum/attention.hpp"

#include "pgsum/errors.hpp"

namespace pgsum {

AttentionMemory prepare_attention(const AlignmentWeights& weights,
                                  Alignment alignment, const Tensor& keys,
                                  bool coverage_column) {
  if (!keys.defined() || keys.rank() != 2 || keys.dim(0) == 0) {
    throw DimensionError("attention keys must be a nonempty J x d matrix");
  }
  AttentionMemory m;
  m.alignment = alignment;
  m.keys = keys;
  const std::size_t dk = keys.dim(1);
  switch (alignment) {
    case Alignment::kDot:
      break;
    case Alignment::kGeneral:
      if (!weights.w.defined() || weights.w.dim(0) != dk) {
        throw DimensionError("general alignment weight does not match key dim " +
                             std::to_string(dk));
      }
      m.w_query = weights.w;
      break;
    case Alignment::kConcat: {
      if (!weights.w.defined() || !weights.b.defined() || !weights.v.defined()) {
        throw DimensionError("concat alignment needs W, b and v");
      }
      const std::size_t cols = weights.w.dim(1);
      const std::size_t q_end = coverage_column ? cols - 1 : cols;
      if (q_end <= dk) {
        throw DimensionError("concat alignment weight too narrow for keys");
      }
      m.key_proj = matmul(keys, transpose(slice_cols(weights.w, 0, dk)));
      m.w_query = slice_cols(weights.w, dk, q_end);
      if (coverage_column) {
        m.w_cov = reshape(slice_cols(weights.w, q_end, cols),
                          {1, weights.w.dim(0)});
      }
      m.b = weights.b;
      m.v = weights.v;
      break;
    }
  }
  return m;
}

Tensor alignment_scores(const AttentionMemory& memory, const Tensor& query,
                        const Tensor& coverage) {
  const std::size_t J = memory.keys.dim(0);
  switch (memory.alignment) {
    case Alignment::kDot:
      if (coverage.defined()) {
        throw ContractError("coverage is only defined for concat alignment");
      }
      if (query.rank() != 1 || query.dim(0) != memory.keys.dim(1)) {
        throw ConfigError("dot alignment needs equal key and query dims (" +
                          std::to_string(memory.keys.dim(1)) + " vs " +
                          shape_string(query.shape()) + ")");
      }
      return matmul(memory.keys, query);
    case Alignment::kGeneral:
      if (coverage.defined()) {
        throw ContractError("coverage is only defined for concat alignment");
      }
      return matmul(memory.keys, matmul(memory.w_query, query));
    case Alignment::kConcat: {
      if (query.rank() != 1 || query.dim(0) != memory.w_query.dim(1)) {
        throw DimensionError("concat alignment query dim " +
                             shape_string(query.shape()) +
                             " does not fit weight");
      }
      Tensor pre = add_rowwise(memory.key_proj,
                               add(matmul(memory.w_query, query), memory.b));
      if (coverage.defined()) {
        if (!memory.w_cov.defined()) {
          throw ContractError("alignment has no coverage column");
        }
        if (coverage.size() != J) {
          throw DimensionError("coverage length " +
                               std::to_string(coverage.size()) +
                               " != source length " + std::to_string(J));
        }
        pre = add(pre, matmul(reshape(coverage, {J, 1}), memory.w_cov));
      }
      return matmul(tanh(pre), memory.v);
    }
  }
  throw ContractError("unknown alignment");
}

Tensor attention_context(const AttentionMemory& memory, const Tensor& weights) {
  return matmul(weights, memory.keys);
}

AttentionResult attend(const AttentionMemory& memory, const Tensor& query,
                       const Tensor& coverage) {
  AttentionResult r;
  r.scores = alignment_scores(memory, query, coverage);
  r.weights = softmax(r.scores);
  r.context = attention_context(memory, r.weights);
  return r;
}

AttentionResult attend(const AlignmentWeights& weights, Alignment alignment,
                       const Tensor& keys, const Tensor& query,
                       const Tensor& coverage) {
  return attend(
      prepare_attention(weights, alignment, keys, coverage.defined()), query,
      coverage);
}

}  // namespace pgsum
