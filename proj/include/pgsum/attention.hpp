#pragma once

#include "pgsum/model_config.hpp"
#include "pgsum/parameters.hpp"
#include "pgsum/tensor.hpp"

namespace pgsum {

// Keys with the query-independent part of the alignment precomputed, so a
// memory can be scored against many queries.
struct AttentionMemory {
  Alignment alignment = Alignment::kDot;
  Tensor keys;       // J x d_k
  Tensor key_proj;   // concat: J x A
  Tensor w_query;    // concat: A x d_q; general: d_k x d_q
  Tensor w_cov;      // concat with coverage: 1 x A
  Tensor b;
  Tensor v;
};

// `coverage_column`: the last column of a concat weight scores coverage.
AttentionMemory prepare_attention(const AlignmentWeights& weights,
                                  Alignment alignment, const Tensor& keys,
                                  bool coverage_column = false);

// Raw alignment scores, one per key. `coverage` is only accepted by a concat
// memory prepared with a coverage column.
Tensor alignment_scores(const AttentionMemory& memory, const Tensor& query,
                        const Tensor& coverage = Tensor());

struct AttentionResult {
  Tensor scores;
  Tensor weights;
  Tensor context;
};

// Context from already normalized weights: sum_j weights_j * keys_j.
Tensor attention_context(const AttentionMemory& memory, const Tensor& weights);

AttentionResult attend(const AttentionMemory& memory, const Tensor& query,
                       const Tensor& coverage = Tensor());
AttentionResult attend(const AlignmentWeights& weights, Alignment alignment,
                       const Tensor& keys, const Tensor& query,
                       const Tensor& coverage = Tensor());

}  // namespace pgsum
