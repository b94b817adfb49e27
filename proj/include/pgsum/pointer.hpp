#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pgsum/parameters.hpp"
#include "pgsum/tensor.hpp"

namespace pgsum {

// sigmoid(w_z . z + w_h . h + w_e . e_prev + b), shape {1}.
Tensor generation_probability(const ModelParameters& params, const Tensor& z,
                              const Tensor& h, const Tensor& e_prev);

struct ExtendedDistribution {
  Tensor probs;  // length vocab_size + max_oov
  Tensor p_gen;
};

// p_gen * P_vocab (zero beyond |V|) plus (1 - p_gen) * alpha scattered onto
// the source tokens' extended ids. Throws IndexError for ids outside
// [0, vocab_size + max_oov).
ExtendedDistribution extended_distribution(const Tensor& p_vocab,
                                           const Tensor& alpha,
                                           const Tensor& p_gen,
                                           std::span<const int> source_ext_ids,
                                           std::size_t vocab_size,
                                           std::size_t max_oov);

// Replaces each UNK at step t by the source token with the largest
// attention[t] (first one on ties). Throws ContractError when a step lacks
// an attention record.
std::vector<std::string> replace_unknown(
    const std::vector<std::string>& summary,
    const std::vector<std::vector<double>>& attention,
    const std::vector<std::string>& source);

}  // namespace pgsum
