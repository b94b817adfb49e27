#include "pgsum/pointer.hpp"

#include "pgsum/errors.hpp"
#include "pgsum/textdata.hpp"

namespace pgsum {

Tensor generation_probability(const ModelParameters& params, const Tensor& z,
                              const Tensor& h, const Tensor& e_prev) {
  if (!params.switch_b.defined()) {
    throw ContractError("generation_probability: model has no pointer switch");
  }
  Tensor s = add(add(dot(params.switch_z, z), dot(params.switch_h, h)),
                 dot(params.switch_e, e_prev));
  return sigmoid(add(s, params.switch_b));
}

ExtendedDistribution extended_distribution(const Tensor& p_vocab,
                                           const Tensor& alpha,
                                           const Tensor& p_gen,
                                           std::span<const int> source_ext_ids,
                                           std::size_t vocab_size,
                                           std::size_t max_oov) {
  if (p_vocab.rank() != 1 || p_vocab.size() != vocab_size) {
    throw DimensionError("extended_distribution: P_vocab has shape " +
                         shape_string(p_vocab.shape()) + ", expected [" +
                         std::to_string(vocab_size) + "]");
  }
  if (alpha.rank() != 1 || alpha.size() != source_ext_ids.size()) {
    throw DimensionError(
        "extended_distribution: attention and source lengths differ");
  }
  if (p_gen.size() != 1) {
    throw DimensionError("extended_distribution: p_gen must be a scalar");
  }
  const std::size_t n = vocab_size + max_oov;
  for (int id : source_ext_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= n) {
      throw IndexError("extended_distribution: source id " +
                       std::to_string(id) + " outside [0, " +
                       std::to_string(n) + ")");
    }
  }
  ExtendedDistribution d;
  d.p_gen = p_gen;
  Tensor gen = pad(mul_scalar(p_vocab, p_gen), n);
  Tensor copy = mul_scalar(alpha, affine(p_gen, -1.0, 1.0));
  d.probs = scatter_add(gen, copy, source_ext_ids);
  return d;
}

std::vector<std::string> replace_unknown(
    const std::vector<std::string>& summary,
    const std::vector<std::vector<double>>& attention,
    const std::vector<std::string>& source) {
  std::vector<std::string> out = summary;
  for (std::size_t t = 0; t < out.size(); ++t) {
    if (out[t] != kUnkToken) continue;
    if (t >= attention.size()) {
      throw ContractError("replace_unknown: no attention record for step " +
                          std::to_string(t));
    }
    const auto& a = attention[t];
    if (source.empty()) continue;
    if (a.size() != source.size()) {
      throw ContractError("replace_unknown: attention length " +
                          std::to_string(a.size()) + " != source length " +
                          std::to_string(source.size()));
    }
    std::size_t best = 0;
    for (std::size_t j = 1; j < a.size(); ++j) {
      if (a[j] > a[best]) best = j;
    }
    out[t] = source[best];
  }
  return out;
}

}  // namespace pgsum
