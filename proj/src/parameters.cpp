#include "pgsum/parameters.hpp"

#include <random>

#include "pgsum/errors.hpp"

namespace pgsum {

namespace {

LstmWeights lstm_weights(std::size_t input, std::size_t hidden) {
  return {Tensor::zeros({4 * hidden, input + hidden}),
          Tensor::zeros({4 * hidden})};
}

AlignmentWeights alignment_weights(Alignment a, std::size_t key,
                                   std::size_t query, std::size_t width,
                                   bool coverage) {
  switch (a) {
    case Alignment::kDot:
      return {};
    case Alignment::kGeneral:
      return {Tensor::zeros({key, query}), {}, {}};
    case Alignment::kConcat:
      return {Tensor::zeros({width, key + query + (coverage ? 1 : 0)}),
              Tensor::zeros({width}), Tensor::zeros({width})};
  }
  return {};
}

void push(std::vector<std::pair<std::string, Tensor>>& out,
          const std::string& name, const Tensor& t) {
  if (t.defined()) out.emplace_back(name, t);
}

}  // namespace

ModelParameters::ModelParameters(const ModelConfig& config) : config_(config) {
  config_.validate();
  const std::size_t V = config_.vocab_size, E = config_.d_emb,
                    H = config_.d_hidden, D = config_.decoder_dim(),
                    K = config_.encoder_dim(), A = config_.align_dim();
  embedding = Tensor::zeros({V, E});
  enc_fwd = lstm_weights(E, H);
  enc_bwd = lstm_weights(E, H);
  bridge_w = Tensor::zeros({D, 2 * H});
  bridge_b = Tensor::zeros({D});
  dec = lstm_weights(E + D, D);
  attn = alignment_weights(config_.alignment, K, D, A, config_.coverage);
  if (config_.intra_decoder) {
    intra = alignment_weights(config_.alignment, D, D, A, false);
  }
  out_w = Tensor::zeros({D, config_.output_feed_input()});
  out_b = Tensor::zeros({D});
  if (config_.weight_sharing) {
    proj_w = Tensor::zeros({E, D});
  } else {
    d2v_w = Tensor::zeros({V, D});
  }
  d2v_b = Tensor::zeros({V});
  if (config_.pointer_gen) {
    switch_z = Tensor::zeros({K});
    switch_h = Tensor::zeros({D});
    switch_e = Tensor::zeros({E});
    switch_b = Tensor::zeros({1});
  }
}

std::vector<std::pair<std::string, Tensor>> ModelParameters::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  push(out, "embedding", embedding);
  push(out, "enc_fwd.W", enc_fwd.w);
  push(out, "enc_fwd.b", enc_fwd.b);
  push(out, "enc_bwd.W", enc_bwd.w);
  push(out, "enc_bwd.b", enc_bwd.b);
  push(out, "bridge.W", bridge_w);
  push(out, "bridge.b", bridge_b);
  push(out, "dec.W", dec.w);
  push(out, "dec.b", dec.b);
  push(out, "attn.W", attn.w);
  push(out, "attn.b", attn.b);
  push(out, "attn.v", attn.v);
  push(out, "intra.W", intra.w);
  push(out, "intra.b", intra.b);
  push(out, "intra.v", intra.v);
  push(out, "out_feed.W", out_w);
  push(out, "out_feed.b", out_b);
  push(out, "d2v.W", d2v_w);
  push(out, "proj.W", proj_w);
  push(out, "d2v.b", d2v_b);
  push(out, "switch.wz", switch_z);
  push(out, "switch.wh", switch_h);
  push(out, "switch.we", switch_e);
  push(out, "switch.b", switch_b);
  return out;
}

std::vector<Tensor> ModelParameters::tensors() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

Tensor ModelParameters::get(const std::string& name) const {
  for (auto& [n, t] : named()) {
    if (n == name) return t;
  }
  throw IndexError("no parameter named '" + name + "'");
}

std::size_t ModelParameters::count() const {
  std::size_t n = 0;
  for (auto& [name, t] : named()) n += t.size();
  return n;
}

void ModelParameters::init_uniform(std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  for (auto& [name, t] : named()) {
    for (double& x : Tensor(t).mutable_data()) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      x = (2.0 * u - 1.0) * scale;
    }
  }
}

void ModelParameters::set_requires_grad(bool value) {
  for (auto& [name, t] : named()) Tensor(t).set_requires_grad(value);
}

void ModelParameters::zero_grad() {
  for (auto& [name, t] : named()) Tensor(t).zero_grad();
}

ModelParameters ModelParameters::clone() const {
  ModelParameters copy(config_);
  auto src = named();
  auto dst = copy.named();
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto from = src[i].second.data();
    auto to = Tensor(dst[i].second).mutable_data();
    std::copy(from.begin(), from.end(), to.begin());
    Tensor(dst[i].second).set_requires_grad(src[i].second.requires_grad());
  }
  return copy;
}

}  // namespace pgsum
