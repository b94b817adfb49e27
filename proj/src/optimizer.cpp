#include "pgsum/optimizer.hpp"

#include <cmath>

#include "pgsum/errors.hpp"

namespace pgsum {

OptimizerState OptimizerState::for_parameters(const ModelParameters& params,
                                              AdamConfig config) {
  OptimizerState s;
  s.config = config;
  for (const Tensor& t : params.tensors()) {
    s.m.emplace_back(t.size(), 0.0);
    s.v.emplace_back(t.size(), 0.0);
  }
  return s;
}

void adam_step(OptimizerState& opt, ModelParameters& params) {
  auto tensors = params.tensors();
  if (tensors.size() != opt.m.size() || tensors.size() != opt.v.size()) {
    throw ContractError("adam_step: optimizer state does not match model");
  }
  const AdamConfig& c = opt.config;
  opt.t += 1;
  const double t = static_cast<double>(opt.t);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    Tensor& p = tensors[k];
    auto& m = opt.m[k];
    auto& v = opt.v[k];
    if (m.size() != p.size()) {
      throw ContractError("adam_step: moment shape does not match parameter");
    }
    auto theta = p.mutable_data();
    const bool has = p.has_grad();
    auto g = p.grad();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = has ? g[i] : 0.0;
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      theta[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

double gradient_norm(const std::vector<Tensor>& params) {
  double sq = 0.0;
  for (const Tensor& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

double clip_gradients(const std::vector<Tensor>& params, double max_norm) {
  if (!(max_norm > 0.0)) {
    throw ContractError("clip_gradients: max_norm must be positive");
  }
  const double norm = gradient_norm(params);
  // The slack keeps a second application a no-op despite rounding.
  if (!(norm > max_norm * (1.0 + 1e-12))) return 1.0;
  const double factor = max_norm / norm;
  for (Tensor p : params) {
    if (!p.has_grad()) continue;
    for (double& g : p.mutable_grad()) g *= factor;
  }
  return factor;
}

}  // namespace pgsum
