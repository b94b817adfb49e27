#pragma once

#include <cstdint>
#include <vector>

#include "pgsum/parameters.hpp"
#include "pgsum/tensor.hpp"

namespace pgsum {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moments follow ModelParameters::named() order and shapes.
struct OptimizerState {
  AdamConfig config;
  std::uint64_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static OptimizerState for_parameters(const ModelParameters& params,
                                       AdamConfig config = {});
};

// One bias-corrected Adam update from the current gradients. A parameter
// without a gradient buffer counts as a zero gradient.
void adam_step(OptimizerState& opt, ModelParameters& params);

// Rescales all gradients by max_norm / g when their global L2 norm g exceeds
// max_norm. Returns the factor applied (1 when untouched).
double clip_gradients(const std::vector<Tensor>& params, double max_norm = 2.0);
double gradient_norm(const std::vector<Tensor>& params);

}  // namespace pgsum
