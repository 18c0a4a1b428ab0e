#pragma once

#include "c2t/tensor.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace c2t::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moment estimates mirror the parameter list they were created for.
struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

// One bias-corrected Adam update using each parameter's accumulated
// gradient (a parameter without a gradient is treated as zero gradient).
// Initialises the moments on the first call; throws when the state was
// built for differently shaped parameters.
void adam_step(std::span<Tensor> params, AdamState& state);

// Explicit-gradient form used by tests and callers outside the graph.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state);

// Max over coordinates of |analytic - central difference| /
// max(1, |analytic|, |numeric|) for a scalar function of one tensor.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Matrix& x, double h = 1e-5);

// Same measure over every coordinate of a parameter set, with `loss`
// re-evaluated after in-place perturbation of each coordinate.
double grad_check(const std::function<Tensor()>& loss, std::span<Tensor> params, double h = 1e-5);

}  // namespace c2t::nn
