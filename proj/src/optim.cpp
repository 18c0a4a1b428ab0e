#include "c2t/optim.hpp"

#include <algorithm>
#include <cmath>

namespace c2t::nn {

namespace {

void ensure_state(const std::vector<const Matrix*>& params, AdamState& state) {
  if (state.m.empty() && state.v.empty()) {
    for (const Matrix* p : params) {
      state.m.push_back(Matrix::Zero(p->rows(), p->cols()));
      state.v.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
    return;
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw Error("adam_step: state holds " + std::to_string(state.m.size()) +
                " moment tensors for " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].rows() != params[i]->rows() || state.m[i].cols() != params[i]->cols()) {
      throw Error("adam_step: shape mismatch at parameter " + std::to_string(i));
    }
  }
}

void update(Matrix& p, const Matrix* g, Matrix& m, Matrix& v, const AdamConfig& c, double bc1,
            double bc2) {
  if (!g) {
    m *= c.beta1;
    v *= c.beta2;
  } else {
    m = c.beta1 * m + (1.0 - c.beta1) * *g;
    v = c.beta2 * v + (1.0 - c.beta2) * g->cwiseAbs2();
  }
  p.array() -= c.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.eps);
}

}  // namespace

void adam_step(std::span<Tensor> params, AdamState& state) {
  std::vector<Matrix*> values;
  for (auto& t : params) values.push_back(&t.mutable_value());
  ensure_state(std::vector<const Matrix*>(values.begin(), values.end()), state);
  state.step += 1;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix* g = params[i].has_grad() ? &params[i].grad() : nullptr;
    update(*values[i], g, state.m[i], state.v[i], c, bc1, bc2);
  }
}

void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state) {
  if (params.size() != grads.size()) throw Error("adam_step: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i].rows() || params[i]->cols() != grads[i].cols()) {
      throw Error("adam_step: gradient shape mismatch at parameter " + std::to_string(i));
    }
  }
  std::vector<const Matrix*> cp(params.begin(), params.end());
  ensure_state(cp, state);
  state.step += 1;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    update(*params[i], &grads[i], state.m[i], state.v[i], c, bc1, bc2);
  }
}

namespace {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

}  // namespace

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Matrix& x, double h) {
  Tensor input = Tensor::parameter(x);
  f(input).backward();
  const Matrix analytic = input.has_grad() ? input.grad() : Matrix::Zero(x.rows(), x.cols());

  NoGradGuard guard;
  Matrix probe = x;
  double worst = 0.0;
  for (Index i = 0; i < probe.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + h;
    const double up = f(Tensor::constant(probe)).item();
    probe.data()[i] = orig - h;
    const double down = f(Tensor::constant(probe)).item();
    probe.data()[i] = orig;
    worst = std::max(worst, relative_error(analytic.data()[i], (up - down) / (2.0 * h)));
  }
  return worst;
}

double grad_check(const std::function<Tensor()>& loss, std::span<Tensor> params, double h) {
  for (auto& p : params) p.zero_grad();
  loss().backward();
  std::vector<Matrix> analytic;
  for (auto& p : params) {
    analytic.push_back(p.has_grad() ? p.grad() : Matrix::Zero(p.rows(), p.cols()));
  }

  NoGradGuard guard;
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& value = params[k].mutable_value();
    for (Index i = 0; i < value.size(); ++i) {
      const double orig = value.data()[i];
      value.data()[i] = orig + h;
      const double up = loss().item();
      value.data()[i] = orig - h;
      const double down = loss().item();
      value.data()[i] = orig;
      worst = std::max(worst, relative_error(analytic[k].data()[i], (up - down) / (2.0 * h)));
    }
  }
  for (auto& p : params) p.zero_grad();
  return worst;
}

}  // namespace c2t::nn
