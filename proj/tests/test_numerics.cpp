#include "c2t/container.hpp"
#include "c2t/optim.hpp"
#include "c2t/rng.hpp"
#include "c2t/tensor.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace c2t;
using namespace c2t::nn;
using c2t::testing::random_matrix;

namespace {

// Reduces an op output to a scalar through fixed random weights so every
// output coordinate contributes a distinct gradient.
Tensor weighted_sum(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(y, Tensor::constant(random_matrix(rng, y.rows(), y.cols()))));
}

double check_unary(const std::function<Tensor(const Tensor&)>& op, const Matrix& x, std::uint64_t seed) {
  return grad_check([&](const Tensor& t) { return weighted_sum(op(t), seed); }, x);
}

double check_params(const std::function<Tensor(std::span<Tensor>)>& op, std::vector<Tensor> params,
                    std::uint64_t seed) {
  return grad_check([&] { return weighted_sum(op(params), seed); }, params);
}

constexpr int kInstances = 20;
constexpr double kTol = 1e-4;

}  // namespace

TEST_CASE("softmax examples") {
  Matrix x(1, 4);
  x << 0, 0, 0, 0;
  const Matrix s = softmax(Tensor::constant(x)).value();
  for (int i = 0; i < 4; ++i) CHECK(s(0, i) == doctest::Approx(0.25).epsilon(1e-15));

  Matrix y(1, 2);
  y << 0, std::log(2.0);
  const Matrix t = softmax(Tensor::constant(y)).value();
  CHECK(std::abs(t(0, 0) - 1.0 / 3.0) < 1e-15);
  CHECK(std::abs(t(0, 1) - 2.0 / 3.0) < 1e-15);
}

TEST_CASE("softmax rows sum to one and are shift invariant") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix x = random_matrix(rng, 5, 7, 4.0);
    const double c = rng.uniform(-100.0, 100.0);
    const Matrix a = softmax(Tensor::constant(x)).value();
    const Matrix b = softmax(Tensor::constant((x.array() + c).matrix())).value();
    for (Index r = 0; r < a.rows(); ++r) {
      CHECK(std::abs(a.row(r).sum() - 1.0) < 1e-12);
      Index ia, ib;
      a.row(r).maxCoeff(&ia);
      b.row(r).maxCoeff(&ib);
      CHECK(ia == ib);
    }
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(a.minCoeff() > 0.0);
    CHECK(a.maxCoeff() <= 1.0);
  }
}

TEST_CASE("softmax rejects non-finite input") {
  Matrix x(1, 3);
  x << 0, std::nan(""), 1;
  CHECK_THROWS_WITH_AS(softmax(Tensor::constant(x)), doctest::Contains("non-finite input"), Error);
  x(0, 1) = INFINITY;
  CHECK_THROWS_AS(log_softmax(Tensor::constant(x)), Error);
}

TEST_CASE("layer_norm examples") {
  const Tensor gain = Tensor::constant(Matrix::Ones(1, 3));
  const Tensor bias = Tensor::constant(Matrix::Zero(1, 3));
  const Matrix c = Matrix::Constant(1, 3, 4.5);
  CHECK(layer_norm(Tensor::constant(c), gain, bias, 1e-5).value().cwiseAbs().maxCoeff() == 0.0);

  Matrix x(1, 2);
  x << 1, -1;
  const Matrix y = layer_norm(Tensor::constant(x), Tensor::constant(Matrix::Ones(1, 2)),
                              Tensor::constant(Matrix::Zero(1, 2)), 1e-12)
                       .value();
  CHECK(std::abs(y(0, 0) - 1.0) < 1e-10);
  CHECK(std::abs(y(0, 1) + 1.0) < 1e-10);

  Rng rng(5);
  const Matrix r = random_matrix(rng, 6, 16, 3.0);
  const Matrix z = layer_norm(Tensor::constant(r), Tensor::constant(Matrix::Ones(1, 16)),
                              Tensor::constant(Matrix::Zero(1, 16)), 1e-12)
                       .value();
  for (Index i = 0; i < z.rows(); ++i) {
    const double mean = z.row(i).mean();
    const double var = (z.row(i).array() - mean).square().mean();
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-6);
  }
}

TEST_CASE("grad_check on x squared") {
  Matrix x(1, 1);
  x << 3.0;
  const double err = grad_check([](const Tensor& t) { return sum(mul(t, t)); }, x);
  CHECK(err < 1e-8);
  Tensor p = Tensor::parameter(x);
  sum(mul(p, p)).backward();
  CHECK(p.grad()(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("grad_check cross-entropy of an affine map") {
  Rng rng(21);
  for (int i = 0; i < kInstances; ++i) {
    const Matrix w = random_matrix(rng, 6, 5);
    const Matrix x = random_matrix(rng, 4, 6);
    const std::vector<int> targets = {0, 3, 4, 1};
    const double err = grad_check(
        [&](const Tensor& t) { return cross_entropy(matmul(t, Tensor::constant(w)), targets); }, x);
    CHECK(err < 1e-6);
  }
}

TEST_CASE("unary ops pass grad_check") {
  Rng rng(1);
  const std::vector<std::pair<const char*, std::function<Tensor(const Tensor&)>>> ops = {
      {"transpose", [](const Tensor& t) { return transpose(t); }},
      {"scale", [](const Tensor& t) { return scale(t, -1.7); }},
      {"relu", [](const Tensor& t) { return relu(t); }},
      {"softmax", [](const Tensor& t) { return softmax(t); }},
      {"log_softmax", [](const Tensor& t) { return log_softmax(t); }},
      {"slice_cols", [](const Tensor& t) { return slice_cols(t, 1, 3); }},
      {"slice_rows", [](const Tensor& t) { return slice_rows(t, 2, 2); }},
      {"sum", [](const Tensor& t) { return sum(t); }},
      {"mean", [](const Tensor& t) { return mean(t); }},
      {"add_constant", [](const Tensor& t) { return add_constant(t, Matrix::Constant(t.rows(), t.cols(), 0.3)); }},
      {"self mul", [](const Tensor& t) { return mul(t, t); }},
      {"cross_entropy",
       [](const Tensor& t) {
         const std::vector<int> y = {1, -1, 4, 0, 2};
         return cross_entropy(t, y, -1, 0.1);
       }},
      {"dropout",
       [](const Tensor& t) {
         Rng r(99);
         return dropout(t, 0.3, r);
       }},
  };
  for (const auto& [name, op] : ops) {
    double worst = 0.0;
    for (int i = 0; i < kInstances; ++i) worst = std::max(worst, check_unary(op, random_matrix(rng, 5, 5), i));
    INFO(name);
    CHECK(worst < kTol);
  }
}

TEST_CASE("binary and n-ary ops pass grad_check") {
  Rng rng(2);
  for (int i = 0; i < kInstances; ++i) {
    const auto seed = static_cast<std::uint64_t>(i);
    auto p = [&](Index r, Index c) { return Tensor::parameter(random_matrix(rng, r, c)); };
    CHECK(check_params([](std::span<Tensor> t) { return matmul(t[0], t[1]); }, {p(3, 4), p(4, 5)}, seed) < kTol);
    CHECK(check_params([](std::span<Tensor> t) { return matmul_nt(t[0], t[1]); }, {p(3, 4), p(5, 4)}, seed) < kTol);
    CHECK(check_params([](std::span<Tensor> t) { return add(t[0], t[1]); }, {p(3, 4), p(3, 4)}, seed) < kTol);
    CHECK(check_params([](std::span<Tensor> t) { return sub(t[0], t[1]); }, {p(3, 4), p(3, 4)}, seed) < kTol);
    CHECK(check_params([](std::span<Tensor> t) { return mul(t[0], t[1]); }, {p(3, 4), p(3, 4)}, seed) < kTol);
    CHECK(check_params([](std::span<Tensor> t) { return add_row(t[0], t[1]); }, {p(3, 4), p(1, 4)}, seed) < kTol);
    CHECK(check_params([](std::span<Tensor> t) { return layer_norm(t[0], t[1], t[2], 1e-5); },
                       {p(4, 6), p(1, 6), p(1, 6)}, seed) < kTol);
    CHECK(check_params([](std::span<Tensor> t) { return concat_cols(t); }, {p(3, 2), p(3, 4), p(3, 1)}, seed) <
          kTol);
    CHECK(check_params([](std::span<Tensor> t) { return concat_rows(t); }, {p(2, 3), p(4, 3)}, seed) < kTol);
    CHECK(check_params(
              [](std::span<Tensor> t) {
                const std::vector<int> ids = {2, 0, 2, 4};
                return gather_rows(t[0], ids);
              },
              {p(5, 3)}, seed) < kTol);
    CHECK(check_params([](std::span<Tensor> t) { return attention(t[0], t[1], t[2], 2, nullptr); },
                       {p(3, 4), p(5, 4), p(5, 6)}, seed) < kTol);
    const Mask causal = model::causal_mask(4);
    CHECK(check_params([&](std::span<Tensor> t) { return attention(t[0], t[1], t[2], 2, &causal); },
                       {p(4, 4), p(4, 4), p(4, 4)}, seed) < kTol);
  }
}

TEST_CASE("attention special cases") {
  Rng rng(3);
  std::vector<Matrix> w;
  attention(Tensor::constant(random_matrix(rng, 1, 4)), Tensor::constant(random_matrix(rng, 1, 4)),
            Tensor::constant(random_matrix(rng, 1, 4)), 2, nullptr, &w);
  CHECK(w.size() == 2);
  CHECK(w[0](0, 0) == 1.0);
  CHECK(w[1](0, 0) == 1.0);

  const Matrix key_row = random_matrix(rng, 1, 4);
  Matrix keys(5, 4);
  for (int i = 0; i < 5; ++i) keys.row(i) = key_row;
  attention(Tensor::constant(random_matrix(rng, 3, 4)), Tensor::constant(keys),
            Tensor::constant(random_matrix(rng, 5, 4)), 1, nullptr, &w);
  CHECK((w[0].array() - 0.2).abs().maxCoeff() < 1e-15);

  Mask none = Mask::Constant(2, 3, false);
  none(0, 1) = true;
  CHECK_THROWS_WITH_AS(attention(Tensor::constant(random_matrix(rng, 2, 4)), Tensor::constant(random_matrix(rng, 3, 4)),
                                 Tensor::constant(random_matrix(rng, 3, 4)), 2, &none),
                       doctest::Contains("query with no attendable keys"), Error);
}

TEST_CASE("causal attention ignores later positions bit for bit") {
  Rng rng(4);
  const Mask causal = model::causal_mask(6);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix x = random_matrix(rng, 6, 8);
    const Matrix base = attention(Tensor::constant(x), Tensor::constant(x), Tensor::constant(x), 2, &causal).value();
    const Index j = 1 + static_cast<Index>(rng.below(5));
    x.row(j) = random_matrix(rng, 1, 8);
    const Matrix moved = attention(Tensor::constant(x), Tensor::constant(x), Tensor::constant(x), 2, &causal).value();
    CHECK(base.topRows(j) == moved.topRows(j));
    CHECK(base.row(j) != moved.row(j));
  }
}

TEST_CASE("backward visits shared nodes once") {
  Matrix x0(1, 1);
  x0 << 0.75;
  Tensor x = Tensor::parameter(x0);
  Tensor y = x;
  for (int i = 0; i < 40; ++i) y = add(y, y);
  y.backward();
  CHECK(x.grad()(0, 0) == std::ldexp(1.0, 40));

  Tensor a = Tensor::parameter(x0);
  Tensor b = add(a, a);
  mul(b, b).backward();
  CHECK(a.grad()(0, 0) == doctest::Approx(8.0 * 0.75).epsilon(1e-15));
}

TEST_CASE("gradient accumulation is additive") {
  Rng rng(6);
  const Matrix v = random_matrix(rng, 3, 3);
  Tensor p = Tensor::parameter(v);
  sum(mul(p, p)).backward();
  const Matrix once = p.grad();
  sum(mul(p, p)).backward();
  CHECK((p.grad() - 2.0 * once).cwiseAbs().maxCoeff() < 1e-12);
  p.zero_grad();
  CHECK_FALSE(p.has_grad());
}

TEST_CASE("no-grad mode records nothing") {
  Tensor p = Tensor::parameter(Matrix::Ones(2, 2));
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    const Tensor y = mul(p, p);
    CHECK_FALSE(y.requires_grad());
    CHECK(y.node()->parents.empty());
  }
  CHECK(grad_enabled());
  CHECK(mul(p, p).requires_grad());
}

TEST_CASE("adam first step is bias corrected") {
  Matrix theta(1, 1);
  theta << 1.0;
  Matrix* params[] = {&theta};
  Matrix g(1, 1);
  g << 0.5;
  AdamState state;
  state.config.lr = 1e-3;
  adam_step(params, std::span<const Matrix>(&g, 1), state);
  CHECK(state.step == 1);
  CHECK(std::abs((theta(0, 0) - 1.0) + 1e-3) < 1e-10);
}

TEST_CASE("adam leaves parameters alone under zero gradient") {
  Rng rng(8);
  Tensor p = Tensor::parameter(random_matrix(rng, 3, 2));
  const Matrix before = p.value();
  AdamState state;
  std::vector<Tensor> params = {p};
  for (int i = 0; i < 5; ++i) {
    adam_step(params, state);
    CHECK(state.step == i + 1);
  }
  CHECK(p.value() == before);
}

TEST_CASE("adam minimises theta squared") {
  Tensor theta = Tensor::parameter(Matrix::Constant(1, 1, 3.0));
  std::vector<Tensor> params = {theta};
  AdamState state;
  state.config.lr = 0.1;
  for (int i = 0; i < 200; ++i) {
    theta.zero_grad();
    sum(mul(theta, theta)).backward();
    adam_step(params, state);
  }
  CHECK(std::abs(theta.value()(0, 0)) < 0.1);
  CHECK(state.step == 200);
  CHECK(state.m.size() == 1);
  CHECK(state.m[0].rows() == 1);
}

TEST_CASE("adam rejects a state built for other shapes") {
  AdamState state;
  std::vector<Tensor> a = {Tensor::parameter(Matrix::Ones(2, 2))};
  adam_step(a, state);
  std::vector<Tensor> b = {Tensor::parameter(Matrix::Ones(3, 2))};
  CHECK_THROWS_AS(adam_step(b, state), Error);
}

TEST_CASE("container round trip") {
  Rng rng(9);
  Container c;
  c.metadata["kind"] = "test";
  c.metadata["note"] = "two words";
  const Matrix a = random_matrix(rng, 3, 5);
  c.add("a", a);
  c.add("b.c", Matrix::Constant(1, 2, 0.5));
  std::stringstream buf;
  write_container(buf, c);
  const Container d = read_container(buf);
  CHECK(d.meta("kind") == "test");
  CHECK(d.meta("note") == "two words");
  CHECK(d.arrays().size() == 2);
  const Matrix back = d.matrix("a");
  CHECK(back.rows() == 3);
  CHECK(back.cols() == 5);
  CHECK((back - a.cast<float>().cast<double>()).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(d.get("missing"), Error);

  std::string bytes = buf.str();
  std::stringstream bad(std::string("XXXXXXXX") + bytes.substr(8));
  CHECK_THROWS_AS(read_container(bad), Error);
  std::stringstream cut(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_container(cut), Error);
}

TEST_CASE("container bytes are little-endian float32") {
  Container c;
  c.add("x", Matrix::Constant(1, 1, 1.0));
  std::stringstream buf;
  write_container(buf, c);
  const std::string s = buf.str();
  CHECK(s.substr(0, 8) == "C2TARRAY");
  // 1.0f = 0x3f800000, stored low byte first in the last four bytes
  CHECK(static_cast<unsigned char>(s[s.size() - 1]) == 0x3f);
  CHECK(static_cast<unsigned char>(s[s.size() - 2]) == 0x80);
  CHECK(s[s.size() - 3] == 0);
  CHECK(s[s.size() - 4] == 0);
}
