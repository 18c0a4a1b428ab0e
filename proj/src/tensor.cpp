#include "c2t/tensor.hpp"

#include "c2t/rng.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <unordered_set>

namespace c2t::nn {

namespace {

std::atomic<std::uint64_t> next_node_id{1};
thread_local bool grad_mode = true;

std::shared_ptr<Node> new_node(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->id = next_node_id.fetch_add(1, std::memory_order_relaxed);
  return node;
}

// Records parents and the backward closure only when something upstream
// needs a gradient.
Tensor make_result(Matrix value, std::vector<std::shared_ptr<Node>> parents,
                   std::function<void(Node&)> backward) {
  auto node = new_node(std::move(value));
  if (grad_mode) {
    bool any = false;
    for (const auto& p : parents) any = any || p->requires_grad;
    if (any) {
      node->requires_grad = true;
      node->parents = std::move(parents);
      node->backward = std::move(backward);
    }
  }
  return Tensor(std::move(node));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                std::to_string(b.cols()) + ")");
  }
}

void require_finite(const Matrix& m, const char* op) {
  if (!m.allFinite()) throw Error(std::string(op) + ": non-finite input");
}

Matrix softmax_rows(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  return y;
}

}  // namespace

Matrix& Node::grad_ref() {
  if (grad.size() == 0) grad = Matrix::Zero(value.rows(), value.cols());
  return grad;
}

Tensor::Tensor(Matrix value, bool requires_grad) : node_(new_node(std::move(value))) {
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return Tensor(std::move(m));
}

double Tensor::item() const {
  if (size() != 1) throw Error("item: tensor is not a scalar");
  return node_->value(0, 0);
}

void Tensor::backward() const {
  if (size() != 1) throw Error("backward: loss must be a scalar");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order; each node once.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad_ref()(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() != 0) n->backward(*n);
  }
  // Intermediate gradients are not needed once propagated.
  for (Node* n : order) {
    if (n->backward) n->grad.resize(0, 0);
  }
}

bool grad_enabled() { return grad_mode; }

NoGradGuard::NoGradGuard() : previous_(grad_mode) { grad_mode = false; }
NoGradGuard::~NoGradGuard() { grad_mode = previous_; }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw Error("matmul: inner dimension mismatch");
  auto pa = a.node(), pb = b.node();
  Matrix out = a.value() * b.value();
  return make_result(std::move(out), {pa, pb}, [pa, pb](Node& self) {
    if (pa->requires_grad) pa->grad_ref().noalias() += self.grad * pb->value.transpose();
    if (pb->requires_grad) pb->grad_ref().noalias() += pa->value.transpose() * self.grad;
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw Error("matmul_nt: inner dimension mismatch");
  auto pa = a.node(), pb = b.node();
  Matrix out = a.value() * b.value().transpose();
  return make_result(std::move(out), {pa, pb}, [pa, pb](Node& self) {
    if (pa->requires_grad) pa->grad_ref().noalias() += self.grad * pb->value;
    if (pb->requires_grad) pb->grad_ref().noalias() += self.grad.transpose() * pa->value;
  });
}

Tensor transpose(const Tensor& a) {
  auto pa = a.node();
  Matrix out = a.value().transpose();
  return make_result(std::move(out), {pa},
                     [pa](Node& self) { pa->grad_ref() += self.grad.transpose(); });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto pa = a.node(), pb = b.node();
  return make_result(a.value() + b.value(), {pa, pb}, [pa, pb](Node& self) {
    if (pa->requires_grad) pa->grad_ref() += self.grad;
    if (pb->requires_grad) pb->grad_ref() += self.grad;
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto pa = a.node(), pb = b.node();
  return make_result(a.value() - b.value(), {pa, pb}, [pa, pb](Node& self) {
    if (pa->requires_grad) pa->grad_ref() += self.grad;
    if (pb->requires_grad) pb->grad_ref() -= self.grad;
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto pa = a.node(), pb = b.node();
  Matrix out = a.value().cwiseProduct(b.value());
  return make_result(std::move(out), {pa, pb}, [pa, pb](Node& self) {
    if (pa->requires_grad) pa->grad_ref() += self.grad.cwiseProduct(pb->value);
    if (pb->requires_grad) pb->grad_ref() += self.grad.cwiseProduct(pa->value);
  });
}

Tensor scale(const Tensor& a, double s) {
  auto pa = a.node();
  return make_result(a.value() * s, {pa}, [pa, s](Node& self) { pa->grad_ref() += self.grad * s; });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw Error("add_row: bias shape mismatch");
  auto pa = a.node(), pr = row.node();
  Matrix out = a.value().rowwise() + row.value().row(0);
  return make_result(std::move(out), {pa, pr}, [pa, pr](Node& self) {
    if (pa->requires_grad) pa->grad_ref() += self.grad;
    if (pr->requires_grad) pr->grad_ref() += self.grad.colwise().sum();
  });
}

Tensor add_constant(const Tensor& a, const Matrix& c) {
  if (c.rows() != a.rows() || c.cols() != a.cols()) throw Error("add_constant: shape mismatch");
  auto pa = a.node();
  return make_result(a.value() + c, {pa}, [pa](Node& self) { pa->grad_ref() += self.grad; });
}

Tensor relu(const Tensor& a) {
  auto pa = a.node();
  Matrix out = a.value().cwiseMax(0.0);
  return make_result(std::move(out), {pa}, [pa](Node& self) {
    pa->grad_ref().array() += (pa->value.array() > 0.0).select(self.grad.array(), 0.0);
  });
}

Tensor softmax(const Tensor& a) {
  require_finite(a.value(), "softmax");
  auto pa = a.node();
  auto out = std::make_shared<Matrix>(softmax_rows(a.value()));
  Matrix copy = *out;
  return make_result(std::move(copy), {pa}, [pa, out](Node& self) {
    const Matrix& y = *out;
    Vector dot = self.grad.cwiseProduct(y).rowwise().sum();
    Matrix g = y.cwiseProduct(self.grad.colwise() - dot);
    pa->grad_ref() += g;
  });
}

Tensor log_softmax(const Tensor& a) {
  require_finite(a.value(), "log_softmax");
  auto pa = a.node();
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    const double lse = m + std::log((x.row(r).array() - m).exp().sum());
    out.row(r) = (x.row(r).array() - lse).matrix();
  }
  return make_result(std::move(out), {pa}, [pa](Node& self) {
    Matrix p = self.value.array().exp().matrix();
    Vector gsum = self.grad.rowwise().sum();
    Matrix g = self.grad - (p.array().colwise() * gsum.array()).matrix();
    pa->grad_ref() += g;
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const Index n = x.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw Error("layer_norm: gain/bias length must equal the normalised axis");
  }
  if (!(eps > 0.0)) throw Error("layer_norm: eps must be positive");
  auto px = x.node(), pg = gain.node(), pb = bias.node();
  const Matrix& xv = x.value();
  auto xhat = std::make_shared<Matrix>(xv.rows(), n);
  auto inv_std = std::make_shared<Vector>(xv.rows());
  for (Index r = 0; r < xv.rows(); ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)(r) = inv;
    xhat->row(r) = ((xv.row(r).array() - mu) * inv).matrix();
  }
  Matrix out = (xhat->array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  return make_result(std::move(out), {px, pg, pb}, [px, pg, pb, xhat, inv_std, n](Node& self) {
    const Matrix& dy = self.grad;
    if (pg->requires_grad) pg->grad_ref() += dy.cwiseProduct(*xhat).colwise().sum();
    if (pb->requires_grad) pb->grad_ref() += dy.colwise().sum();
    if (px->requires_grad) {
      Matrix dxhat = (dy.array().rowwise() * pg->value.row(0).array()).matrix();
      Matrix& gx = px->grad_ref();
      const double dn = static_cast<double>(n);
      for (Index r = 0; r < dy.rows(); ++r) {
        const double s1 = dxhat.row(r).sum();
        const double s2 = dxhat.row(r).dot(xhat->row(r));
        gx.row(r).array() += ((*inv_std)(r) / dn) *
                             (dn * dxhat.row(r).array() - s1 - xhat->row(r).array() * s2);
      }
    }
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw Error("concat_cols: no inputs");
  const Index rows = parts[0].rows();
  Index cols = 0;
  std::vector<std::shared_ptr<Node>> nodes;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw Error("concat_cols: row count mismatch");
    cols += p.cols();
    nodes.push_back(p.node());
  }
  Matrix out(rows, cols);
  Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  auto parents = nodes;
  return make_result(std::move(out), std::move(parents), [nodes](Node& self) {
    Index off = 0;
    for (const auto& n : nodes) {
      if (n->requires_grad) n->grad_ref() += self.grad.middleCols(off, n->value.cols());
      off += n->value.cols();
    }
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw Error("concat_rows: no inputs");
  const Index cols = parts[0].cols();
  Index rows = 0;
  std::vector<std::shared_ptr<Node>> nodes;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw Error("concat_rows: column count mismatch");
    rows += p.rows();
    nodes.push_back(p.node());
  }
  Matrix out(rows, cols);
  Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  auto parents = nodes;
  return make_result(std::move(out), std::move(parents), [nodes](Node& self) {
    Index off = 0;
    for (const auto& n : nodes) {
      if (n->requires_grad) n->grad_ref() += self.grad.middleRows(off, n->value.rows());
      off += n->value.rows();
    }
  });
}

Tensor slice_cols(const Tensor& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw Error("slice_cols: out of range");
  auto pa = a.node();
  Matrix out = a.value().middleCols(start, count);
  return make_result(std::move(out), {pa}, [pa, start, count](Node& self) {
    pa->grad_ref().middleCols(start, count) += self.grad;
  });
}

Tensor slice_rows(const Tensor& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw Error("slice_rows: out of range");
  auto pa = a.node();
  Matrix out = a.value().middleRows(start, count);
  return make_result(std::move(out), {pa}, [pa, start, count](Node& self) {
    pa->grad_ref().middleRows(start, count) += self.grad;
  });
}

Tensor gather_rows(const Tensor& table, std::span<const int> ids) {
  auto pt = table.node();
  Matrix out(static_cast<Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) {
      throw Error("gather_rows: id " + std::to_string(ids[i]) + " out of range");
    }
    out.row(static_cast<Index>(i)) = table.value().row(ids[i]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return make_result(std::move(out), {pt}, [pt, idx = std::move(idx)](Node& self) {
    Matrix& g = pt->grad_ref();
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += self.grad.row(static_cast<Index>(i));
  });
}

Tensor sum(const Tensor& a) {
  auto pa = a.node();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make_result(std::move(out), {pa},
                     [pa](Node& self) { pa->grad_ref().array() += self.grad(0, 0); });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw Error("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads, const Mask* mask,
                 std::vector<Matrix>* weights) {
  if (heads <= 0 || q.cols() % heads != 0 || v.cols() % heads != 0) {
    throw Error("attention: width not divisible by head count");
  }
  if (q.cols() != k.cols() || k.rows() != v.rows()) throw Error("attention: q/k/v shape mismatch");
  const Index tq = q.rows(), tk = k.rows();
  if (mask && (mask->rows() != tq || mask->cols() != tk)) throw Error("attention: mask shape mismatch");
  const Index dk = q.cols() / heads, dv = v.cols() / heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dk));

  auto probs = std::make_shared<std::vector<Matrix>>(heads);
  Matrix out(tq, v.cols());
  for (int h = 0; h < heads; ++h) {
    Matrix s = (q.value().middleCols(h * dk, dk) * k.value().middleCols(h * dk, dk).transpose()) *
               scale_factor;
    Matrix& p = (*probs)[h];
    p.resize(tq, tk);
    for (Index r = 0; r < tq; ++r) {
      double m = -std::numeric_limits<double>::infinity();
      for (Index c = 0; c < tk; ++c) {
        if (!mask || (*mask)(r, c)) {
          if (!std::isfinite(s(r, c))) throw Error("attention: non-finite score");
          m = std::max(m, s(r, c));
        }
      }
      if (m == -std::numeric_limits<double>::infinity()) {
        throw Error("attention: query with no attendable keys");
      }
      double z = 0.0;
      for (Index c = 0; c < tk; ++c) {
        const double e = (!mask || (*mask)(r, c)) ? std::exp(s(r, c) - m) : 0.0;
        p(r, c) = e;
        z += e;
      }
      p.row(r) /= z;
    }
    out.middleCols(h * dv, dv).noalias() = p * v.value().middleCols(h * dv, dv);
  }
  if (weights) *weights = *probs;

  auto pq = q.node(), pk = k.node(), pv = v.node();
  return make_result(
      std::move(out), {pq, pk, pv}, [pq, pk, pv, probs, heads, dk, dv, scale_factor](Node& self) {
        for (int h = 0; h < heads; ++h) {
          const Matrix& p = (*probs)[h];
          auto dout = self.grad.middleCols(h * dv, dv);
          auto vh = pv->value.middleCols(h * dv, dv);
          if (pv->requires_grad) pv->grad_ref().middleCols(h * dv, dv).noalias() += p.transpose() * dout;
          if (!pq->requires_grad && !pk->requires_grad) continue;
          Matrix dp = dout * vh.transpose();
          Vector rs = dp.cwiseProduct(p).rowwise().sum();
          Matrix ds = p.cwiseProduct(dp.colwise() - rs) * scale_factor;
          if (pq->requires_grad) {
            pq->grad_ref().middleCols(h * dk, dk).noalias() += ds * pk->value.middleCols(h * dk, dk);
          }
          if (pk->requires_grad) {
            pk->grad_ref().middleCols(h * dk, dk).noalias() +=
                ds.transpose() * pq->value.middleCols(h * dk, dk);
          }
        }
      });
}

Tensor cross_entropy_sum(const Tensor& logits, std::span<const int> targets, int ignore_index,
                         double label_smoothing) {
  const Matrix& x = logits.value();
  if (static_cast<Index>(targets.size()) != x.rows()) throw Error("cross_entropy: target count mismatch");
  require_finite(x, "cross_entropy");
  const Index cols = x.cols();
  auto probs = std::make_shared<Matrix>(softmax_rows(x));
  double total = 0.0;
  for (Index r = 0; r < x.rows(); ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    if (t == ignore_index) continue;
    if (t < 0 || t >= cols) throw Error("cross_entropy: target id out of range");
    const double m = x.row(r).maxCoeff();
    const double lse = m + std::log((x.row(r).array() - m).exp().sum());
    total += lse - (1.0 - label_smoothing) * x(r, t) - label_smoothing * x.row(r).mean();
  }
  Matrix out(1, 1);
  out(0, 0) = total;
  auto pl = logits.node();
  std::vector<int> tg(targets.begin(), targets.end());
  return make_result(std::move(out), {pl},
                     [pl, probs, tg = std::move(tg), ignore_index, label_smoothing, cols](Node& self) {
                       const double g = self.grad(0, 0);
                       Matrix& gl = pl->grad_ref();
                       for (Index r = 0; r < probs->rows(); ++r) {
                         const int t = tg[static_cast<std::size_t>(r)];
                         if (t == ignore_index) continue;
                         gl.row(r) += g * probs->row(r);
                         gl.row(r).array() -= g * label_smoothing / static_cast<double>(cols);
                         gl(r, t) -= g * (1.0 - label_smoothing);
                       }
                     });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, int ignore_index,
                     double label_smoothing) {
  std::size_t counted = 0;
  for (int t : targets) counted += (t != ignore_index);
  if (counted == 0) throw Error("cross_entropy: no non-ignored targets");
  return scale(cross_entropy_sum(logits, targets, ignore_index, label_smoothing),
               1.0 / static_cast<double>(counted));
}

Tensor dropout(const Tensor& a, double p, Rng& rng) {
  if (p <= 0.0) return a;
  if (p >= 1.0) throw Error("dropout: probability must be < 1");
  Matrix keep(a.rows(), a.cols());
  const double s = 1.0 / (1.0 - p);
  for (Index i = 0; i < keep.size(); ++i) keep.data()[i] = rng.uniform() >= p ? s : 0.0;
  auto pa = a.node();
  Matrix out = a.value().cwiseProduct(keep);
  return make_result(std::move(out), {pa}, [pa, keep = std::move(keep)](Node& self) {
    pa->grad_ref() += self.grad.cwiseProduct(keep);
  });
}

}  // namespace c2t::nn
