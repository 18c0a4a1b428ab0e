#include "c2t/kpca.hpp"

#include "c2t/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

namespace c2t::reduce {

using nn::Index;
using nn::Matrix;
using nn::Vector;

void KernelParams::validate() const {
  if (degree < 1) throw Error("kernel: degree must be >= 1");
  if (!(gamma > 0.0)) throw Error("kernel: gamma must be positive");
}

namespace {

Matrix kernel_matrix(const Matrix& a, const Matrix& b, const KernelParams& k) {
  Matrix g = a * b.transpose();
  g.array() = (k.gamma * g.array() + k.offset).pow(static_cast<double>(k.degree));
  return g;
}

Matrix standardize_rows(const Matrix& frames, const Vector& mean, const Vector& scale) {
  Matrix out = frames;
  out.rowwise() -= mean.transpose();
  out.array().rowwise() /= scale.transpose().array();
  return out;
}

}  // namespace

std::vector<double> KpcaModel::explained_variance_ratio() const {
  double total = 0.0;
  for (Index i = 0; i < eigenvalues.size(); ++i) total += std::max(eigenvalues(i), 0.0);
  std::vector<double> r;
  for (Index i = 0; i < eigenvalues.size(); ++i) {
    if (eigenvalues(i) > 0.0) r.push_back(eigenvalues(i) / total);
  }
  return r;
}

std::vector<double> KpcaModel::cumulative_explained_variance() const {
  auto r = explained_variance_ratio();
  std::partial_sum(r.begin(), r.end(), r.begin());
  return r;
}

KpcaModel fit_kpca(const Matrix& frames, const KpcaOptions& opt) {
  opt.kernel.validate();
  const Index n = frames.rows();
  if (opt.n_components < 1) throw Error("fit_kpca: need at least one component");
  if (n < opt.n_components) throw Error("fit_kpca: fewer frames than requested components");
  if (opt.max_landmarks < opt.n_components) throw Error("fit_kpca: max_landmarks below n_components");
  if (!frames.allFinite()) throw Error("fit_kpca: non-finite input");

  KpcaModel model;
  model.kernel = opt.kernel;
  model.n_components = opt.n_components;
  model.standardized = opt.standardize;
  const Index d = frames.cols();
  if (opt.standardize) {
    model.feature_mean = frames.colwise().mean().transpose();
    model.feature_scale.resize(d);
    for (Index j = 0; j < d; ++j) {
      const double var = (frames.col(j).array() - model.feature_mean(j)).square().mean();
      model.feature_scale(j) = var > 0.0 ? std::sqrt(var) : 1.0;
    }
  } else {
    model.feature_mean = Vector::Zero(d);
    model.feature_scale = Vector::Ones(d);
  }

  std::vector<Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Index{0});
  if (n > opt.max_landmarks) {
    Rng rng(opt.seed);
    rng.shuffle(rows);
    rows.resize(static_cast<std::size_t>(opt.max_landmarks));
    std::sort(rows.begin(), rows.end());
  }
  const Index m = static_cast<Index>(rows.size());
  Matrix picked(m, d);
  for (Index i = 0; i < m; ++i) picked.row(i) = frames.row(rows[static_cast<std::size_t>(i)]);
  model.landmarks = standardize_rows(picked, model.feature_mean, model.feature_scale);

  const Matrix k = kernel_matrix(model.landmarks, model.landmarks, model.kernel);
  model.gram_col_means = k.colwise().mean().transpose();
  model.gram_mean = model.gram_col_means.mean();
  // K' = K - 1K - K1 + 1K1 (1 = matrix of 1/M)
  Eigen::MatrixXd centered = k;
  centered.rowwise() -= model.gram_col_means.transpose();
  centered.colwise() -= model.gram_col_means;
  centered.array() += model.gram_mean;
  centered = 0.5 * (centered + centered.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(centered);
  if (solver.info() != Eigen::Success) throw Error("fit_kpca: eigendecomposition failed");
  const Vector asc = solver.eigenvalues();
  model.eigenvalues.resize(m);
  for (Index i = 0; i < m; ++i) model.eigenvalues(i) = std::max(asc(m - 1 - i), 0.0);

  const double top = model.eigenvalues(0);
  Index positive = 0;
  while (positive < m && model.eigenvalues(positive) > 1e-10 * top && top > 0.0) ++positive;
  if (positive < opt.n_components) {
    throw Error("rank deficient: requested components exceed spectrum");
  }

  model.alphas.resize(m, opt.n_components);
  for (int c = 0; c < opt.n_components; ++c) {
    Vector u = solver.eigenvectors().col(m - 1 - c);
    Index arg = 0;
    u.cwiseAbs().maxCoeff(&arg);
    if (u(arg) < 0.0) u = -u;  // deterministic sign
    model.alphas.col(c) = u / std::sqrt(model.eigenvalues(c));
  }
  return model;
}

Matrix kpca_transform(const KpcaModel& model, const Matrix& frames) {
  if (frames.cols() != model.input_dim()) {
    throw Error("kpca_transform: expected " + std::to_string(model.input_dim()) + " features, got " +
                std::to_string(frames.cols()));
  }
  const Matrix z = standardize_rows(frames, model.feature_mean, model.feature_scale);
  Matrix k = kernel_matrix(z, model.landmarks, model.kernel);
  const Vector row_means = k.rowwise().mean();
  k.rowwise() -= model.gram_col_means.transpose();
  k.colwise() -= row_means;
  k.array() += model.gram_mean;
  return k * model.alphas;
}

Matrix deltas(const Matrix& seq, int half_window) {
  if (half_window < 1) throw Error("deltas: half window must be >= 1");
  const Index t = seq.rows();
  double denom = 0.0;
  for (int k = 1; k <= half_window; ++k) denom += static_cast<double>(k * k);
  denom *= 2.0;
  Matrix out = Matrix::Zero(t, seq.cols());
  for (Index i = 0; i < t; ++i) {
    for (int k = 1; k <= half_window; ++k) {
      const Index ahead = std::min<Index>(i + k, t - 1);
      const Index behind = std::max<Index>(i - k, 0);
      out.row(i) += static_cast<double>(k) * (seq.row(ahead) - seq.row(behind));
    }
  }
  return out / denom;
}

Matrix append_deltas(const Matrix& seq, int half_window) {
  if (seq.rows() < 1) throw Error("append_deltas: empty sequence");
  const Matrix d1 = deltas(seq, half_window);
  const Matrix d2 = deltas(d1, half_window);
  Matrix out(seq.rows(), seq.cols() * 3);
  out << seq, d1, d2;
  return out;
}

void write_explained_variance_csv(std::ostream& out, const KpcaModel& model) {
  out << "component,cumulative_ratio\n";
  const auto cum = model.cumulative_explained_variance();
  out.precision(12);
  for (std::size_t i = 0; i < cum.size(); ++i) out << (i + 1) << ',' << cum[i] << '\n';
}

Container KpcaModel::to_container() const {
  Container c;
  c.metadata["kind"] = "kpca";
  c.metadata["degree"] = std::to_string(kernel.degree);
  std::ostringstream os;
  os.precision(17);
  os << kernel.gamma;
  c.metadata["gamma"] = os.str();
  os.str("");
  os << kernel.offset;
  c.metadata["offset"] = os.str();
  os.str("");
  os << gram_mean;
  c.metadata["gram_mean"] = os.str();
  c.metadata["n_components"] = std::to_string(n_components);
  c.metadata["standardized"] = standardized ? "1" : "0";
  c.add("feature_mean", Matrix(feature_mean.transpose()));
  c.add("feature_scale", Matrix(feature_scale.transpose()));
  c.add("landmarks", landmarks);
  c.add("eigenvalues", Matrix(eigenvalues.transpose()));
  c.add("alphas", alphas);
  c.add("gram_col_means", Matrix(gram_col_means.transpose()));
  return c;
}

KpcaModel KpcaModel::from_container(const Container& c) {
  if (c.meta("kind") != "kpca") throw Error("container does not hold a KPCA model");
  KpcaModel m;
  m.kernel.degree = std::stoi(c.meta("degree"));
  m.kernel.gamma = std::stod(c.meta("gamma"));
  m.kernel.offset = std::stod(c.meta("offset"));
  m.gram_mean = std::stod(c.meta("gram_mean"));
  m.n_components = std::stoi(c.meta("n_components"));
  m.standardized = c.meta("standardized") == "1";
  m.feature_mean = c.matrix("feature_mean").row(0).transpose();
  m.feature_scale = c.matrix("feature_scale").row(0).transpose();
  m.landmarks = c.matrix("landmarks");
  m.eigenvalues = c.matrix("eigenvalues").row(0).transpose();
  m.alphas = c.matrix("alphas");
  m.gram_col_means = c.matrix("gram_col_means").row(0).transpose();
  return m;
}

}  // namespace c2t::reduce
