#pragma once

#include "c2t/container.hpp"
#include "c2t/tensor.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace c2t::reduce {

// k(x, y) = (gamma <x, y> + offset)^degree
struct KernelParams {
  int degree = 3;
  double gamma = 1.0 / 155.0;
  double offset = 1.0;

  void validate() const;
};

struct KpcaOptions {
  KernelParams kernel;
  int n_components = 30;
  int max_landmarks = 2000;
  std::uint64_t seed = 0;
  // z-score features with training statistics before the kernel.
  bool standardize = true;
};

struct KpcaModel {
  KernelParams kernel;
  int n_components = 0;
  bool standardized = false;
  nn::Vector feature_mean;   // identity transform when not standardised
  nn::Vector feature_scale;
  nn::Matrix landmarks;      // M x D, already standardised
  nn::Vector eigenvalues;    // full centred-Gram spectrum, non-increasing, >= 0
  nn::Matrix alphas;         // M x n_components, columns scaled by 1/sqrt(lambda)
  nn::Vector gram_col_means; // column means of the training Gram matrix
  double gram_mean = 0.0;

  int input_dim() const { return static_cast<int>(landmarks.cols()); }

  // Ratios over the positive part of the spectrum.
  std::vector<double> explained_variance_ratio() const;
  std::vector<double> cumulative_explained_variance() const;

  Container to_container() const;
  static KpcaModel from_container(const Container& c);
};

KpcaModel fit_kpca(const nn::Matrix& frames, const KpcaOptions& options = {});

// Centres the kernel vector of each frame against the training landmarks
// and projects it on the dual coefficients.
nn::Matrix kpca_transform(const KpcaModel& model, const nn::Matrix& frames);

// Regression-window delta with replicate edge padding:
//   d_t = sum_{n=1..N} n (x_{t+n} - x_{t-n}) / (2 sum n^2)
nn::Matrix deltas(const nn::Matrix& seq, int half_window = 2);

// [static | delta | delta-delta], T x 3D.
nn::Matrix append_deltas(const nn::Matrix& seq, int half_window = 2);

// Two columns: component index (1-based), cumulative ratio.
void write_explained_variance_csv(std::ostream& out, const KpcaModel& model);

}  // namespace c2t::reduce
