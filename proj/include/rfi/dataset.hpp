#pragma once

#include <cstdint>
#include <string>

#include "rfi/feature_map.hpp"
#include "rfi/linalg.hpp"
#include "rfi/rng.hpp"

namespace rfi {

enum class CovarianceKind { Identity, DiagonalSpiked };
enum class LabelMode { Regression, Classification };

/// Synthetic data: rows of X are i.i.d. N(0, Sigma) and labels follow
/// y = beta_true^T phi(x) + eps in regression mode, or the one-hot of
/// argmax(beta_true^T phi(x)) in classification mode.
/// DiagonalSpiked inflates the first coordinate: Sigma_11 = 1 + sqrt(d/n).
struct SyntheticDatasetSpec {
  int d = 0;
  int n = 0;
  CovarianceKind covariance = CovarianceKind::Identity;
  Matrix true_weights;  // p x C
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  LabelMode mode = LabelMode::Regression;
};

struct Dataset {
  Matrix X;  // n x d, row per sample
  Matrix Y;  // n x C
  double noise_sigma = 0.0;

  Eigen::Index size() const { return X.rows(); }
};

namespace detail {
inline constexpr std::uint64_t kDataStream = 0x64617461ULL;   // "data"
inline constexpr std::uint64_t kNoiseStream = 0x6e6f6973ULL;  // "nois"
}  // namespace detail

inline Dataset sample_dataset(const SyntheticDatasetSpec& spec,
                              const FeatureMap& feature_map) {
  require_value(spec.n >= 1, "sample_dataset: n must be >= 1");
  require_value(spec.noise_sigma >= 0.0, "sample_dataset: sigma must be >= 0");
  require_dims(spec.d == feature_map.input_dim(),
               "sample_dataset: d must match feature map input dimension");
  require_dims(spec.true_weights.rows() == feature_map.feature_dim(),
               "sample_dataset: true weights must match feature dimension");

  const int n = spec.n, d = spec.d;
  const int c = static_cast<int>(spec.true_weights.cols());
  const double spike =
      spec.covariance == CovarianceKind::DiagonalSpiked
          ? std::sqrt(1.0 + std::sqrt(double(d) / double(n)))
          : 1.0;

  Dataset data;
  data.noise_sigma = spec.noise_sigma;
  data.X.resize(n, d);
  data.Y.resize(n, c);
  for (int i = 0; i < n; ++i) {
    // per-sample counter stream: parallel or out-of-order generation safe
    CounterRng xrng(derive_seed(derive_seed(spec.seed, detail::kDataStream), i));
    for (int j = 0; j < d; ++j) data.X(i, j) = xrng.normal();
    data.X(i, 0) *= spike;

    const Vector clean =
        spec.true_weights.transpose() * feature_map(Vector(data.X.row(i).transpose()));
    if (spec.mode == LabelMode::Classification) {
      Eigen::Index top = 0;
      clean.maxCoeff(&top);
      data.Y.row(i).setZero();
      data.Y(i, top) = 1.0;
    } else {
      CounterRng erng(derive_seed(derive_seed(spec.seed, detail::kNoiseStream), i));
      for (int k = 0; k < c; ++k)
        data.Y(i, k) = clean[k] + spec.noise_sigma * erng.normal();
    }
  }
  return data;
}

/// Minimizer of (1/2n) ||Y - beta^T Phi||_F^2 + (ridge/2) ||beta||_F^2.
/// With ridge = 0 this is the minimum-norm solution: eigenvalues of the
/// feature covariance below 1e-10 * lambda_max are treated as zero.
inline Matrix fit_least_squares(const Matrix& phi, const Matrix& y, double ridge) {
  require_value(ridge >= 0.0, "fit_least_squares: ridge must be >= 0");
  require_dims(phi.cols() == y.rows(), "fit_least_squares: sample count mismatch");
  const double n = static_cast<double>(phi.cols());
  const Matrix cov = feature_covariance(phi);
  const Matrix rhs = phi * y / n;  // p x C
  const Spectrum spec = sym_eig(cov);
  const double lmax = spec.eigenvalues.size() ? std::max(spec.eigenvalues[0], 0.0) : 0.0;

  Vector inv(spec.eigenvalues.size());
  for (Eigen::Index i = 0; i < inv.size(); ++i) {
    const double lam = spec.eigenvalues[i];
    if (ridge > 0.0)
      inv[i] = 1.0 / (lam + ridge);
    else
      inv[i] = lam > 1e-10 * lmax ? 1.0 / lam : 0.0;
  }
  return spec.eigenvectors * inv.asDiagonal() * (spec.eigenvectors.transpose() * rhs);
}

}  // namespace rfi
