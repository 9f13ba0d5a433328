#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <utility>
#include <vector>

#include "rfi/dataset.hpp"
#include "rfi/feature_map.hpp"
#include "rfi/linalg.hpp"
#include "rfi/rng.hpp"
#include "rfi/util.hpp"

namespace rfi {

/// NTK gram matrix of a random-features model, Theta = (1/n) phi(X)^T phi(X),
/// with its spectrum and the training data it was built from.
struct NtkSystem {
  Matrix theta;       // n x n
  Spectrum spectrum;  // eigenpairs (lambda_i, v_i) of theta
  Matrix X;           // n x d, row per sample
  Matrix Y;           // n x C
  Matrix phi_matrix;  // p x n cache of phi(X)
  FeatureMap feature_map;

  Eigen::Index n() const { return theta.rows(); }

  double eig_threshold() const {
    const double lmax =
        spectrum.eigenvalues.size() ? std::max(spectrum.eigenvalues[0], 0.0) : 0.0;
    return 1e-10 * lmax;
  }

  /// Theta(x, X) = (1/n) phi(X)^T phi(x).
  Vector theta_cross(const Vector& x) const {
    return phi_matrix.transpose() * feature_map(x) / double(n());
  }
};

inline NtkSystem ntk_gram(const FeatureMap& feature_map, const Matrix& x_rows,
                          const Matrix& y) {
  require_value(x_rows.rows() >= 1, "ntk_gram: need at least one sample");
  require_dims(x_rows.rows() == y.rows(), "ntk_gram: X and Y sample counts differ");
  NtkSystem sys;
  sys.feature_map = feature_map;
  sys.X = x_rows;
  sys.Y = y;
  sys.phi_matrix = feature_map.feature_matrix(x_rows);
  const double n = double(x_rows.rows());
  Matrix theta = sys.phi_matrix.transpose() * sys.phi_matrix / n;
  sys.theta = 0.5 * (theta + theta.transpose());
  sys.spectrum = sym_eig(sys.theta);

  // duality: nonzero eigenvalues of Theta match those of the feature covariance
  const Spectrum cov_spec = sym_eig(feature_covariance(sys.phi_matrix));
  const double tol = 1e-8 * std::max(1.0, std::abs(sys.spectrum.eigenvalues[0]));
  const Eigen::Index shared = std::min(cov_spec.eigenvalues.size(),
                                       sys.spectrum.eigenvalues.size());
  for (Eigen::Index i = 0; i < shared; ++i) {
    if (sys.spectrum.eigenvalues[i] <= sys.eig_threshold()) break;
    if (std::abs(sys.spectrum.eigenvalues[i] - cov_spec.eigenvalues[i]) > tol)
      throw numerical_error("ntk_gram: gram/covariance eigenvalue duality is broken");
  }
  return sys;
}

/// NTK features f_i(x) = lambda_i^{-1} Theta(x,X)^T v_i v_i^T Y, one row per
/// eigen index. Eigenvalues at or below the pseudo-inverse threshold yield
/// zero features.
inline Matrix ntk_features(const NtkSystem& system, const Vector& x) {
  const Vector cross = system.theta_cross(x);
  const double threshold = system.eig_threshold();
  Matrix features = Matrix::Zero(system.n(), system.Y.cols());
  for (Eigen::Index i = 0; i < system.n(); ++i) {
    const double lam = system.spectrum.eigenvalues[i];
    if (lam <= threshold) continue;
    const double scale = cross.dot(system.spectrum.eigenvectors.col(i)) / lam;
    features.row(i) = scale * (system.Y.transpose() * system.spectrum.eigenvectors.col(i)).transpose();
  }
  return features;
}

/// Kernel-regression prediction Theta(x,X)^T Theta(X,X)^+ Y.
inline Vector kernel_regression_predict(const NtkSystem& system, const Vector& x) {
  const Vector cross = system.theta_cross(x);
  const double threshold = system.eig_threshold();
  Vector pred = Vector::Zero(system.Y.cols());
  const Matrix& v = system.spectrum.eigenvectors;
  for (Eigen::Index i = 0; i < system.n(); ++i) {
    const double lam = system.spectrum.eigenvalues[i];
    if (lam <= threshold) continue;
    pred += (cross.dot(v.col(i)) / lam) * (system.Y.transpose() * v.col(i));
  }
  return pred;
}

/// Network features f_i(x) = (phi(x)^T u_i)(u_i^T beta), one row per eigen
/// index of the feature covariance.
inline Matrix network_features(const Spectrum& cov_spectrum, const Matrix& beta_true,
                               const Vector& x, const FeatureMap& feature_map) {
  require_dims(beta_true.rows() == cov_spectrum.size(),
               "network_features: weight rows must match spectrum size");
  const Vector phi = feature_map(x);
  const Vector align = cov_spectrum.eigenvectors.transpose() * phi;     // p
  const Matrix comps = cov_spectrum.eigenvectors.transpose() * beta_true;  // p x C
  Matrix features(cov_spectrum.size(), beta_true.cols());
  for (Eigen::Index i = 0; i < cov_spectrum.size(); ++i)
    features.row(i) = align[i] * comps.row(i);
  return features;
}

struct CorrespondenceReport {
  double max_noiseless_deviation = 0.0;  // max |f_ker - f_net| over matched pairs
  double max_mean_deviation = 0.0;       // noisy case: max |mean dev| over pairs
  double max_se_ratio = 0.0;             // noisy case: max |mean| / SE
  Eigen::Index matched = 0;
};

/// Checks E_eps[f_i^ker(x)] = f_i^net(x) over matched nonzero eigenvalues.
/// With sigma = 0 the match is exact up to numerics; with sigma > 0 the
/// noise-averaged NTK features are compared within Monte-Carlo error.
inline CorrespondenceReport correspondence_check(const NtkSystem& system,
                                                 const Spectrum& cov_spectrum,
                                                 const Matrix& beta_true,
                                                 double noise_sigma,
                                                 int n_noise_draws,
                                                 const Matrix& probe_rows,
                                                 std::uint64_t seed = 0) {
  const double threshold = system.eig_threshold();
  const double tol = 1e-8 * std::max(1.0, std::abs(system.spectrum.eigenvalues[0]));
  Eigen::Index matched = 0;
  while (matched < std::min<Eigen::Index>(system.n(), cov_spectrum.size()) &&
         system.spectrum.eigenvalues[matched] > threshold) {
    if (std::abs(system.spectrum.eigenvalues[matched] -
                 cov_spectrum.eigenvalues[matched]) > tol)
      throw numerical_error("correspondence_check: eigenvalue mismatch beyond tolerance");
    ++matched;
  }

  CorrespondenceReport report;
  report.matched = matched;
  const Matrix clean_y = system.phi_matrix.transpose() * beta_true;  // n x C

  for (Eigen::Index pi = 0; pi < probe_rows.rows(); ++pi) {
    const Vector x = probe_rows.row(pi).transpose();
    const Matrix net = network_features(cov_spectrum, beta_true, x, system.feature_map);
    const Vector cross = system.theta_cross(x);

    if (noise_sigma == 0.0) {
      NtkSystem noiseless = system;
      noiseless.Y = clean_y;
      const Matrix ker = ntk_features(noiseless, x);
      for (Eigen::Index i = 0; i < matched; ++i)
        report.max_noiseless_deviation =
            std::max(report.max_noiseless_deviation,
                     (ker.row(i) - net.row(i)).cwiseAbs().maxCoeff());
      continue;
    }

    // deviation of feature i is linear in the label noise:
    //   f_i^ker - f_i^net = (theta_x . v_i / lambda_i) * (eps^T v_i)
    CounterRng rng(derive_seed(seed, 0x636f72ULL + pi));
    for (Eigen::Index i = 0; i < matched; ++i) {
      const double lam = system.spectrum.eigenvalues[i];
      const double scale = cross.dot(system.spectrum.eigenvectors.col(i)) / lam;
      for (Eigen::Index c = 0; c < system.Y.cols(); ++c) {
        double mean = 0.0, m2 = 0.0;
        for (int draw = 0; draw < n_noise_draws; ++draw) {
          double eps_vi = 0.0;
          for (Eigen::Index s = 0; s < system.n(); ++s)
            eps_vi += noise_sigma * rng.normal() * system.spectrum.eigenvectors(s, i);
          const double dev = scale * eps_vi;
          const double d1 = dev - mean;
          mean += d1 / double(draw + 1);
          m2 += d1 * (dev - mean);
        }
        const double se = std::sqrt(m2 / double(n_noise_draws - 1) / double(n_noise_draws));
        report.max_mean_deviation = std::max(report.max_mean_deviation, std::abs(mean));
        if (se > 0.0)
          report.max_se_ratio = std::max(report.max_se_ratio, std::abs(mean) / se);
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Gradient-descent dynamics.
//
// Convention: `eig` always denotes an eigenvalue of the feature covariance
// (equivalently of the gram matrix). Written in terms of the singular values
// s of phi(X)/sqrt(n), eig = s^2; use squared_singular_value to convert.
// ---------------------------------------------------------------------------

inline double squared_singular_value(double s) { return s * s; }

/// Per-eigendirection learning coefficient 1 - (1 - eta * eig)^t of full-batch
/// gradient descent on the least-squares objective started from beta_0 = 0.
inline double gd_coefficient(double eta, double eig, double t) {
  return 1.0 - std::pow(1.0 - eta * eig, t);
}

struct GdClosedForm {
  Vector coefficients;  // per eigen index
  Vector prediction;    // C
  bool divergent = false;  // some eta * eig >= 2
};

inline GdClosedForm gd_closed_form(double eta, double t, const Spectrum& cov_spectrum,
                                   const Matrix& beta_true, const Vector& x,
                                   const FeatureMap& feature_map) {
  const Matrix net = network_features(cov_spectrum, beta_true, x, feature_map);
  GdClosedForm out;
  out.coefficients.resize(cov_spectrum.size());
  out.prediction = Vector::Zero(beta_true.cols());
  for (Eigen::Index j = 0; j < cov_spectrum.size(); ++j) {
    const double eig = cov_spectrum.eigenvalues[j];
    if (eta * eig >= 2.0) out.divergent = true;
    out.coefficients[j] = gd_coefficient(eta, eig, t);
    out.prediction += out.coefficients[j] * net.row(j).transpose();
  }
  return out;
}

struct DynamicsTrace {
  std::vector<double> times;          // recorded steps t = 0..T
  Matrix coefficients;                // (T+1) x p, eigen-direction progress
  std::vector<Matrix> predictions;    // per time, probes x C
  std::vector<Matrix> beta_steps;     // per time, p x C
  bool diverged = false;
};

/// Explicit iteration beta_{t+1} = beta_t - eta * grad L with beta_0 = 0 for
/// L = (1/2n)||Y - beta^T Phi||^2. Truncates with a divergence flag once the
/// loss exceeds 10x its initial value.
inline DynamicsTrace gd_simulate(double eta, int t_max, const Matrix& phi,
                                 const Matrix& y, const Matrix& probe_features) {
  require_value(std::isfinite(eta), "gd_simulate: eta must be finite");
  require_dims(phi.cols() == y.rows(), "gd_simulate: sample count mismatch");
  require_dims(probe_features.rows() == phi.rows(),
               "gd_simulate: probe feature dimension mismatch");
  const double n = double(phi.cols());
  const Eigen::Index p = phi.rows();

  const Spectrum cov_spec = sym_eig(feature_covariance(phi));
  const Matrix beta_limit = fit_least_squares(phi, y, 0.0);
  const Matrix limit_comps = cov_spec.eigenvectors.transpose() * beta_limit;  // p x C

  DynamicsTrace trace;
  trace.coefficients.resize(t_max + 1, p);
  Matrix beta = Matrix::Zero(p, y.cols());
  const double initial_loss =
      (y - phi.transpose() * beta).squaredNorm() / (2.0 * n) + 1e-300;

  for (int t = 0; t <= t_max; ++t) {
    trace.times.push_back(double(t));
    trace.predictions.push_back(probe_features.transpose() * beta);
    trace.beta_steps.push_back(beta);
    const Matrix comps = cov_spec.eigenvectors.transpose() * beta;
    for (Eigen::Index j = 0; j < p; ++j) {
      const double denom = limit_comps.row(j).squaredNorm();
      // + 0.0 folds IEEE negative zero into plain zero
      trace.coefficients(t, j) =
          denom > 0.0 ? comps.row(j).dot(limit_comps.row(j)) / denom + 0.0 : 0.0;
    }
    if (t == t_max) break;

    const double loss = (y - phi.transpose() * beta).squaredNorm() / (2.0 * n);
    if (loss > 10.0 * initial_loss) {
      trace.diverged = true;
      trace.coefficients.conservativeResize(t + 1, p);
      break;
    }
    beta -= eta / n * (phi * (phi.transpose() * beta - y));
  }
  return trace;
}

struct KernelFlowResult {
  Vector prediction_spectral;  // per-feature sum route
  Vector prediction_matrix;    // assembled pseudo-inverse/exponential route
  Vector coefficients;         // 1 - exp(-gamma t lambda_i) per eigen index
};

/// Continuous-time kernel flow prediction Theta(x,X)^T Theta^+ (I - e^{-gamma t Theta}) Y,
/// computed both as a dense assembly and as the per-feature spectral sum.
/// The matrix exponential uses the spectral decomposition, exact for
/// symmetric Theta.
inline KernelFlowResult kernel_flow(double gamma, double t, const NtkSystem& system,
                                    const Vector& x) {
  const Eigen::Index n = system.n();
  const double threshold = system.eig_threshold();
  const Matrix& v = system.spectrum.eigenvectors;

  KernelFlowResult out;
  out.coefficients.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lam = std::max(system.spectrum.eigenvalues[i], 0.0);
    out.coefficients[i] = 1.0 - std::exp(-gamma * t * lam);
  }

  // spectral-sum route over the NTK features
  const Matrix features = ntk_features(system, x);
  out.prediction_spectral = Vector::Zero(system.Y.cols());
  for (Eigen::Index i = 0; i < n; ++i)
    out.prediction_spectral += out.coefficients[i] * features.row(i).transpose();

  // dense route: Theta^+ (I - exp(-gamma t Theta)) assembled as matrices
  Vector diag(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lam = system.spectrum.eigenvalues[i];
    diag[i] = lam > threshold ? out.coefficients[i] / lam : 0.0;
  }
  const Matrix flow_op = v * diag.asDiagonal() * v.transpose();
  out.prediction_matrix =
      (system.theta_cross(x).transpose() * flow_op * system.Y).transpose();
  return out;
}

/// Closed-form usefulness rho_j = E[y f_j(x)_t] and robustness
/// gamma_j = E[inf_{||delta|| <= Delta} y f_j(x+delta)_t] of the j-th
/// eigendirection feature at GD time t (Gaussian-linear data model, C = 1).
inline std::pair<double, double> usefulness_robustness_profile(
    int j, double t, double eta, const Spectrum& cov_spectrum,
    const Vector& beta_true, double delta, double noise_sigma) {
  require_dims(j >= 0 && j < cov_spectrum.size(),
               "usefulness_robustness_profile: index out of range");
  const Vector comps = cov_spectrum.eigenvectors.transpose() * beta_true;
  const double bj = comps[j];
  const double eig_j = cov_spectrum.eigenvalues[j];
  const double coeff = gd_coefficient(eta, eig_j, t);
  double energy = 0.0;  // beta_true^T Sigma beta_true in the eigenbasis
  for (Eigen::Index k = 0; k < cov_spectrum.size(); ++k)
    energy += comps[k] * comps[k] * cov_spectrum.eigenvalues[k];
  const double rho = bj * bj * eig_j * coeff;
  const double gamma =
      coeff * (bj * bj * eig_j -
               delta * std::abs(bj) *
                   std::sqrt(2.0 / std::numbers::pi *
                             (noise_sigma * noise_sigma + energy)));
  return {rho, gamma};
}

struct RiskProfile {
  Vector per_index;  // %risk_j = b_j^2 eig_j (1 - eta eig_j)^{2t}
  double total;      // sigma^2 + sum_j %risk_j
};

inline RiskProfile risk_profile(double t, double eta, const Spectrum& cov_spectrum,
                                const Vector& beta_true, double noise_sigma) {
  require_value(std::isfinite(eta), "risk_profile: eta must be finite");
  const Vector comps = cov_spectrum.eigenvectors.transpose() * beta_true;
  RiskProfile out;
  out.per_index.resize(cov_spectrum.size());
  out.total = noise_sigma * noise_sigma;
  for (Eigen::Index j = 0; j < cov_spectrum.size(); ++j) {
    const double eig = cov_spectrum.eigenvalues[j];
    out.per_index[j] =
        comps[j] * comps[j] * eig * std::pow(1.0 - eta * eig, 2.0 * t);
    out.total += out.per_index[j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spiked-covariance perturbation experiment: how far each NTK feature moves
// under a worst-case l2 perturbation of the probe input.
// ---------------------------------------------------------------------------

struct PerturbationExperimentConfig {
  int d = 100;
  int n = 1000;
  std::vector<double> deltas = {0.01, 0.05, 0.1};
  double noise_sigma = 0.1;
  std::uint64_t seed = 7;
  int attack_iterations = 30;
  int noise_draws = 32;  // label draws averaged per feature
};

struct PerturbationRow {
  int rank = 0;  // eigen index, 0 = largest eigenvalue
  double lambda = 0.0;
  double delta = 0.0;
  double deviation = 0.0;  // ||f_i(x + delta*) - f_i(x)||_2
};

struct PerturbationExperimentResult {
  std::vector<PerturbationRow> rows;
  std::vector<std::pair<double, double>> spearman_per_delta;  // (delta, rho)
  Vector eigenvalues;
};

/// Spearman rank correlation with fractional tie ranks.
inline double spearman_correlation(const std::vector<double>& a,
                                   const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& xs) {
    const std::size_t n = xs.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return xs[i] < xs[j]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
      const double avg = 0.5 * (double(i) + double(j)) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  const double n = double(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  return cov / std::sqrt(va * vb);
}

/// Worst-case deviation of the scalar kernel component
/// lambda_i^{-1} Theta(x,X)^T v_i at probe x within an l2 ball of radius
/// delta, found by projected gradient ascent on the deviation (both initial
/// signs tried; exact for linear feature maps). The full feature deviation
/// is this value times ||Y^T v_i||.
inline double ntk_component_deviation(const NtkSystem& system, Eigen::Index i,
                                      const Vector& x, double delta,
                                      int iterations) {
  const double lam = system.spectrum.eigenvalues[i];
  if (lam <= system.eig_threshold() || delta == 0.0) return 0.0;
  const Vector w = system.phi_matrix * system.spectrum.eigenvectors.col(i);  // p
  const double scale = 1.0 / (double(system.n()) * lam);
  const auto s_of = [&](const Vector& z) {
    return scale * w.dot(system.feature_map(z));
  };
  const auto grad_of = [&](const Vector& z) {
    return Vector(scale * system.feature_map.jacobian_tvp(z, w));
  };

  const double s0 = s_of(x);
  double best = 0.0;
  const Vector g0 = grad_of(x);
  if (g0.isZero(0.0)) return 0.0;
  for (const double sign : {1.0, -1.0}) {
    Vector d = sign * delta * g0 / g0.norm();
    double dev = std::abs(s_of(x + d) - s0);
    best = std::max(best, dev);
    for (int it = 0; it < iterations; ++it) {
      const double diff = s_of(x + d) - s0;
      Vector g = grad_of(x + d);
      if (diff < 0.0) g = -g;
      const double gn = g.norm();
      if (gn == 0.0) break;
      d += (delta / 4.0) * g / gn;
      if (d.norm() > delta) d *= delta / d.norm();
      dev = std::abs(s_of(x + d) - s0);
      best = std::max(best, dev);
    }
  }
  return best;
}

/// Worst-case deviation ||f_i(x + delta*) - f_i(x)||_2 of NTK feature i.
inline double ntk_feature_deviation(const NtkSystem& system, Eigen::Index i,
                                    const Vector& x, double delta,
                                    int iterations) {
  const double y_norm =
      (system.Y.transpose() * system.spectrum.eigenvectors.col(i)).norm();
  return ntk_component_deviation(system, i, x, delta, iterations) * y_norm;
}

inline PerturbationExperimentResult perturbation_experiment(
    const PerturbationExperimentConfig& config) {
  require_value(config.d >= 1 && config.n >= 1, "perturbation_experiment: bad dimensions");

  require_value(config.noise_draws >= 1, "perturbation_experiment: need noise draws");

  // Labels carry noise only. Signal labels generated through the feature
  // spectrum have alignment ||Y^T v_i|| growing like sqrt(n lambda_i), which
  // exactly cancels the spectral factor of the feature deviation and hides
  // the trend this experiment is after; noise labels keep the alignment
  // spectrum-neutral, and averaging draws removes its per-index scatter.
  const FeatureMap phi = FeatureMap::linear(config.d);
  SyntheticDatasetSpec spec;
  spec.d = config.d;
  spec.n = config.n;
  spec.covariance = CovarianceKind::DiagonalSpiked;
  spec.noise_sigma = config.noise_sigma;
  spec.seed = config.seed;
  spec.true_weights = Vector::Zero(config.d);
  const Dataset data = sample_dataset(spec, phi);
  const NtkSystem system = ntk_gram(phi, data.X, data.Y);

  Matrix eps(config.n, config.noise_draws);
  for (int r = 0; r < config.noise_draws; ++r) {
    CounterRng nrng(derive_seed(config.seed, 0x72730000ULL + std::uint64_t(r)));
    for (int s = 0; s < config.n; ++s)
      eps(s, r) = config.noise_sigma * nrng.normal();
  }

  CounterRng prng(derive_seed(config.seed, 0x70726f62ULL));  // "prob"
  Vector probe(config.d);
  for (int j = 0; j < config.d; ++j) probe[j] = prng.normal();
  probe[0] *= std::sqrt(1.0 + std::sqrt(double(config.d) / double(config.n)));

  std::vector<Eigen::Index> active;
  for (Eigen::Index i = 0; i < system.n(); ++i)
    if (system.spectrum.eigenvalues[i] > system.eig_threshold()) active.push_back(i);

  PerturbationExperimentResult result;
  result.eigenvalues = system.spectrum.eigenvalues;
  for (double delta : config.deltas) {
    std::vector<double> lambdas, deviations;
    std::vector<double> devs(active.size(), 0.0);
    parallel_for(static_cast<Eigen::Index>(active.size()), [&](Eigen::Index k) {
      const Eigen::Index i = active[k];
      const double component =
          ntk_component_deviation(system, i, probe, delta, config.attack_iterations);
      const Vector align =
          eps.transpose() * system.spectrum.eigenvectors.col(i);  // per draw
      devs[k] = component * align.cwiseAbs().mean();
    });
    for (std::size_t k = 0; k < active.size(); ++k) {
      const Eigen::Index i = active[k];
      result.rows.push_back({static_cast<int>(i), system.spectrum.eigenvalues[i],
                             delta, devs[k]});
      lambdas.push_back(system.spectrum.eigenvalues[i]);
      deviations.push_back(devs[k]);
    }
    result.spearman_per_delta.emplace_back(
        delta, spearman_correlation(lambdas, deviations));
  }
  return result;
}

}  // namespace rfi
