#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "rfi/attack.hpp"
#include "rfi/dataset.hpp"
#include "rfi/gam.hpp"
#include "rfi/linalg.hpp"
#include "rfi/util.hpp"

namespace rfi {

struct RobustnessEstimate {
  double value = 0.0;
  double std_error = 0.0;
  Eigen::Index n_samples = 0;
  std::string method;  // "analytic" or a description of the attack
};

namespace detail {

inline RobustnessEstimate summarize(const std::vector<double>& values,
                                    std::string method) {
  RobustnessEstimate est;
  est.n_samples = static_cast<Eigen::Index>(values.size());
  est.method = std::move(method);
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= double(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var = values.size() > 1 ? var / double(values.size() - 1) : 0.0;
  est.value = mean;
  est.std_error = std::sqrt(var / double(values.size()));
  return est;
}

}  // namespace detail

/// Empirical robustness of the feature f = M phi with respect to class c:
/// the mean over the dataset of inf_{||x~ - x|| <= delta} y_c beta_c^T M phi(x~),
/// with the inner infimum estimated by an l2 attack on the inner product.
/// The attack under-explores the ball, so the estimate upper-bounds the
/// population quantity it targets.
inline RobustnessEstimate empirical_robustness(const GamModel& model,
                                               const Matrix& m_projector,
                                               const Dataset& data, int c,
                                               double delta,
                                               const AttackConfig& attack) {
  require_value(data.size() > 0, "empirical_robustness: empty dataset");
  require_value(delta >= 0.0, "empirical_robustness: delta must be >= 0");
  const int p = model.feature_map.feature_dim();
  require_dims(m_projector.rows() == p && m_projector.cols() == p,
               "empirical_robustness: M must be p x p");
  require_dims(c >= 0 && c < model.num_classes(), "empirical_robustness: class out of range");

  // y_c beta_c^T M phi(x) = y_c w^T phi(x) with w = M^T beta_c
  const Vector w = m_projector.transpose() * model.weights.col(c);
  GamModel inner{model.feature_map, w};

  const Eigen::Index n = data.size();
  std::vector<double> values(n, 0.0);
  parallel_for(n, [&](Eigen::Index i) {
    const Vector x = data.X.row(i).transpose();
    const double yc = data.Y(i, c);
    Vector x_adv = x;
    if (delta > 0.0 && !w.isZero(0.0)) {
      AttackConfig cfg = attack;
      cfg.norm = AttackNorm::L2;
      cfg.epsilon = delta;
      cfg.loss = AttackLoss::InnerProductMin;
      cfg.seed = derive_seed(attack.seed, static_cast<std::uint64_t>(i));
      Vector target(1);
      target[0] = yc;
      x_adv = pgd(inner, x, target, cfg).x_adv;
    }
    values[i] = yc * w.dot(model.feature_map(x_adv));
  });
  return detail::summarize(values, "pgd-l2");
}

/// Same estimate with the exact inner minimizer, valid for linear phi:
/// the optimum perturbation is -sign(y_c) * delta * M^T beta_c / ||M^T beta_c||.
inline RobustnessEstimate empirical_robustness_analytic(const GamModel& model,
                                                        const Matrix& m_projector,
                                                        const Dataset& data, int c,
                                                        double delta) {
  require_value(model.feature_map.kind() == FeatureMapKind::Linear,
                "empirical_robustness_analytic: requires a linear feature map");
  require_value(data.size() > 0, "empirical_robustness_analytic: empty dataset");
  const Vector w = m_projector.transpose() * model.weights.col(c);
  const double wnorm = w.norm();
  std::vector<double> values(data.size(), 0.0);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const double yc = data.Y(i, c);
    values[i] = yc * w.dot(data.X.row(i).transpose()) - delta * std::abs(yc) * wnorm;
  }
  return detail::summarize(values, "analytic");
}

/// Lower bound on the robustness of f = M phi:
/// beta_c^T Sigma M beta_c - L delta ||M||_op ||beta_c|| sqrt(sigma^2 + beta_c^T Sigma beta_c).
inline double robustness_lower_bound(const Vector& beta_c, const Matrix& sigma,
                                     const Matrix& m_projector, double lipschitz,
                                     double delta, double noise_sigma) {
  require_value(lipschitz >= 0.0 && delta >= 0.0 && noise_sigma >= 0.0,
                "robustness_lower_bound: L, delta, sigma must be >= 0");
  require_dims(sigma.rows() == beta_c.size() && sigma.cols() == beta_c.size() &&
                   m_projector.rows() == beta_c.size() &&
                   m_projector.cols() == beta_c.size(),
               "robustness_lower_bound: shape mismatch");
  const double first = beta_c.dot(sigma * (m_projector * beta_c));
  const double energy = beta_c.dot(sigma * beta_c);
  return first - lipschitz * delta * operator_norm(m_projector) * beta_c.norm() *
                     std::sqrt(noise_sigma * noise_sigma + energy);
}

/// Exact robustness for the Gaussian-linear setting (phi(x) = x,
/// x ~ N(0, Sigma)), with beta_c a top eigenvector of M: the Lipschitz
/// slack of the lower bound tightens to sqrt(2/pi).
inline double linear_exact_robustness(const Vector& beta_c, const Matrix& sigma,
                                      const Matrix& m_projector, double delta,
                                      double noise_sigma) {
  const double first = beta_c.dot(sigma * (m_projector * beta_c));
  const double energy = beta_c.dot(sigma * beta_c);
  return first - std::sqrt(2.0 / std::numbers::pi) * delta *
                     operator_norm(m_projector) * beta_c.norm() *
                     std::sqrt(noise_sigma * noise_sigma + energy);
}

/// Monte-Carlo estimate of the information E[y_c beta_c^T M phi(x)].
inline RobustnessEstimate information_score(const GamModel& model,
                                            const Matrix& m_projector,
                                            const Dataset& data, int c) {
  require_value(data.size() > 0, "information_score: empty dataset");
  const Vector w = m_projector.transpose() * model.weights.col(c);
  std::vector<double> values(data.size(), 0.0);
  for (Eigen::Index i = 0; i < data.size(); ++i)
    values[i] = data.Y(i, c) * w.dot(model.feature_map(data.X.row(i).transpose()));
  return detail::summarize(values, "monte-carlo");
}

}  // namespace rfi
