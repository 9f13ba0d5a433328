#pragma once

#include <algorithm>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "rfi/gam.hpp"
#include "rfi/linalg.hpp"

namespace rfi {

/// Per-class robustness scores s_c(u_i) = lambda_i (beta_c^T u_i)^2 over the
/// eigenvectors of the feature covariance.
struct RobustnessScoreTable {
  Matrix scores;                               // C x p
  std::vector<std::vector<int>> index_order;   // per class, eigen indices by
                                               // descending score, ties to the
                                               // smaller eigen index

  int num_classes() const { return static_cast<int>(scores.rows()); }
  int num_features() const { return static_cast<int>(scores.cols()); }
};

enum class ProjectorMode { GlobalUnion, ClasswiseBc };

inline std::string to_string(ProjectorMode m) {
  return m == ProjectorMode::GlobalUnion ? "global-union" : "classwise-bc";
}

/// Selected robust eigenbasis plus the projected weights.
/// In classwise-bc mode each class keeps its own basis; beta_tilde column c
/// then holds U_c U_c^T beta_c, so inference is beta_tilde^T phi(x) in both
/// modes.
struct RobustProjector {
  ProjectorMode mode = ProjectorMode::GlobalUnion;
  int K = 0;
  std::vector<int> selected_indices;  // sorted, global-union mode
  Matrix U_tilde;                     // p x |selected|, global-union mode
  Matrix beta_tilde;                  // p x C
  Matrix scores;                      // C x p provenance
  std::vector<Matrix> class_bases;    // classwise-bc mode, p x K each

  int feature_dim() const { return static_cast<int>(beta_tilde.rows()); }
  int num_classes() const { return static_cast<int>(beta_tilde.cols()); }
};

inline constexpr double kEigZeroTol = 1e-12;

inline RobustnessScoreTable robustness_scores(const Spectrum& spectrum,
                                              const Matrix& beta) {
  const Eigen::Index p = spectrum.eigenvalues.size();
  require_dims(beta.rows() == p, "robustness_scores: weight rows must match spectrum size");
  const double lmax = p > 0 ? std::max(spectrum.eigenvalues[0], 0.0) : 0.0;
  require_value(p == 0 || spectrum.eigenvalues[p - 1] >= -1e-8 * std::max(lmax, 1.0),
                "robustness_scores: spectrum is not PSD");

  RobustnessScoreTable table;
  const Matrix align = beta.transpose() * spectrum.eigenvectors;  // C x p
  table.scores.resize(beta.cols(), p);
  for (Eigen::Index i = 0; i < p; ++i) {
    // eigenvalues within roundoff of zero contribute no robustness
    const double lam = spectrum.eigenvalues[i] > kEigZeroTol * lmax
                           ? spectrum.eigenvalues[i]
                           : 0.0;
    table.scores.col(i) = lam * align.col(i).cwiseAbs2();
  }

  table.index_order.resize(beta.cols());
  for (Eigen::Index c = 0; c < beta.cols(); ++c) {
    std::vector<int> order(p);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return table.scores(c, a) > table.scores(c, b);
    });
    table.index_order[c] = std::move(order);
  }
  return table;
}

/// Top-K score indices of one class. Zero-score indices are used only as
/// padding (in eigen-index order) when fewer than K candidates score > 0.
inline std::vector<int> topk_for_class(const RobustnessScoreTable& table, int c, int K) {
  std::vector<int> picked;
  picked.reserve(K);
  for (int idx : table.index_order[c]) {
    if (static_cast<int>(picked.size()) == K) break;
    if (table.scores(c, idx) > 0.0) picked.push_back(idx);
  }
  if (static_cast<int>(picked.size()) < K) {
    std::set<int> have(picked.begin(), picked.end());
    for (int idx = 0; idx < table.num_features() && static_cast<int>(picked.size()) < K; ++idx)
      if (!have.count(idx)) picked.push_back(idx);
  }
  return picked;
}

inline RobustProjector select_topk_union(const RobustnessScoreTable& table,
                                         const Spectrum& spectrum,
                                         const Matrix& beta, int K) {
  const int p = table.num_features();
  require_value(K >= 1 && K <= p, "select_topk_union: K out of range");
  require_dims(beta.rows() == p && beta.cols() == table.num_classes(),
               "select_topk_union: weight shape mismatch");

  std::set<int> selected;
  for (int c = 0; c < table.num_classes(); ++c)
    for (int idx : topk_for_class(table, c, K)) selected.insert(idx);

  RobustProjector proj;
  proj.mode = ProjectorMode::GlobalUnion;
  proj.K = K;
  proj.scores = table.scores;
  proj.selected_indices.assign(selected.begin(), selected.end());
  proj.U_tilde.resize(p, proj.selected_indices.size());
  for (std::size_t j = 0; j < proj.selected_indices.size(); ++j)
    proj.U_tilde.col(j) = spectrum.eigenvectors.col(proj.selected_indices[j]);
  if (static_cast<int>(proj.selected_indices.size()) == p)
    proj.beta_tilde = beta;  // full basis: the projection is the identity
  else
    proj.beta_tilde = project_subspace(proj.U_tilde, beta);
  return proj;
}

/// Classwise variant: per class, the K dominant eigenvectors of
/// B_c = (beta_c beta_c^T Sigma + Sigma beta_c beta_c^T) / 2.
inline RobustProjector select_classwise_bc(const Matrix& sigma, const Matrix& beta, int K) {
  const Eigen::Index p = sigma.rows();
  require_dims(sigma.cols() == p && beta.rows() == p,
               "select_classwise_bc: shape mismatch");
  require_value(K >= 1 && K <= p, "select_classwise_bc: K out of range");

  RobustProjector proj;
  proj.mode = ProjectorMode::ClasswiseBc;
  proj.K = K;
  proj.beta_tilde.resize(p, beta.cols());
  proj.class_bases.reserve(beta.cols());
  for (Eigen::Index c = 0; c < beta.cols(); ++c) {
    const Vector bc = beta.col(c);
    const Matrix outer = bc * bc.transpose();
    const Matrix b_mat = 0.5 * (outer * sigma + sigma * outer);
    const Spectrum spec = sym_eig(b_mat);
    const Matrix basis = spec.eigenvectors.leftCols(K);
    proj.class_bases.push_back(basis);
    proj.beta_tilde.col(c) = basis * (basis.transpose() * bc);
  }
  return proj;
}

inline Vector rfi_infer(const RobustProjector& projector, const GamModel& model,
                        const Vector& x) {
  require_dims(projector.feature_dim() == model.feature_map.feature_dim() &&
                   projector.num_classes() == model.num_classes(),
               "rfi_infer: projector does not match model");
  return projector.beta_tilde.transpose() * model.feature_map(x);
}

/// Per-class information retained by a global-union projector: the sum of
/// the selected robustness scores.
inline Vector information_of_projector(const RobustProjector& projector,
                                       const RobustnessScoreTable& table) {
  require_value(projector.mode == ProjectorMode::GlobalUnion,
                "information_of_projector: requires global-union mode");
  Vector info = Vector::Zero(table.num_classes());
  for (int c = 0; c < table.num_classes(); ++c)
    for (int idx : projector.selected_indices) info[c] += table.scores(c, idx);
  return info;
}

}  // namespace rfi
