#pragma once

#include <cstdint>
#include <string>

#include "rfi/linalg.hpp"
#include "rfi/rng.hpp"

namespace rfi {

enum class FeatureMapKind { Linear, RandomAffineRelu, RandomLinear };

inline std::string to_string(FeatureMapKind kind) {
  switch (kind) {
    case FeatureMapKind::Linear: return "linear";
    case FeatureMapKind::RandomAffineRelu: return "random-affine-relu";
    case FeatureMapKind::RandomLinear: return "random-linear";
  }
  return "?";
}

/// Feature map phi: R^d -> R^p with an analytic input-Jacobian.
/// Random kinds draw fixed W (and b) from the seed at construction,
/// so evaluation is deterministic given the seed.
class FeatureMap {
 public:
  static FeatureMap linear(int d) {
    FeatureMap fm;
    fm.kind_ = FeatureMapKind::Linear;
    fm.input_dim_ = d;
    fm.feature_dim_ = d;
    fm.lipschitz_ = 1.0;
    return fm;
  }

  static FeatureMap random_linear(int d, int p, std::uint64_t seed) {
    FeatureMap fm = random_base(FeatureMapKind::RandomLinear, d, p, seed);
    return fm;
  }

  static FeatureMap random_affine_relu(int d, int p, std::uint64_t seed) {
    FeatureMap fm = random_base(FeatureMapKind::RandomAffineRelu, d, p, seed);
    CounterRng rng(derive_seed(seed, 0x62u));  // 'b' stream
    fm.b_.resize(p);
    for (int i = 0; i < p; ++i) fm.b_[i] = rng.normal();
    return fm;
  }

  FeatureMapKind kind() const { return kind_; }
  int input_dim() const { return input_dim_; }
  int feature_dim() const { return feature_dim_; }
  std::uint64_t seed() const { return seed_; }

  /// Valid Lipschitz constant of phi (1 for linear, ||W||_op otherwise).
  double lipschitz_bound() const { return lipschitz_; }

  Vector operator()(const Vector& x) const {
    require_dims(x.size() == input_dim_, "FeatureMap: input dimension mismatch");
    require_value(x.allFinite(), "FeatureMap: non-finite input");
    switch (kind_) {
      case FeatureMapKind::Linear: return x;
      case FeatureMapKind::RandomLinear: return w_ * x;
      case FeatureMapKind::RandomAffineRelu:
        return (w_ * x + b_).cwiseMax(0.0);
    }
    return x;
  }

  /// Stack phi over the rows of X (n x d) into Phi (p x n), column per sample.
  Matrix feature_matrix(const Matrix& x_rows) const {
    require_dims(x_rows.cols() == input_dim_, "FeatureMap: input dimension mismatch");
    Matrix phi(feature_dim_, x_rows.rows());
    for (Eigen::Index i = 0; i < x_rows.rows(); ++i)
      phi.col(i) = (*this)(Vector(x_rows.row(i).transpose()));
    return phi;
  }

  /// J_phi(x)^T v for v in R^p. ReLU subgradient at exactly 0 is 0.
  Vector jacobian_tvp(const Vector& x, const Vector& v) const {
    require_dims(x.size() == input_dim_, "FeatureMap: input dimension mismatch");
    require_dims(v.size() == feature_dim_, "FeatureMap: cotangent dimension mismatch");
    switch (kind_) {
      case FeatureMapKind::Linear: return v;
      case FeatureMapKind::RandomLinear: return w_.transpose() * v;
      case FeatureMapKind::RandomAffineRelu: {
        const Vector pre = w_ * x + b_;
        Vector gated = v;
        for (Eigen::Index i = 0; i < gated.size(); ++i)
          if (pre[i] <= 0.0) gated[i] = 0.0;
        return w_.transpose() * gated;
      }
    }
    return v;
  }

 private:
  static FeatureMap random_base(FeatureMapKind kind, int d, int p, std::uint64_t seed) {
    require_value(d >= 1 && p >= 1, "FeatureMap: dimensions must be positive");
    FeatureMap fm;
    fm.kind_ = kind;
    fm.input_dim_ = d;
    fm.feature_dim_ = p;
    fm.seed_ = seed;
    CounterRng rng(derive_seed(seed, 0x57u));  // 'W' stream
    fm.w_.resize(p, d);
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < d; ++j) fm.w_(i, j) = rng.normal() / std::sqrt(double(d));
    fm.lipschitz_ = operator_norm(fm.w_);
    return fm;
  }

  FeatureMapKind kind_ = FeatureMapKind::Linear;
  int input_dim_ = 0;
  int feature_dim_ = 0;
  std::uint64_t seed_ = 0;
  double lipschitz_ = 1.0;
  Matrix w_;
  Vector b_;
};

}  // namespace rfi
