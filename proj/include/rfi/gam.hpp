#pragma once

#include "rfi/feature_map.hpp"
#include "rfi/linalg.hpp"

namespace rfi {

/// Generalized additive model h(x) = beta^T phi(x) with beta in R^{p x C}.
struct GamModel {
  FeatureMap feature_map;
  Matrix weights;  // p x C

  int num_classes() const { return static_cast<int>(weights.cols()); }

  void check() const {
    require_dims(weights.rows() == feature_map.feature_dim(),
                 "GamModel: weight rows must equal feature dimension");
  }
};

inline Vector gam_predict(const GamModel& model, const Vector& x) {
  model.check();
  return model.weights.transpose() * model.feature_map(x);
}

/// Gradient of w^T h(x) with respect to x, for logit-combination weights w.
inline Vector gam_input_gradient(const GamModel& model, const Vector& x,
                                 const Vector& combination) {
  model.check();
  require_dims(combination.size() == model.weights.cols(),
               "gam_input_gradient: combination length must equal class count");
  return model.feature_map.jacobian_tvp(x, model.weights * combination);
}

inline Vector gam_input_gradient(const GamModel& model, const Vector& x, int c) {
  require_dims(c >= 0 && c < model.num_classes(), "gam_input_gradient: class index out of range");
  Vector e = Vector::Zero(model.num_classes());
  e[c] = 1.0;
  return gam_input_gradient(model, x, e);
}

}  // namespace rfi
