#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rfi/dataset.hpp"
#include "rfi/gam.hpp"
#include "rfi/linalg.hpp"
#include "rfi/rng.hpp"
#include "rfi/util.hpp"

namespace rfi {

enum class AttackNorm { Linf, L2 };
enum class AttackLoss { CrossEntropy, Margin, InnerProductMin };

struct AttackConfig {
  AttackNorm norm = AttackNorm::Linf;
  double epsilon = 8.0 / 255.0;
  double step_size = (8.0 / 255.0) / 4.0;
  int iterations = 40;
  AttackLoss loss = AttackLoss::CrossEntropy;
  bool random_start = false;
  std::uint64_t seed = 0;
  bool clip01 = false;  // off by default: synthetic inputs are unbounded

  void check() const {
    require_value(epsilon >= 0.0, "AttackConfig: epsilon must be >= 0");
    require_value(iterations >= 1, "AttackConfig: iterations must be >= 1");
    require_value(step_size > 0.0, "AttackConfig: step size must be > 0");
  }

  static AttackConfig linf_default() { return {}; }
  static AttackConfig l2_default() {
    AttackConfig cfg;
    cfg.norm = AttackNorm::L2;
    cfg.epsilon = 0.5;
    cfg.step_size = 0.5 / 5.0;
    cfg.iterations = 100;
    return cfg;
  }
};

struct AttackResult {
  Vector x_adv;
  bool success = false;
  std::vector<double> loss_trace;  // best-so-far loss per iteration
  std::string note;
};

namespace detail {

inline double softmax_ce(const Vector& logits, int label, Vector* probs) {
  const double m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp();
  const double z = e.sum();
  if (probs) *probs = e / z;
  return std::log(z) - (logits[label] - m);
}

/// Maximized attack loss and its input gradient.
inline double attack_loss_grad(const GamModel& model, const Vector& x,
                               const Vector& y, AttackLoss kind, Vector* grad) {
  const Vector h = gam_predict(model, x);
  switch (kind) {
    case AttackLoss::CrossEntropy: {
      Eigen::Index label = 0;
      y.maxCoeff(&label);
      Vector probs;
      const double loss = softmax_ce(h, static_cast<int>(label), &probs);
      if (grad) {
        Vector w = probs;
        w[label] -= 1.0;
        *grad = gam_input_gradient(model, x, w);
      }
      return loss;
    }
    case AttackLoss::Margin: {
      Eigen::Index label = 0;
      y.maxCoeff(&label);
      Eigen::Index best_other = label == 0 ? 1 : 0;
      for (Eigen::Index c = 0; c < h.size(); ++c)
        if (c != label && h[c] > h[best_other]) best_other = c;
      if (grad) {
        Vector w = Vector::Zero(h.size());
        w[best_other] = 1.0;
        w[label] = -1.0;
        *grad = gam_input_gradient(model, x, w);
      }
      return h[best_other] - h[label];
    }
    case AttackLoss::InnerProductMin: {
      // maximizing -y^T h(x) drives the inner product y^T h down
      if (grad) *grad = gam_input_gradient(model, x, Vector(-y));
      return -y.dot(h);
    }
  }
  return 0.0;
}

inline Vector project_ball(const Vector& x_ref, const Vector& x, AttackNorm norm,
                           double eps) {
  Vector delta = x - x_ref;
  if (norm == AttackNorm::Linf) {
    delta = delta.cwiseMax(-eps).cwiseMin(eps);
  } else {
    const double len = delta.norm();
    if (len > eps && len > 0.0) delta *= eps / len;
  }
  return x_ref + delta;
}

}  // namespace detail

/// Iterative gradient ascent on the configured loss with projection onto the
/// epsilon-ball after every step. Returns the best iterate seen (the clean
/// point included), so the reported loss never falls below the clean loss
/// when random_start is off.
inline AttackResult pgd(const GamModel& model, const Vector& x, const Vector& y,
                        const AttackConfig& config) {
  config.check();
  require_value(x.allFinite() && y.allFinite(), "pgd: non-finite input");

  AttackResult result;
  const double clean_loss = detail::attack_loss_grad(model, x, y, config.loss, nullptr);
  Vector best = x;
  double best_loss = clean_loss;

  Vector cur = x;
  if (config.random_start && config.epsilon > 0.0) {
    CounterRng rng(derive_seed(config.seed, 0x7273ULL));  // "rs"
    Vector noise(x.size());
    if (config.norm == AttackNorm::Linf) {
      for (Eigen::Index i = 0; i < noise.size(); ++i)
        noise[i] = (2.0 * rng.uniform() - 1.0) * config.epsilon;
    } else {
      for (Eigen::Index i = 0; i < noise.size(); ++i) noise[i] = rng.normal();
      const double r =
          config.epsilon * std::pow(rng.uniform(), 1.0 / double(x.size()));
      noise *= r / std::max(noise.norm(), 1e-300);
    }
    cur = x + noise;
    if (config.clip01) cur = cur.cwiseMax(0.0).cwiseMin(1.0);
    const double l = detail::attack_loss_grad(model, cur, y, config.loss, nullptr);
    if (l > best_loss) {
      best_loss = l;
      best = cur;
    }
  }

  bool moved = false;
  for (int it = 0; it < config.iterations; ++it) {
    Vector grad;
    detail::attack_loss_grad(model, cur, y, config.loss, &grad);
    if (grad.isZero(0.0)) {
      if (!moved && !config.random_start) {
        result.note = "zero-gradient";
        break;
      }
      result.loss_trace.push_back(best_loss);
      continue;
    }
    moved = true;
    if (config.norm == AttackNorm::Linf) {
      cur += config.step_size * grad.cwiseSign();
    } else {
      cur += config.step_size * (grad / grad.norm());
    }
    cur = detail::project_ball(x, cur, config.norm, config.epsilon);
    if (config.clip01) cur = cur.cwiseMax(0.0).cwiseMin(1.0);
    const double l = detail::attack_loss_grad(model, cur, y, config.loss, nullptr);
    if (l > best_loss) {
      best_loss = l;
      best = cur;
    }
    result.loss_trace.push_back(best_loss);
  }

  result.x_adv = best;
  if (config.loss == AttackLoss::InnerProductMin) {
    result.success = best_loss > clean_loss;
  } else {
    Eigen::Index label = 0, pred = 0;
    y.maxCoeff(&label);
    gam_predict(model, best).maxCoeff(&pred);
    result.success = pred != label;
  }
  return result;
}

/// Single signed-gradient step of size delta; identical to one-step
/// l-inf PGD with step = delta and no random start.
inline AttackResult fgsm(const GamModel& model, const Vector& x, const Vector& y,
                         double delta, AttackLoss loss = AttackLoss::CrossEntropy) {
  AttackConfig cfg;
  cfg.norm = AttackNorm::Linf;
  cfg.epsilon = delta;
  cfg.step_size = delta > 0.0 ? delta : 1.0;
  cfg.iterations = 1;
  cfg.loss = loss;
  cfg.random_start = false;
  if (delta == 0.0) {
    AttackResult r;
    r.x_adv = x;
    r.success = false;
    r.loss_trace = {detail::attack_loss_grad(model, x, y, loss, nullptr)};
    return r;
  }
  return pgd(model, x, y, cfg);
}

/// Fraction of samples still classified correctly after a per-sample attack.
/// Argmax ties break toward the lower class index. Per-sample seeds derive
/// from (config.seed, sample index), so the parallel schedule cannot change
/// the result.
inline double robust_accuracy(const GamModel& model, const Dataset& data,
                              const AttackConfig& config) {
  config.check();
  require_value(data.size() > 0, "robust_accuracy: empty dataset");
  const Eigen::Index n = data.size();
  std::vector<int> correct(n, 0);
  parallel_for(n, [&](Eigen::Index i) {
    AttackConfig cfg = config;
    cfg.seed = derive_seed(config.seed, static_cast<std::uint64_t>(i));
    const Vector x = data.X.row(i).transpose();
    const Vector y = data.Y.row(i).transpose();
    const Vector x_adv =
        config.epsilon > 0.0 ? pgd(model, x, y, cfg).x_adv : x;
    Eigen::Index label = 0, pred = 0;
    y.maxCoeff(&label);
    gam_predict(model, x_adv).maxCoeff(&pred);
    correct[i] = pred == label ? 1 : 0;
  });
  double sum = 0;
  for (int v : correct) sum += v;
  return sum / double(n);
}

}  // namespace rfi
