// SPDX-License-Identifier: Apache-2.0
#include "greedylr/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace greedylr::optim {

namespace {

void check_shapes(const Iterate& it, const Vector& g, double lr) {
  if (it.x.size() != g.size()) {
    throw std::invalid_argument(
        "gradient dimension " + std::to_string(g.size()) +
        " does not match iterate dimension " + std::to_string(it.x.size()));
  }
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw std::invalid_argument("learning rate must be finite and nonnegative");
  }
}

}  // namespace

void OptimizerConfig::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0)) {
    throw std::invalid_argument("beta1 must lie in [0, 1)");
  }
  if (!(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("beta2 must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw std::invalid_argument("adam_eps must be positive");
}

OptimizerState::OptimizerState(const OptimizerConfig& c, Eigen::Index dimension)
    : cfg(c) {
  cfg.validate();
  if (cfg.kind == OptimizerKind::adam) {
    first_moment = Vector::Zero(dimension);
    second_moment = Vector::Zero(dimension);
  }
}

bool is_sane(const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i]) || std::abs(v[i]) > kDivergenceLimit) return false;
  }
  return true;
}

StepStatus sgd_step(Iterate& it, const Vector& g, double lr) {
  check_shapes(it, g, lr);
  if (!g.allFinite()) return StepStatus::diverged;
  it.x -= lr * g;
  ++it.step;
  return is_sane(it.x) ? StepStatus::ok : StepStatus::diverged;
}

StepStatus adam_step(OptimizerState& state, Iterate& it, const Vector& g,
                     double lr) {
  check_shapes(it, g, lr);
  if (state.first_moment.size() != g.size()) {
    throw std::invalid_argument("adam moment dimension mismatch");
  }
  if (!g.allFinite()) return StepStatus::diverged;
  const double b1 = state.cfg.beta1;
  const double b2 = state.cfg.beta2;
  ++state.t;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = b1 * m + (1.0 - b1) * g[i];
    v = b2 * v + (1.0 - b2) * g[i] * g[i];
    const double m_hat = m / bias1;
    const double v_hat = v / bias2;
    it.x[i] -= lr * m_hat / (std::sqrt(v_hat) + state.cfg.adam_eps);
  }
  ++it.step;
  return is_sane(it.x) ? StepStatus::ok : StepStatus::diverged;
}

StepStatus optimizer_step(OptimizerState& state, Iterate& it, const Vector& g,
                          double lr) {
  if (state.cfg.kind == OptimizerKind::adam) return adam_step(state, it, g, lr);
  return sgd_step(it, g, lr);
}

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::adam ? "adam" : "sgd";
}

OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw std::invalid_argument("unknown optimizer kind '" + std::string(name) + "'");
}

}  // namespace greedylr::optim
