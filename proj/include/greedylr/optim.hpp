// SPDX-License-Identifier: Apache-2.0
/**
 * @file   optim.hpp
 * @brief  Plain SGD and bias-corrected Adam over dense vectors.
 *
 * A step never throws on numerical blow-up. It reports StepStatus::diverged
 * when the gradient or the updated iterate has a non-finite component, or a
 * component whose magnitude exceeds kDivergenceLimit, and the caller records
 * that as data.
 */
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string_view>

namespace greedylr::optim {

using Vector = Eigen::VectorXd;

inline constexpr double kDivergenceLimit = 1e12;

struct Iterate {
  Vector x;
  std::int64_t step = 0;
};

enum class OptimizerKind { sgd, adam };

enum class StepStatus { ok, diverged };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

struct OptimizerState {
  OptimizerConfig cfg;
  Vector first_moment;
  Vector second_moment;
  std::int64_t t = 0;

  OptimizerState(const OptimizerConfig& c, Eigen::Index dimension);
};

/// True if every component is finite and within kDivergenceLimit.
bool is_sane(const Vector& v);

StepStatus sgd_step(Iterate& it, const Vector& g, double lr);
StepStatus adam_step(OptimizerState& state, Iterate& it, const Vector& g,
                     double lr);

/// Dispatches on state.cfg.kind.
StepStatus optimizer_step(OptimizerState& state, Iterate& it, const Vector& g,
                          double lr);

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(std::string_view name);

}  // namespace greedylr::optim
