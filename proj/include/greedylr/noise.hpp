// SPDX-License-Identifier: Apache-2.0
/**
 * @file   noise.hpp
 * @brief  Additive perturbations of the loss value a scheduler observes.
 *
 * Noise is applied to the metric handed to the scheduler only. The optimizer
 * always receives the exact component gradient, which is why loss-level
 * noise is equivalent to gradient-level noise for a parameter-independent
 * perturbation.
 */
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "greedylr/rng.hpp"

namespace greedylr::noise {

enum class NoiseKind { none, gaussian, periodic_spike, random_spike, adversarial };

std::string_view to_string(NoiseKind kind);
NoiseKind parse_noise_kind(std::string_view name);

struct NoiseSpec {
  NoiseKind kind = NoiseKind::none;
  double strength = 0.0;
  // Spike period for periodic_spike; drawn per run from [50, 100] when unset.
  std::optional<int> period;
  double spike_prob = 0.02;

  void validate() const;
};

class NoiseState {
 public:
  NoiseState(const NoiseSpec& spec, std::uint64_t run_seed);

  /// Observed loss for step t (zero-based) given the true loss.
  double perturb(double true_loss, std::int64_t t);

  /// The period in effect for periodic_spike, resolved at construction.
  int period() const { return period_; }
  const NoiseSpec& spec() const { return spec_; }
  /// Whether the most recent perturb() call added a spike.
  bool last_was_spike() const { return last_spike_; }

 private:
  NoiseSpec spec_;
  RngStream rng_;
  int period_ = 0;
  double abs_loss_sum_ = 0.0;
  std::int64_t seen_ = 0;
  std::optional<double> previous_true_;
  bool last_spike_ = false;
};

}  // namespace greedylr::noise
