// SPDX-License-Identifier: Apache-2.0
#include "greedylr/noise.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace greedylr::noise {

std::string_view to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::none: return "none";
    case NoiseKind::gaussian: return "gaussian";
    case NoiseKind::periodic_spike: return "periodic_spike";
    case NoiseKind::random_spike: return "random_spike";
    case NoiseKind::adversarial: return "adversarial";
  }
  return "unknown";
}

NoiseKind parse_noise_kind(std::string_view name) {
  for (auto k : {NoiseKind::none, NoiseKind::gaussian, NoiseKind::periodic_spike,
                 NoiseKind::random_spike, NoiseKind::adversarial}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown noise kind '" + std::string(name) + "'");
}

void NoiseSpec::validate() const {
  if (!(strength >= 0.0) || !std::isfinite(strength)) {
    throw std::invalid_argument("noise strength must be finite and nonnegative");
  }
  if (period && *period < 1) {
    throw std::invalid_argument("noise period must be positive");
  }
  if (!(spike_prob >= 0.0 && spike_prob <= 1.0)) {
    throw std::invalid_argument("spike_prob must lie in [0, 1]");
  }
}

NoiseState::NoiseState(const NoiseSpec& spec, std::uint64_t run_seed)
    : spec_(spec), rng_(run_seed, StreamTag::noise) {
  spec_.validate();
  if (spec_.kind == NoiseKind::periodic_spike) {
    // The period draw comes from its own substream so it never shifts the
    // per-step draws.
    RngStream period_rng(run_seed, StreamTag::noise, 1);
    period_ = spec_.period ? *spec_.period
                           : 50 + static_cast<int>(period_rng.below(51));
  }
}

double NoiseState::perturb(double true_loss, std::int64_t t) {
  abs_loss_sum_ += std::abs(true_loss);
  ++seen_;
  const double scale = abs_loss_sum_ / static_cast<double>(seen_);
  last_spike_ = false;

  double observed = true_loss;
  switch (spec_.kind) {
    case NoiseKind::none:
      break;
    case NoiseKind::gaussian:
      observed = true_loss + spec_.strength * rng_.normal();
      break;
    case NoiseKind::periodic_spike:
      if (t > 0 && t % period_ == 0) {
        observed = true_loss + spec_.strength * scale;
        last_spike_ = true;
      }
      break;
    case NoiseKind::random_spike:
      // One uniform per step whether or not it fires.
      if (rng_.uniform() < spec_.spike_prob) {
        observed = true_loss + spec_.strength * scale;
        last_spike_ = true;
      }
      break;
    case NoiseKind::adversarial:
      if (previous_true_) {
        observed = true_loss + spec_.strength * std::max(0.0, *previous_true_ - true_loss);
      }
      break;
  }
  previous_true_ = true_loss;
  return observed;
}

}  // namespace greedylr::noise
