// SPDX-License-Identifier: Apache-2.0
#include "greedylr/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace greedylr::sched {

namespace {

[[noreturn]] void config_fail(const std::string& what) {
  throw ConfigError("invalid scheduler config: " + what);
}

double mode_worse(Mode mode) {
  return mode == Mode::max ? -std::numeric_limits<double>::infinity()
                           : std::numeric_limits<double>::infinity();
}

void require_finite(double metric) {
  if (!std::isfinite(metric)) {
    std::ostringstream os;
    os << "scheduler metric must be finite, got " << metric;
    throw InvalidMetric(os.str());
  }
}

}  // namespace

void GreedyConfig::validate() const {
  if (!(factor > 0.0 && factor < 1.0)) config_fail("factor must lie in (0, 1)");
  if (!(min_lr > 0.0)) config_fail("min_lr must be positive");
  if (!(min_lr <= initial_lr)) config_fail("min_lr must not exceed initial_lr");
  if (!(initial_lr <= max_lr)) config_fail("initial_lr must not exceed max_lr");
  if (patience < 0) config_fail("patience must be nonnegative");
  if (!(threshold >= 0.0)) config_fail("threshold must be nonnegative");
  if (cooldown < 0) config_fail("cooldown must be nonnegative");
  if (warmup < 0) config_fail("warmup must be nonnegative");
  if (!(eps >= 0.0)) config_fail("eps must be nonnegative");
  if (window_size < 1) config_fail("window_size must be at least 1");
  if (reset_start < 0) config_fail("reset_start must be nonnegative");
}

double SmoothingWindow::push(double value, int window_size) {
  values_.push_back(value);
  while (values_.size() > static_cast<std::size_t>(window_size)) {
    values_.pop_front();
  }
  double sum = 0.0;
  for (double v : values_) sum += v;
  return sum / static_cast<double>(values_.size());
}

GreedyState greedy_init(const GreedyConfig& cfg) {
  cfg.validate();
  GreedyState s;
  s.current_lr = cfg.initial_lr;
  s.best = mode_worse(cfg.mode);
  s.reset_countdown = cfg.reset_start;
  return s;
}

bool is_better(double a, double best, Mode mode, double threshold) {
  // Any finite value improves on the +/-inf sentinel; the product form would
  // give inf * 0 = NaN for threshold = 1.
  if (std::isinf(best)) {
    return mode == Mode::min ? best > 0.0 : best < 0.0;
  }
  if (mode == Mode::min) return a < best * (1.0 - threshold);
  return a > best * (1.0 + threshold);
}

double smooth(SmoothingWindow& buffer, int window_size, double value) {
  return buffer.push(value, window_size);
}

void reduce_lr(GreedyState& state, const GreedyConfig& cfg) {
  const double old_lr = state.current_lr;
  const double new_lr = std::max(old_lr * cfg.factor, cfg.min_lr);
  if (old_lr - new_lr > cfg.eps) state.current_lr = new_lr;
}

void increase_lr(GreedyState& state, const GreedyConfig& cfg) {
  const double old_lr = state.current_lr;
  const double new_lr = std::min(old_lr / cfg.factor, cfg.max_lr);
  if (new_lr - old_lr > cfg.eps) state.current_lr = new_lr;
}

void reset(GreedyState& state, const GreedyConfig& cfg) {
  state.best = mode_worse(cfg.mode);
  state.reset_countdown = cfg.reset_start;
  state.cooldown_counter = 0;
  state.num_bad_epochs = 0;
  state.warmup_counter = 0;
  state.num_good_epochs = 0;
  state.smoothing_buffer.clear();
}

double greedy_simple_step(GreedyState& state, const GreedyConfig& cfg,
                          double loss) {
  require_finite(loss);
  const double proposed = loss < state.best ? state.current_lr / cfg.factor
                                            : state.current_lr * cfg.factor;
  state.current_lr = std::clamp(proposed, cfg.min_lr, cfg.max_lr);
  state.best = loss;
  ++state.last_epoch;
  return state.current_lr;
}

double greedy_detailed_step(GreedyState& state, const GreedyConfig& cfg,
                            double raw_metric) {
  require_finite(raw_metric);
  double current = raw_metric;
  if (cfg.smoothing) {
    current = smooth(state.smoothing_buffer, cfg.window_size, raw_metric);
  }
  ++state.last_epoch;

  if (is_better(current, state.best, cfg.mode, cfg.threshold)) {
    state.best = current;
    state.num_bad_epochs = 0;
    ++state.num_good_epochs;
  } else {
    ++state.num_bad_epochs;
    state.num_good_epochs = 0;
  }

  if (state.cooldown_counter > 0) {
    --state.cooldown_counter;
    state.num_bad_epochs = 0;
  }
  if (state.warmup_counter > 0) {
    --state.warmup_counter;
    state.num_good_epochs = 0;
  }

  if (state.num_bad_epochs > cfg.patience) {
    reduce_lr(state, cfg);
    state.cooldown_counter = cfg.cooldown;
    state.num_bad_epochs = 0;
  }
  if (state.num_good_epochs > cfg.patience) {
    increase_lr(state, cfg);
    state.warmup_counter = cfg.warmup;
    state.num_good_epochs = 0;
  }

  if (cfg.reset_start > 0) {
    if (state.reset_countdown == 0) reset(state, cfg);
    // Count down only while pinned at the lower bound.
    if (state.current_lr <= cfg.min_lr + cfg.eps && state.reset_countdown > 0) {
      --state.reset_countdown;
    }
  }
  return state.current_lr;
}

void BaselineConfig::validate() const {
  if (!(initial_lr > 0.0)) config_fail("initial_lr must be positive");
  if (!(min_lr >= 0.0)) config_fail("min_lr must be nonnegative");
  if (!(min_lr <= initial_lr)) config_fail("min_lr must not exceed initial_lr");
  if (total_steps < 1) config_fail("total_steps must be positive");
  if (warmup_steps < 0) config_fail("warmup_steps must be nonnegative");
  if (!(warmup_steps < total_steps)) {
    config_fail("warmup_steps must be smaller than total_steps");
  }
  if (restart_period < 1) config_fail("restart_period must be positive");
  if (!(decay_rate > 0.0 && decay_rate <= 1.0)) {
    config_fail("decay_rate must lie in (0, 1]");
  }
  if (!(power > 0.0)) config_fail("power must be positive");
}

double baseline_lr(const BaselineConfig& cfg, std::int64_t t) {
  if (t < 0 || t > cfg.total_steps) {
    std::ostringstream os;
    os << "baseline step " << t << " outside [0, " << cfg.total_steps << "]";
    throw std::out_of_range(os.str());
  }
  const double init = cfg.initial_lr;
  const double lo = cfg.min_lr;
  const double td = static_cast<double>(t);
  const double total = static_cast<double>(cfg.total_steps);
  switch (cfg.kind) {
    case BaselineKind::cosine:
      return lo + 0.5 * (init - lo) * (1.0 + std::cos(std::numbers::pi * td / total));
    case BaselineKind::cosine_restarts: {
      const double period = static_cast<double>(cfg.restart_period);
      const double tc = static_cast<double>(t % cfg.restart_period);
      return lo + 0.5 * (init - lo) * (1.0 + std::cos(std::numbers::pi * tc / period));
    }
    case BaselineKind::exponential:
      return std::max(init * std::pow(cfg.decay_rate, td), lo);
    case BaselineKind::linear:
      return init + (lo - init) * td / total;
    case BaselineKind::polynomial:
      return lo + (init - lo) * std::pow(1.0 - td / total, cfg.power);
    case BaselineKind::constant_warmup:
      if (t < cfg.warmup_steps) {
        // The ramp starts at zero; floor it at min_lr so the optimizer never
        // sees a step below the configured bound.
        return std::max(init * td / static_cast<double>(cfg.warmup_steps), lo);
      }
      return init;
  }
  return init;
}

std::string_view to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::cosine: return "cosine";
    case BaselineKind::cosine_restarts: return "cosine_restarts";
    case BaselineKind::exponential: return "exponential";
    case BaselineKind::linear: return "linear";
    case BaselineKind::polynomial: return "polynomial";
    case BaselineKind::constant_warmup: return "constant_warmup";
  }
  return "unknown";
}

std::string_view to_string(GreedyForm form) {
  return form == GreedyForm::simple ? "simple" : "detailed";
}

std::string_view to_string(Mode mode) {
  return mode == Mode::min ? "min" : "max";
}

BaselineKind parse_baseline_kind(std::string_view name) {
  for (auto k : {BaselineKind::cosine, BaselineKind::cosine_restarts,
                 BaselineKind::exponential, BaselineKind::linear,
                 BaselineKind::polynomial, BaselineKind::constant_warmup}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown baseline scheduler kind '" + std::string(name) + "'");
}

std::string scheduler_name(const SchedulerConfig& cfg) {
  if (const auto* g = std::get_if<GreedyConfig>(&cfg)) {
    return g->form == GreedyForm::simple ? "greedy_simple" : "greedy";
  }
  return std::string(to_string(std::get<BaselineConfig>(cfg).kind));
}

double initial_lr(const SchedulerConfig& cfg) {
  return std::visit([](const auto& c) { return c.initial_lr; }, cfg);
}

SchedulerConfig scale_lr(const SchedulerConfig& cfg, double scale) {
  if (const auto* g = std::get_if<GreedyConfig>(&cfg)) {
    GreedyConfig out = *g;
    out.initial_lr *= scale;
    out.min_lr *= scale;
    out.max_lr *= scale;
    return out;
  }
  BaselineConfig out = std::get<BaselineConfig>(cfg);
  out.initial_lr *= scale;
  out.min_lr *= scale;
  return out;
}

Scheduler::Scheduler(SchedulerConfig cfg) : cfg_(std::move(cfg)) {
  if (const auto* g = std::get_if<GreedyConfig>(&cfg_)) {
    state_ = greedy_init(*g);
    lr_ = g->initial_lr;
  } else {
    const auto& b = std::get<BaselineConfig>(cfg_);
    b.validate();
    state_ = std::int64_t{0};
    lr_ = b.initial_lr;
  }
}

double Scheduler::step(double observed_metric) {
  if (auto* g = std::get_if<GreedyConfig>(&cfg_)) {
    auto& s = std::get<GreedyState>(state_);
    lr_ = g->form == GreedyForm::simple
              ? greedy_simple_step(s, *g, observed_metric)
              : greedy_detailed_step(s, *g, observed_metric);
    return lr_;
  }
  const auto& b = std::get<BaselineConfig>(cfg_);
  auto& t = std::get<std::int64_t>(state_);
  // Past the horizon the schedule holds its final value.
  lr_ = baseline_lr(b, std::min<std::int64_t>(t, b.total_steps));
  ++t;
  return lr_;
}

}  // namespace greedylr::sched
