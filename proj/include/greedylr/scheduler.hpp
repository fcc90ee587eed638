// SPDX-License-Identifier: Apache-2.0
/**
 * @file   scheduler.hpp
 * @brief  GreedyLR (simple and detailed forms) and closed-form baseline
 *         learning-rate schedules behind one step(metric) interface.
 *
 * GreedyLR divides the learning rate by a factor F in (0, 1) when the
 * observed loss improves and multiplies by F when it does not. The detailed
 * form adds relative threshold, patience, cooldown, warmup, streaming-mean
 * smoothing, LR bounds and a lower-bound reset countdown.
 */
#pragma once

#include <cstdint>
#include <deque>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>

namespace greedylr::sched {

/// Raised when a scheduler is fed a NaN or infinite metric.
class InvalidMetric : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a scheduler configuration violates its invariants.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Mode { min, max };
enum class GreedyForm { simple, detailed };

struct GreedyConfig {
  GreedyForm form = GreedyForm::detailed;
  double factor = 0.95;
  int patience = 10;
  double threshold = 0.0;
  int cooldown = 0;
  int warmup = 0;
  double min_lr = 1e-4;
  double max_lr = 1.0;
  double eps = 1e-8;
  bool smoothing = false;
  int window_size = 50;
  // 0 disables the lower-bound reset countdown.
  int reset_start = 0;
  Mode mode = Mode::min;
  double initial_lr = 1e-3;

  /// Throws ConfigError naming the first violated invariant.
  void validate() const;
};

/// Streaming mean over the last window_size observations.
class SmoothingWindow {
 public:
  double push(double value, int window_size);
  void clear() { values_.clear(); }
  std::size_t size() const { return values_.size(); }
  bool operator==(const SmoothingWindow&) const = default;

 private:
  std::deque<double> values_;
};

struct GreedyState {
  double current_lr = 0.0;
  double best = 0.0;
  int num_bad_epochs = 0;
  int num_good_epochs = 0;
  int cooldown_counter = 0;
  int warmup_counter = 0;
  std::int64_t last_epoch = -1;
  int reset_countdown = 0;
  SmoothingWindow smoothing_buffer;

  bool operator==(const GreedyState&) const = default;
};

GreedyState greedy_init(const GreedyConfig& cfg);

bool is_better(double a, double best, Mode mode, double threshold);

double smooth(SmoothingWindow& buffer, int window_size, double value);

void reduce_lr(GreedyState& state, const GreedyConfig& cfg);
void increase_lr(GreedyState& state, const GreedyConfig& cfg);

/// Clears controller state (best, counters, smoothing buffer) and rearms
/// the reset countdown. The learning rate and epoch counter are kept.
void reset(GreedyState& state, const GreedyConfig& cfg);

/// One step of the two-branch rule: loss < previous ? lr / F : lr * F,
/// clamped to [min_lr, max_lr]. The previous loss lives in state.best and
/// starts at +inf, so the first call counts as an improvement.
double greedy_simple_step(GreedyState& state, const GreedyConfig& cfg,
                          double loss);

double greedy_detailed_step(GreedyState& state, const GreedyConfig& cfg,
                            double raw_metric);

enum class BaselineKind {
  cosine,
  cosine_restarts,
  exponential,
  linear,
  polynomial,
  constant_warmup,
};

struct BaselineConfig {
  BaselineKind kind = BaselineKind::cosine;
  double initial_lr = 1e-3;
  double min_lr = 0.0;
  int total_steps = 200;
  int warmup_steps = 0;
  int restart_period = 50;
  double decay_rate = 0.98;
  double power = 1.0;

  void validate() const;
};

/// Closed-form baseline schedule value at step t in [0, total_steps].
double baseline_lr(const BaselineConfig& cfg, std::int64_t t);

using SchedulerConfig = std::variant<GreedyConfig, BaselineConfig>;

std::string_view to_string(BaselineKind kind);
std::string_view to_string(GreedyForm form);
std::string_view to_string(Mode mode);
BaselineKind parse_baseline_kind(std::string_view name);

/// Short label used in result tables: "greedy", "greedy_simple", or the
/// baseline kind.
std::string scheduler_name(const SchedulerConfig& cfg);

/// Initial learning rate of either config.
double initial_lr(const SchedulerConfig& cfg);

/// Returns a copy with every learning-rate field multiplied by scale.
SchedulerConfig scale_lr(const SchedulerConfig& cfg, double scale);

/// Owns one run's scheduler state. Baselines ignore the metric and advance
/// their step index; GreedyLR reacts to it.
class Scheduler {
 public:
  explicit Scheduler(SchedulerConfig cfg);

  double step(double observed_metric);
  double lr() const { return lr_; }
  const SchedulerConfig& config() const { return cfg_; }
  const GreedyState* greedy_state() const {
    return std::get_if<GreedyState>(&state_);
  }

 private:
  SchedulerConfig cfg_;
  std::variant<GreedyState, std::int64_t> state_;
  double lr_;
};

}  // namespace greedylr::sched
