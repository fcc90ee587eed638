// SPDX-License-Identifier: Apache-2.0
/**
 * @file   runner.hpp
 * @brief  Single runs, run summaries, paired comparisons, experiment grids
 *         and the convergence-theory experiments.
 */
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "greedylr/noise.hpp"
#include "greedylr/optim.hpp"
#include "greedylr/problems.hpp"
#include "greedylr/scheduler.hpp"

namespace greedylr::runner {

using problems::Vector;

struct RunConfig {
  problems::ProblemSpec problem;
  sched::SchedulerConfig scheduler = sched::GreedyConfig{};
  optim::OptimizerConfig optimizer;
  noise::NoiseSpec noise;
  int total_steps = 200;
  std::uint64_t seed = 0;
  bool record_iterates = false;

  void validate() const;
};

struct Trace {
  std::vector<double> true_loss;
  std::vector<double> observed_loss;
  std::vector<double> lr;
  std::vector<double> grad_norm;
  std::vector<int> component;
  // x_t before the update and the gradient applied to it, when recorded.
  std::vector<Vector> iterates;
  std::vector<Vector> gradients;
  int total_steps = 0;
  bool diverged = false;
  Vector average_iterate;
  Vector final_iterate;
  double final_full_loss = 0.0;
  double avg_iterate_full_loss = 0.0;

  std::size_t size() const { return true_loss.size(); }
};

/// Runs one optimization from the problem's initial point (or x0 when
/// given). Builds the scheduler, optimizer and noise state from cfg; the
/// problem must match cfg.problem for the result to be reproducible from
/// cfg alone.
Trace run_one(const problems::Problem& problem, const RunConfig& cfg,
              const std::optional<Vector>& x0 = std::nullopt);
Trace run_one(const RunConfig& cfg);

struct RunSummary {
  double stage10 = 0.0;
  double stage50 = 0.0;
  double stage100 = 0.0;
  double final_loss = 0.0;
  double max_loss = 0.0;
  std::optional<double> recovery_ratio;
  std::optional<int> recovery_speed;
  bool diverged = false;
};

/// One-based step index of a stage: ceil(percent / 100 * total_steps).
int stage_step(int percent, int total_steps);

RunSummary summarize(const Trace& trace);

enum class Verdict { yes, yes_star, no, no_star };
std::string_view to_string(Verdict v);

enum class CutoffKind { absolute, relative };

struct Cutoff {
  CutoffKind kind = CutoffKind::absolute;
  double value = 0.1;
};

struct ComparisonVerdict {
  Verdict stage10;
  Verdict stage50;
  Verdict stage100;
  Verdict overall;  // from the final-window loss
  double delta10 = 0.0;
  double delta50 = 0.0;
  double delta100 = 0.0;
  double delta_final = 0.0;
};

/// Classifies a single loss pair. delta = baseline - greedy.
Verdict classify_delta(double greedy_loss, double baseline_loss,
                       const Cutoff& cutoff);

struct PairKey {
  std::string problem;
  std::string noise;
  std::uint64_t seed = 0;
  auto operator<=>(const PairKey&) const = default;
};

/// Throws std::invalid_argument if the pairing keys differ.
ComparisonVerdict classify(const RunSummary& greedy, const RunSummary& baseline,
                           const Cutoff& cutoff = {},
                           const std::optional<PairKey>& greedy_key = std::nullopt,
                           const std::optional<PairKey>& baseline_key = std::nullopt);

struct VerdictCounts {
  int yes = 0;
  int yes_star = 0;
  int no = 0;
  int no_star = 0;
  int final_within_cutoff = 0;
  int pairs = 0;
  double benefit_sum = 0.0;
  double max_benefit = 0.0;
  int stage_entries = 0;

  int sum() const { return yes + yes_star + no + no_star; }
  double as_good_or_better_pct() const;
  double better_pct() const;
  double worse_pct() const;
  double as_good_pct() const;
  double clearly_better_pct() const;
  double average_benefit() const;

  void add(const ComparisonVerdict& v);
};

// Grid experiments.

struct GridProblem {
  std::string name;
  problems::ProblemSpec spec;
  double base_lr = 0.01;
  optim::OptimizerConfig optimizer;
  // Strength used for each noise kind on this problem.
  double gaussian_strength = 0.1;
  double spike_strength = 5.0;
  double adversarial_strength = 1.0;
};

struct GridScheduler {
  std::string name;
  // Learning-rate fields are expressed for a base LR of 1 and scaled by each
  // problem's base_lr; baseline horizons are set to the run length.
  sched::SchedulerConfig config;
};

struct GridSpec {
  std::vector<GridScheduler> schedulers;
  std::vector<GridProblem> problems;
  std::vector<noise::NoiseKind> noises;
  std::vector<std::uint64_t> seeds;
  int total_steps = 200;
  int jobs = 1;
};

struct GridCell {
  std::string scheduler;
  std::optional<double> factor;
  std::string problem;
  noise::NoiseKind noise = noise::NoiseKind::none;
  std::uint64_t seed = 0;
  RunConfig config;
  RunSummary summary;
  std::optional<std::string> error;
  // Kept for the LR-trajectory band figure.
  std::vector<double> lr;
};

struct Percentiles {
  double p10 = 0.0;
  double p50 = 0.0;
  double p90 = 0.0;
};

struct GridResult {
  std::vector<GridCell> cells;  // sorted by (scheduler, problem, noise, seed)
  // scheduler -> noise -> median final loss
  std::map<std::string, std::map<std::string, double>> medians;
  std::map<std::string, Percentiles> percentiles;
};

/// Linear-interpolated quantile of a sample (q in [0, 1]).
double quantile(std::vector<double> values, double q);

RunConfig make_cell_config(const GridSpec& grid, const GridScheduler& s,
                           const GridProblem& p, noise::NoiseKind noise,
                           std::uint64_t seed);

GridResult run_grid(const GridSpec& grid);

/// Default desk-scale robustness grid: GreedyLR plus cosine, cosine with
/// restarts and exponential decay; six problems; all five noise kinds;
/// five seeds.
GridSpec default_robustness_grid();

// F sweep.

struct FSweepResult {
  double factor = 0.0;
  std::vector<RunSummary> per_seed;
  std::vector<Trace> traces;  // first seed only
  double median_final_loss = 0.0;
  int diverged_runs = 0;
};

std::vector<FSweepResult> f_sweep(const problems::Problem& problem,
                                  const RunConfig& base,
                                  const std::vector<double>& factors,
                                  const std::vector<std::uint64_t>& seeds);

// Convergence theory.

struct Theorem1Result {
  int horizon = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};

/// Mean over seeds of f(x_bar_T) - f* against
/// |x0 - x*|^2 / (2 min_lr T) + max_lr^2 L_max / (2 min_lr).
/// cfg.scheduler must be a GreedyConfig; cfg.total_steps is replaced by
/// horizon. Throws if the problem lacks f* or L_max.
Theorem1Result theorem1_check(const problems::Problem& problem,
                              const RunConfig& cfg, int horizon,
                              const std::vector<std::uint64_t>& seeds,
                              const std::optional<Vector>& x0 = std::nullopt);

/// 1 - 1 / L_max; only meaningful for L_max > 1.
double optimal_factor(double l_max);

struct Theorem2Row {
  double factor = 0.0;
  double median_suboptimality = 0.0;
  bool is_optimal = false;
};

/// Median over seeds of f(x_T) - f* for each factor (the optimal factor is
/// inserted if absent).
std::vector<Theorem2Row> theorem2_sweep(const problems::Problem& problem,
                                        const RunConfig& cfg,
                                        std::vector<double> factors,
                                        const std::vector<std::uint64_t>& seeds);

/// Runs cfg twice with the scheduler replaced by a constant LR, once
/// noise-free and once with the given noise, and reports whether the
/// gradient and true-loss streams match bit for bit.
bool gradient_untouched_check(const problems::Problem& problem,
                              const RunConfig& cfg,
                              const noise::NoiseSpec& spec);

}  // namespace greedylr::runner
