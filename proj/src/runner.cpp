// SPDX-License-Identifier: Apache-2.0
#include "greedylr/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>
#include <tuple>

#include "greedylr/rng.hpp"

namespace greedylr::runner {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool loss_diverged(double loss) {
  return !std::isfinite(loss) || std::abs(loss) > optim::kDivergenceLimit;
}

double stage_value(const Trace& trace, int percent) {
  const auto idx = static_cast<std::size_t>(stage_step(percent, trace.total_steps) - 1);
  return idx < trace.size() ? trace.true_loss[idx] : kInf;
}

double median_of(std::vector<double> v) { return quantile(std::move(v), 0.5); }

}  // namespace

void RunConfig::validate() const {
  if (total_steps < 10) {
    throw std::invalid_argument("total_steps must be at least 10");
  }
  problem.validate();
  noise.validate();
  optimizer.validate();
  std::visit([](const auto& c) { c.validate(); }, scheduler);
}

Trace run_one(const problems::Problem& problem, const RunConfig& cfg,
              const std::optional<Vector>& x0) {
  cfg.validate();
  const int n = problem.n_components();
  optim::Iterate it{x0 ? *x0 : problem.initial_point(), 0};
  if (it.x.size() != problem.dimension()) {
    throw std::invalid_argument("initial point has the wrong dimension");
  }
  sched::Scheduler scheduler(cfg.scheduler);
  optim::OptimizerState opt(cfg.optimizer, problem.dimension());
  noise::NoiseState noise_state(cfg.noise, cfg.seed);
  RngStream sampler(cfg.seed, StreamTag::sampling);

  Trace tr;
  tr.total_steps = cfg.total_steps;
  const auto reserve = static_cast<std::size_t>(cfg.total_steps);
  tr.true_loss.reserve(reserve);
  tr.observed_loss.reserve(reserve);
  tr.lr.reserve(reserve);
  tr.grad_norm.reserve(reserve);
  tr.component.reserve(reserve);

  Vector iterate_sum = Vector::Zero(problem.dimension());
  for (int t = 0; t < cfg.total_steps; ++t) {
    const int i = static_cast<int>(sampler.below(static_cast<std::uint64_t>(n)));
    const problems::Evaluation e = problem.eval_component(i, it.x);
    if (loss_diverged(e.loss) || !e.grad.allFinite()) {
      tr.diverged = true;
      break;
    }
    const double observed = noise_state.perturb(e.loss, t);
    const double lr = scheduler.step(observed);

    tr.true_loss.push_back(e.loss);
    tr.observed_loss.push_back(observed);
    tr.lr.push_back(lr);
    tr.grad_norm.push_back(e.grad.norm());
    tr.component.push_back(i);
    if (cfg.record_iterates) {
      tr.iterates.push_back(it.x);
      tr.gradients.push_back(e.grad);
    }
    iterate_sum += it.x;

    if (optim::optimizer_step(opt, it, e.grad, lr) == optim::StepStatus::diverged) {
      tr.diverged = true;
      break;
    }
  }

  tr.final_iterate = it.x;
  const auto steps = static_cast<double>(std::max<std::size_t>(tr.size(), 1));
  tr.average_iterate = iterate_sum / steps;
  if (tr.diverged) {
    tr.final_full_loss = kInf;
    tr.avg_iterate_full_loss = kInf;
  } else {
    tr.final_full_loss = problem.eval_full(it.x).loss;
    tr.avg_iterate_full_loss = problem.eval_full(tr.average_iterate).loss;
  }
  return tr;
}

Trace run_one(const RunConfig& cfg) {
  const auto problem = problems::Problem::make(cfg.problem);
  return run_one(problem, cfg);
}

int stage_step(int percent, int total_steps) {
  return static_cast<int>((static_cast<long long>(percent) * total_steps + 99) / 100);
}

RunSummary summarize(const Trace& trace) {
  if (trace.size() == 0 && !trace.diverged) {
    throw std::invalid_argument("cannot summarize an empty trace");
  }
  RunSummary s;
  s.diverged = trace.diverged;
  s.stage10 = stage_value(trace, 10);
  s.stage50 = stage_value(trace, 50);
  s.stage100 = stage_value(trace, 100);
  if (trace.size() == 0) {
    s.final_loss = kInf;
    s.max_loss = kInf;
    return s;
  }

  const auto peak = std::max_element(trace.true_loss.begin(), trace.true_loss.end());
  s.max_loss = *peak;
  if (trace.diverged) {
    s.final_loss = kInf;
    return s;
  }

  const std::size_t window = std::min<std::size_t>(10, trace.size());
  double tail = 0.0;
  for (std::size_t k = trace.size() - window; k < trace.size(); ++k) {
    tail += trace.true_loss[k];
  }
  s.final_loss = tail / static_cast<double>(window);
  if (s.final_loss > 0.0) s.recovery_ratio = s.max_loss / s.final_loss;

  // Recovery speed: steps from the peak until the loss drops below the value
  // recorded one step before the peak.
  const auto peak_idx = static_cast<std::size_t>(peak - trace.true_loss.begin());
  if (peak_idx > 0) {
    const double before = trace.true_loss[peak_idx - 1];
    for (std::size_t k = peak_idx + 1; k < trace.size(); ++k) {
      if (trace.true_loss[k] < before) {
        s.recovery_speed = static_cast<int>(k - peak_idx);
        break;
      }
    }
  }
  return s;
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::yes: return "yes";
    case Verdict::yes_star: return "yes*";
    case Verdict::no: return "no";
    case Verdict::no_star: return "no*";
  }
  return "?";
}

Verdict classify_delta(double greedy_loss, double baseline_loss,
                       const Cutoff& cutoff) {
  double delta = baseline_loss - greedy_loss;
  if (std::isnan(delta)) delta = 0.0;  // both diverged
  const double bar = cutoff.kind == CutoffKind::absolute
                         ? cutoff.value
                         : cutoff.value * std::abs(greedy_loss);
  const bool insignificant = std::abs(delta) < bar;
  if (delta > 0.0) return insignificant ? Verdict::yes_star : Verdict::yes;
  return insignificant ? Verdict::no_star : Verdict::no;
}

ComparisonVerdict classify(const RunSummary& greedy, const RunSummary& baseline,
                           const Cutoff& cutoff,
                           const std::optional<PairKey>& greedy_key,
                           const std::optional<PairKey>& baseline_key) {
  if (greedy_key.has_value() != baseline_key.has_value() ||
      (greedy_key && *greedy_key != *baseline_key)) {
    throw std::invalid_argument("classify: summaries are not from paired runs");
  }
  auto delta = [](double g, double b) {
    const double d = b - g;
    return std::isnan(d) ? 0.0 : d;
  };
  ComparisonVerdict v;
  v.stage10 = classify_delta(greedy.stage10, baseline.stage10, cutoff);
  v.stage50 = classify_delta(greedy.stage50, baseline.stage50, cutoff);
  v.stage100 = classify_delta(greedy.stage100, baseline.stage100, cutoff);
  v.overall = classify_delta(greedy.final_loss, baseline.final_loss, cutoff);
  v.delta10 = delta(greedy.stage10, baseline.stage10);
  v.delta50 = delta(greedy.stage50, baseline.stage50);
  v.delta100 = delta(greedy.stage100, baseline.stage100);
  v.delta_final = delta(greedy.final_loss, baseline.final_loss);
  return v;
}

void VerdictCounts::add(const ComparisonVerdict& v) {
  for (Verdict s : {v.stage10, v.stage50, v.stage100}) {
    switch (s) {
      case Verdict::yes: ++yes; break;
      case Verdict::yes_star: ++yes_star; break;
      case Verdict::no: ++no; break;
      case Verdict::no_star: ++no_star; break;
    }
  }
  for (double d : {v.delta10, v.delta50, v.delta100}) {
    if (stage_entries == 0 || d > max_benefit) max_benefit = d;
    benefit_sum += d;
    ++stage_entries;
  }
  if (v.overall == Verdict::yes_star || v.overall == Verdict::no_star) {
    ++final_within_cutoff;
  }
  ++pairs;
}

namespace {
double pct(int part, int whole) {
  return whole == 0 ? 0.0 : 100.0 * static_cast<double>(part) / whole;
}
}  // namespace

double VerdictCounts::as_good_or_better_pct() const {
  return pct(yes + yes_star + no_star, sum());
}
double VerdictCounts::better_pct() const { return pct(yes + yes_star, sum()); }
double VerdictCounts::worse_pct() const { return pct(no, sum()); }
double VerdictCounts::as_good_pct() const { return pct(yes_star + no_star, sum()); }
double VerdictCounts::clearly_better_pct() const { return pct(yes, sum()); }
double VerdictCounts::average_benefit() const {
  return stage_entries == 0 ? 0.0 : benefit_sum / stage_entries;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0 || values[lo] == values[hi]) return values[lo];
  return values[lo] + frac * (values[hi] - values[lo]);
}

RunConfig make_cell_config(const GridSpec& grid, const GridScheduler& s,
                           const GridProblem& p, noise::NoiseKind kind,
                           std::uint64_t seed) {
  RunConfig cfg;
  cfg.problem = p.spec;
  cfg.problem.seed = derive_key(p.spec.seed, StreamTag::problem_data, seed);
  cfg.scheduler = sched::scale_lr(s.config, p.base_lr);
  if (auto* b = std::get_if<sched::BaselineConfig>(&cfg.scheduler)) {
    b->total_steps = grid.total_steps;
  }
  cfg.optimizer = p.optimizer;
  cfg.noise.kind = kind;
  switch (kind) {
    case noise::NoiseKind::none: cfg.noise.strength = 0.0; break;
    case noise::NoiseKind::gaussian: cfg.noise.strength = p.gaussian_strength; break;
    case noise::NoiseKind::periodic_spike:
    case noise::NoiseKind::random_spike: cfg.noise.strength = p.spike_strength; break;
    case noise::NoiseKind::adversarial: cfg.noise.strength = p.adversarial_strength; break;
  }
  cfg.total_steps = grid.total_steps;
  cfg.seed = seed;
  return cfg;
}

GridResult run_grid(const GridSpec& grid) {
  if (grid.schedulers.empty() || grid.problems.empty() || grid.noises.empty() ||
      grid.seeds.empty()) {
    throw std::invalid_argument("grid must have at least one cell");
  }

  GridResult result;
  for (const auto& s : grid.schedulers) {
    for (const auto& p : grid.problems) {
      for (auto kind : grid.noises) {
        for (auto seed : grid.seeds) {
          GridCell cell;
          cell.scheduler = s.name;
          if (const auto* g = std::get_if<sched::GreedyConfig>(&s.config)) {
            cell.factor = g->factor;
          }
          cell.problem = p.name;
          cell.noise = kind;
          cell.seed = seed;
          cell.config = make_cell_config(grid, s, p, kind, seed);
          result.cells.push_back(std::move(cell));
        }
      }
    }
  }
  std::stable_sort(result.cells.begin(), result.cells.end(),
                   [](const GridCell& a, const GridCell& b) {
                     return std::tie(a.scheduler, a.problem, a.noise, a.seed) <
                            std::tie(b.scheduler, b.problem, b.noise, b.seed);
                   });

  auto execute = [&](GridCell& cell) {
    try {
      const auto problem = problems::Problem::make(cell.config.problem);
      const Trace tr = run_one(problem, cell.config);
      cell.summary = summarize(tr);
      cell.lr = tr.lr;
    } catch (const std::exception& ex) {
      cell.error = ex.what();
    }
  };

  const int jobs = std::max(1, grid.jobs);
  if (jobs == 1) {
    for (auto& cell : result.cells) execute(cell);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (int w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t k = next++; k < result.cells.size(); k = next++) {
          execute(result.cells[k]);
        }
      });
    }
    for (auto& w : workers) w.join();
  }

  std::map<std::string, std::map<std::string, std::vector<double>>> by_noise;
  std::map<std::string, std::vector<double>> by_scheduler;
  for (const auto& cell : result.cells) {
    if (cell.error) continue;
    by_noise[cell.scheduler][std::string(noise::to_string(cell.noise))].push_back(
        cell.summary.final_loss);
    by_scheduler[cell.scheduler].push_back(cell.summary.final_loss);
  }
  for (auto& [s, noises] : by_noise) {
    for (auto& [n, v] : noises) result.medians[s][n] = median_of(std::move(v));
  }
  for (auto& [s, v] : by_scheduler) {
    result.percentiles[s] = {quantile(v, 0.1), quantile(v, 0.5), quantile(v, 0.9)};
  }
  return result;
}

GridSpec default_robustness_grid() {
  using problems::ProblemKind;
  GridSpec g;
  g.total_steps = 200;
  g.seeds = {1, 2, 3, 4, 5};
  g.noises = {noise::NoiseKind::none, noise::NoiseKind::gaussian,
              noise::NoiseKind::periodic_spike, noise::NoiseKind::random_spike,
              noise::NoiseKind::adversarial};

  sched::GreedyConfig greedy;
  greedy.form = sched::GreedyForm::detailed;
  greedy.factor = 0.95;
  greedy.patience = 10;
  greedy.min_lr = 0.1;
  greedy.max_lr = 10.0;
  greedy.initial_lr = 1.0;
  greedy.smoothing = true;
  greedy.window_size = 50;

  sched::BaselineConfig cosine;
  cosine.kind = sched::BaselineKind::cosine;
  cosine.initial_lr = 1.0;
  cosine.min_lr = 0.0;
  sched::BaselineConfig restarts = cosine;
  restarts.kind = sched::BaselineKind::cosine_restarts;
  restarts.restart_period = 50;
  sched::BaselineConfig expo = cosine;
  expo.kind = sched::BaselineKind::exponential;
  expo.decay_rate = 0.98;

  g.schedulers = {{"greedy", greedy},
                  {"cosine", cosine},
                  {"cosine_restarts", restarts},
                  {"exponential", expo}};

  optim::OptimizerConfig sgd;
  optim::OptimizerConfig adam;
  adam.kind = optim::OptimizerKind::adam;

  auto quad = [](int d, int n, double kappa, double l) {
    problems::ProblemSpec s;
    s.kind = ProblemKind::quadratic_sum;
    s.dimension = d;
    s.n_components = n;
    s.condition_number = kappa;
    s.smoothness = l;
    s.heterogeneity = 0.05;
    return s;
  };
  problems::ProblemSpec logistic;
  logistic.kind = ProblemKind::logistic;
  logistic.dimension = 10;
  logistic.n_components = 32;
  logistic.batch_size = 8;
  logistic.label_noise = 0.02;
  problems::ProblemSpec mlp_small;
  mlp_small.kind = ProblemKind::mlp;
  mlp_small.dimension = 4;
  mlp_small.hidden = 16;
  mlp_small.n_components = 32;
  mlp_small.batch_size = 8;
  mlp_small.target_noise = 0.01;
  problems::ProblemSpec mlp_wide = mlp_small;
  mlp_wide.dimension = 8;
  mlp_wide.hidden = 32;
  problems::ProblemSpec rosen;
  rosen.kind = ProblemKind::rosenbrock;

  g.problems = {
      {"quad_well", quad(8, 16, 10.0, 1.0), 0.5, sgd, 0.1, 5.0, 1.0},
      {"quad_ill", quad(32, 32, 100.0, 4.0), 0.1, sgd, 0.1, 5.0, 1.0},
      {"logistic", logistic, 1.0, sgd, 0.05, 5.0, 1.0},
      {"mlp_small", mlp_small, 0.01, adam, 0.05, 5.0, 1.0},
      {"mlp_wide", mlp_wide, 0.005, adam, 0.05, 5.0, 1.0},
      {"rosenbrock", rosen, 0.05, adam, 0.5, 5.0, 1.0},
  };
  return g;
}

std::vector<FSweepResult> f_sweep(const problems::Problem& problem,
                                  const RunConfig& base,
                                  const std::vector<double>& factors,
                                  const std::vector<std::uint64_t>& seeds) {
  if (!std::holds_alternative<sched::GreedyConfig>(base.scheduler)) {
    throw std::invalid_argument("f_sweep needs a GreedyLR base config");
  }
  if (seeds.empty()) throw std::invalid_argument("f_sweep needs at least one seed");
  std::vector<FSweepResult> out;
  for (double f : factors) {
    if (!(f > 0.0 && f < 1.0)) {
      throw std::invalid_argument("f_sweep factors must lie in (0, 1)");
    }
    FSweepResult r;
    r.factor = f;
    std::vector<double> finals;
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      RunConfig cfg = base;
      std::get<sched::GreedyConfig>(cfg.scheduler).factor = f;
      cfg.seed = seeds[k];
      Trace tr = run_one(problem, cfg);
      RunSummary s = summarize(tr);
      if (s.diverged) ++r.diverged_runs;
      finals.push_back(s.final_loss);
      r.per_seed.push_back(s);
      if (k == 0) r.traces.push_back(std::move(tr));
    }
    r.median_final_loss = median_of(std::move(finals));
    out.push_back(std::move(r));
  }
  return out;
}

Theorem1Result theorem1_check(const problems::Problem& problem,
                              const RunConfig& cfg, int horizon,
                              const std::vector<std::uint64_t>& seeds,
                              const std::optional<Vector>& x0) {
  if (!problem.f_star() || !problem.x_star()) {
    throw std::invalid_argument("theorem1_check needs a problem with known f*");
  }
  if (!problem.l_max()) {
    throw std::invalid_argument("theorem1_check needs a problem with known L_max");
  }
  const auto* greedy = std::get_if<sched::GreedyConfig>(&cfg.scheduler);
  if (!greedy) throw std::invalid_argument("theorem1_check needs a GreedyLR config");
  if (seeds.empty()) throw std::invalid_argument("theorem1_check needs seeds");

  RunConfig run = cfg;
  run.total_steps = horizon;
  const Vector start = x0 ? *x0 : problem.initial_point();
  double gap_sum = 0.0;
  for (auto seed : seeds) {
    run.seed = seed;
    const Trace tr = run_one(problem, run, start);
    gap_sum += tr.avg_iterate_full_loss - *problem.f_star();
  }
  Theorem1Result r;
  r.horizon = horizon;
  r.lhs = gap_sum / static_cast<double>(seeds.size());
  const double dist2 = (start - *problem.x_star()).squaredNorm();
  const double t = static_cast<double>(horizon);
  r.rhs = dist2 / (2.0 * greedy->min_lr * t) +
          greedy->max_lr * greedy->max_lr * *problem.l_max() / (2.0 * greedy->min_lr);
  r.holds = r.lhs <= r.rhs;
  return r;
}

double optimal_factor(double l_max) { return 1.0 - 1.0 / l_max; }

std::vector<Theorem2Row> theorem2_sweep(const problems::Problem& problem,
                                        const RunConfig& cfg,
                                        std::vector<double> factors,
                                        const std::vector<std::uint64_t>& seeds) {
  if (!problem.f_star() || !problem.l_max()) {
    throw std::invalid_argument("theorem2_sweep needs known f* and L_max");
  }
  if (!(*problem.l_max() > 1.0)) {
    throw std::invalid_argument("the optimal factor needs L_max > 1");
  }
  if (!std::holds_alternative<sched::GreedyConfig>(cfg.scheduler)) {
    throw std::invalid_argument("theorem2_sweep needs a GreedyLR config");
  }
  const double best_f = optimal_factor(*problem.l_max());
  if (std::find(factors.begin(), factors.end(), best_f) == factors.end()) {
    factors.push_back(best_f);
    std::sort(factors.begin(), factors.end());
  }
  std::vector<Theorem2Row> rows;
  for (double f : factors) {
    RunConfig run = cfg;
    std::get<sched::GreedyConfig>(run.scheduler).factor = f;
    std::vector<double> gaps;
    for (auto seed : seeds) {
      run.seed = seed;
      const Trace tr = run_one(problem, run);
      gaps.push_back(tr.final_full_loss - *problem.f_star());
    }
    rows.push_back({f, median_of(std::move(gaps)), f == best_f});
  }
  return rows;
}

bool gradient_untouched_check(const problems::Problem& problem,
                              const RunConfig& cfg,
                              const noise::NoiseSpec& spec) {
  RunConfig base = cfg;
  sched::BaselineConfig constant;
  constant.kind = sched::BaselineKind::constant_warmup;
  constant.initial_lr = sched::initial_lr(cfg.scheduler);
  constant.total_steps = cfg.total_steps;
  base.scheduler = constant;
  base.record_iterates = true;
  base.noise = noise::NoiseSpec{};
  RunConfig noisy = base;
  noisy.noise = spec;

  const Trace a = run_one(problem, base);
  const Trace b = run_one(problem, noisy);
  if (a.size() != b.size() || a.diverged != b.diverged) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a.true_loss[k] != b.true_loss[k]) return false;
    if (a.gradients[k].size() != b.gradients[k].size()) return false;
    for (Eigen::Index j = 0; j < a.gradients[k].size(); ++j) {
      if (a.gradients[k][j] != b.gradients[k][j]) return false;
    }
  }
  return true;
}

}  // namespace greedylr::runner
