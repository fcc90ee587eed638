// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <tuple>

#include "greedylr/runner.hpp"

using namespace greedylr;
using namespace greedylr::runner;
using problems::Matrix;
using problems::Problem;
using problems::Vector;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

sched::BaselineConfig constant_lr(double lr, int total_steps) {
  sched::BaselineConfig c;
  c.kind = sched::BaselineKind::constant_warmup;
  c.initial_lr = lr;
  c.min_lr = 0.0;
  c.total_steps = total_steps;
  return c;
}

Problem scalar_quadratic(double a) {
  return Problem::quadratic({Matrix::Constant(1, 1, a)}, {Vector::Zero(1)});
}

Trace trace_of(std::vector<double> losses) {
  Trace t;
  t.total_steps = static_cast<int>(losses.size());
  t.true_loss = losses;
  t.observed_loss = losses;
  t.lr.assign(losses.size(), 0.1);
  t.grad_norm.assign(losses.size(), 1.0);
  return t;
}

RunSummary summary_with(double s10, double s50, double s100, double final) {
  RunSummary s;
  s.stage10 = s10;
  s.stage50 = s50;
  s.stage100 = s100;
  s.final_loss = final;
  return s;
}

Verdict mirror(Verdict v) {
  switch (v) {
    case Verdict::yes: return Verdict::no;
    case Verdict::no: return Verdict::yes;
    case Verdict::yes_star: return Verdict::no_star;
    case Verdict::no_star: return Verdict::yes_star;
  }
  return v;
}

RunConfig quad_config(int steps, std::uint64_t seed) {
  RunConfig cfg;
  cfg.problem.kind = problems::ProblemKind::quadratic_sum;
  cfg.problem.dimension = 6;
  cfg.problem.n_components = 12;
  cfg.problem.heterogeneity = 0.05;
  cfg.problem.seed = 99;
  cfg.total_steps = steps;
  cfg.seed = seed;
  sched::GreedyConfig g;
  g.initial_lr = 0.2;
  g.min_lr = 0.02;
  g.max_lr = 0.5;
  cfg.scheduler = g;
  return cfg;
}

}  // namespace

TEST_CASE("unit-curvature quadratic with lr 1 lands on the minimizer in one step") {
  const auto p = scalar_quadratic(1.0);
  RunConfig cfg;
  cfg.total_steps = 10;
  cfg.scheduler = constant_lr(1.0, 10);
  Vector x0(1);
  x0 << 3.7;
  const Trace tr = run_one(p, cfg, x0);
  REQUIRE(tr.size() == 10);
  CHECK(tr.true_loss[0] == doctest::Approx(0.5 * 3.7 * 3.7));
  for (std::size_t t = 1; t < tr.size(); ++t) CHECK(tr.true_loss[t] == 0.0);
  CHECK(tr.final_iterate[0] == 0.0);
  CHECK_FALSE(tr.diverged);
}

TEST_CASE("an unstable constant step size diverges and truncates the trace") {
  const auto p = scalar_quadratic(1.0);
  RunConfig cfg;
  cfg.total_steps = 1000;
  cfg.scheduler = constant_lr(2.5, 1000);
  Vector x0(1);
  x0 << 1.0;
  const Trace tr = run_one(p, cfg, x0);
  CHECK(tr.diverged);
  CHECK(tr.size() < 1000);
  CHECK(tr.true_loss.size() == tr.lr.size());
  CHECK(tr.lr.size() == tr.observed_loss.size());
  CHECK(tr.grad_norm.size() == tr.lr.size());
  // |x_t| = 1.5^t, so the loss passes 1e12 near t = 35.
  CHECK(tr.size() < 80);
  const RunSummary s = summarize(tr);
  CHECK(s.diverged);
  CHECK(s.final_loss == kInf);
  CHECK_FALSE(s.recovery_ratio.has_value());
}

TEST_CASE("run_one is deterministic and records equal-length streams") {
  const RunConfig cfg = quad_config(120, 4);
  const Trace a = run_one(cfg);
  const Trace b = run_one(cfg);
  CHECK(a.size() == 120);
  CHECK(a.true_loss == b.true_loss);
  CHECK(a.observed_loss == b.observed_loss);
  CHECK(a.lr == b.lr);
  CHECK(a.grad_norm == b.grad_norm);
  CHECK(a.component == b.component);
  CHECK(a.final_iterate == b.final_iterate);
}

TEST_CASE("average iterate is the mean of the recorded iterates") {
  RunConfig cfg = quad_config(50, 2);
  cfg.record_iterates = true;
  const auto p = Problem::make(cfg.problem);
  const Trace tr = run_one(p, cfg);
  Vector mean = Vector::Zero(p.dimension());
  for (const auto& x : tr.iterates) mean += x;
  mean /= static_cast<double>(tr.iterates.size());
  CHECK((mean - tr.average_iterate).norm() < 1e-12);
  CHECK(tr.avg_iterate_full_loss == p.eval_full(tr.average_iterate).loss);
  CHECK(tr.final_full_loss == p.eval_full(tr.final_iterate).loss);
  // Recorded gradient equals the sampled component's gradient at the iterate.
  for (std::size_t t = 0; t < tr.size(); t += 7) {
    const auto e = p.eval_component(tr.component[t], tr.iterates[t]);
    CHECK(e.grad == tr.gradients[t]);
    CHECK(e.loss == tr.true_loss[t]);
  }
}

TEST_CASE("paired runs share sampling and noise draws across schedulers") {
  RunConfig cfg = quad_config(200, 8);
  cfg.noise.kind = noise::NoiseKind::random_spike;
  cfg.noise.strength = 3.0;
  cfg.noise.spike_prob = 0.05;
  const auto p = Problem::make(cfg.problem);
  std::vector<sched::SchedulerConfig> schedulers;
  schedulers.push_back(cfg.scheduler);
  sched::BaselineConfig cosine;
  cosine.initial_lr = 0.2;
  cosine.total_steps = 200;
  schedulers.push_back(cosine);
  sched::BaselineConfig expo = cosine;
  expo.kind = sched::BaselineKind::exponential;
  schedulers.push_back(expo);

  std::vector<Trace> traces;
  for (const auto& s : schedulers) {
    RunConfig c = cfg;
    c.scheduler = s;
    traces.push_back(run_one(p, c));
  }
  auto spike_steps = [](const Trace& t) {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < t.size(); ++k) {
      if (t.observed_loss[k] != t.true_loss[k]) out.push_back(k);
    }
    return out;
  };
  for (std::size_t k = 1; k < traces.size(); ++k) {
    CHECK(traces[k].component == traces[0].component);
    CHECK(spike_steps(traces[k]) == spike_steps(traces[0]));
  }
  CHECK_FALSE(spike_steps(traces[0]).empty());
}

TEST_CASE("stage steps use the ceiling") {
  CHECK(stage_step(10, 10) == 1);
  CHECK(stage_step(50, 10) == 5);
  CHECK(stage_step(100, 10) == 10);
  CHECK(stage_step(10, 200) == 20);
  CHECK(stage_step(10, 15) == 2);
  CHECK(stage_step(50, 15) == 8);
  for (int t = 10; t < 500; ++t) {
    for (int p : {10, 50, 100}) {
      const int s = stage_step(p, t);
      CHECK(s * 100 >= p * t);
      CHECK((s - 1) * 100 < p * t);
    }
  }
}

TEST_CASE("summarize: recovery ratio and speed") {
  std::vector<double> losses = {1.0, 5.0};
  for (int k = 0; k < 10; ++k) losses.push_back(0.05);
  const RunSummary s = summarize(trace_of(losses));
  REQUIRE(s.recovery_ratio.has_value());
  CHECK(*s.recovery_ratio == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(s.max_loss == 5.0);
  CHECK(s.final_loss == doctest::Approx(0.05).epsilon(1e-12));
  REQUIRE(s.recovery_speed.has_value());
  CHECK(*s.recovery_speed == 1);
  CHECK(s.stage10 == 5.0);   // step ceil(1.2) = 2
  CHECK(s.stage50 == 0.05);  // step 6
  CHECK(s.stage100 == 0.05);

  std::vector<double> falling;
  for (int k = 0; k < 20; ++k) falling.push_back(10.0 - k * 0.5);
  const RunSummary m = summarize(trace_of(falling));
  CHECK_FALSE(m.recovery_speed.has_value());
  double tail = 0.0;
  for (int k = 10; k < 20; ++k) tail += falling[k];
  CHECK(*m.recovery_ratio == doctest::Approx(10.0 / (tail / 10)).epsilon(1e-12));

  std::vector<double> slow = {2.0, 2.0, 9.0, 3.0, 2.5, 1.5, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  CHECK(*summarize(trace_of(slow)).recovery_speed == 3);

  std::vector<double> stuck = {2.0, 9.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0};
  CHECK_FALSE(summarize(trace_of(stuck)).recovery_speed.has_value());

  CHECK_THROWS_AS(summarize(Trace{}), std::invalid_argument);
}

TEST_CASE("recovery ratio is at least one on positive traces") {
  std::mt19937_64 rng(31);
  std::lognormal_distribution<double> ln(0.0, 2.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> v(10 + trial % 50);
    for (auto& x : v) x = ln(rng);
    const RunSummary s = summarize(trace_of(v));
    REQUIRE(s.recovery_ratio.has_value());
    CHECK(*s.recovery_ratio >= 1.0);
  }
}

TEST_CASE("classify: per-stage verdicts and stars") {
  const Cutoff cut;
  const auto v = classify(summary_with(1.0, 1.0, 1.0, 1.0),
                          summary_with(1.5, 1.2, 1.3, 1.05), cut);
  CHECK(v.stage10 == Verdict::yes);
  CHECK(v.stage50 == Verdict::yes);
  CHECK(v.stage100 == Verdict::yes);
  CHECK(v.overall == Verdict::yes_star);
  CHECK(v.delta10 == doctest::Approx(0.5));

  CHECK(classify_delta(1.0, 1.05, cut) == Verdict::yes_star);
  CHECK(classify_delta(1.05, 1.0, cut) == Verdict::no_star);
  CHECK(classify_delta(1.0, 1.5, cut) == Verdict::yes);
  CHECK(classify_delta(1.5, 1.0, cut) == Verdict::no);
  CHECK(classify_delta(1.0, 1.0, cut) == Verdict::no_star);
  CHECK(classify_delta(kInf, kInf, cut) == Verdict::no_star);
  CHECK(classify_delta(1.0, kInf, cut) == Verdict::yes);
  CHECK(classify_delta(kInf, 1.0, cut) == Verdict::no);

  const Cutoff rel{CutoffKind::relative, 0.01};
  CHECK(classify_delta(100.0, 100.5, rel) == Verdict::yes_star);
  CHECK(classify_delta(100.0, 102.0, rel) == Verdict::yes);

  CHECK_THROWS_AS(classify(RunSummary{}, RunSummary{}, cut, PairKey{"a", "none", 1},
                           PairKey{"a", "none", 2}),
                  std::invalid_argument);
  CHECK_NOTHROW(classify(RunSummary{}, RunSummary{}, cut, PairKey{"a", "none", 1},
                         PairKey{"a", "none", 1}));
}

TEST_CASE("classify is antisymmetric under swapping the pair") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  const Cutoff cut;
  for (int trial = 0; trial < 2000; ++trial) {
    const RunSummary a = summary_with(u(rng), u(rng), u(rng), u(rng));
    const RunSummary b = summary_with(u(rng), u(rng), u(rng), u(rng));
    const auto ab = classify(a, b, cut);
    const auto ba = classify(b, a, cut);
    CHECK(ba.stage10 == mirror(ab.stage10));
    CHECK(ba.stage50 == mirror(ab.stage50));
    CHECK(ba.stage100 == mirror(ab.stage100));
    CHECK(ba.overall == mirror(ab.overall));
    CHECK(ba.delta_final == -ab.delta_final);
  }
}

TEST_CASE("verdict counts and percentages match hand counts") {
  const Cutoff cut;
  VerdictCounts c;
  // deltas (+0.5, +0.05, -0.05) and (-0.5, +0.2, 0.0)
  c.add(classify(summary_with(1.0, 1.0, 1.0, 1.0), summary_with(1.5, 1.05, 0.95, 1.02), cut));
  c.add(classify(summary_with(1.5, 1.0, 1.0, 1.0), summary_with(1.0, 1.2, 1.0, 0.5), cut));
  CHECK(c.pairs == 2);
  CHECK(c.yes == 2);
  CHECK(c.yes_star == 1);
  CHECK(c.no == 1);
  CHECK(c.no_star == 2);
  CHECK(c.sum() == 6);
  CHECK(c.final_within_cutoff == 1);
  CHECK(c.as_good_or_better_pct() == doctest::Approx(500.0 / 6));
  CHECK(c.better_pct() == doctest::Approx(50.0));
  CHECK(c.clearly_better_pct() == doctest::Approx(100.0 / 3));
  CHECK(c.as_good_pct() == doctest::Approx(50.0));
  CHECK(c.worse_pct() == doctest::Approx(100.0 / 6));
  CHECK(c.average_benefit() == doctest::Approx((0.5 + 0.05 - 0.05 - 0.5 + 0.2 + 0.0) / 6));
  CHECK(c.max_benefit == doctest::Approx(0.5));
  CHECK(VerdictCounts{}.better_pct() == 0.0);
}

TEST_CASE("quantile uses linear interpolation between order statistics") {
  CHECK(quantile({3.0, 1.0, 2.0}, 0.5) == 2.0);
  CHECK(quantile({1.0, 2.0, 3.0, 4.0}, 0.5) == 2.5);
  CHECK(quantile({0.0, 10.0}, 0.1) == doctest::Approx(1.0));
  CHECK(quantile({5.0}, 0.9) == 5.0);
  CHECK(quantile({1.0, kInf, kInf}, 0.5) == kInf);
  CHECK(quantile({1.0, 2.0, kInf}, 0.5) == 2.0);
  CHECK_THROWS_AS(quantile({}, 0.5), std::invalid_argument);
}

TEST_CASE("default grid has 600 cells") {
  const GridSpec g = default_robustness_grid();
  CHECK(g.schedulers.size() == 4);
  CHECK(g.problems.size() == 6);
  CHECK(g.noises.size() == 5);
  CHECK(g.seeds.size() == 5);
  CHECK(g.total_steps == 200);
}

TEST_CASE("small grid: sorted cells, thread-count independence, noise-free ordering") {
  GridSpec g = default_robustness_grid();
  g.problems = {g.problems[0], g.problems[2]};
  g.seeds = {1, 2, 3};
  g.noises = {noise::NoiseKind::none, noise::NoiseKind::gaussian};
  g.total_steps = 60;
  const GridResult one = run_grid(g);
  g.jobs = 4;
  const GridResult four = run_grid(g);

  REQUIRE(one.cells.size() == 4 * 2 * 2 * 3);
  REQUIRE(four.cells.size() == one.cells.size());
  for (std::size_t k = 0; k < one.cells.size(); ++k) {
    const auto& a = one.cells[k];
    CHECK_FALSE(a.error.has_value());
    CHECK(a.summary.final_loss == four.cells[k].summary.final_loss);
    CHECK(a.lr == four.cells[k].lr);
    if (k > 0) {
      const auto& p = one.cells[k - 1];
      CHECK(std::tie(p.scheduler, p.problem, p.noise, p.seed) <
            std::tie(a.scheduler, a.problem, a.noise, a.seed));
    }
    if (a.noise == noise::NoiseKind::none && a.scheduler != "greedy" &&
        a.problem == "quad_well") {
      CHECK(a.summary.stage100 <= a.summary.stage10);
    }
  }
  CHECK(one.medians == four.medians);
  CHECK(one.medians.size() == 4);
  CHECK(one.medians.at("greedy").size() == 2);

  // Same seed gives the same problem instance whatever the scheduler.
  CHECK(one.cells[0].config.problem.seed == one.cells[12].config.problem.seed);
  CHECK(one.cells[0].config.problem.seed != one.cells[1].config.problem.seed);

  std::vector<double> finals;
  for (const auto& c : one.cells) {
    if (c.scheduler == "cosine") finals.push_back(c.summary.final_loss);
  }
  CHECK(one.percentiles.at("cosine").p50 == quantile(finals, 0.5));
  CHECK(one.percentiles.at("cosine").p10 == quantile(finals, 0.1));
}

TEST_CASE("grid cell failures are recorded, not thrown") {
  GridSpec g = default_robustness_grid();
  g.problems.resize(1);
  g.problems[0].spec.dimension = 0;
  g.schedulers.resize(1);
  g.noises = {noise::NoiseKind::none};
  g.seeds = {1};
  const GridResult r = run_grid(g);
  REQUIRE(r.cells.size() == 1);
  CHECK(r.cells[0].error.has_value());
  GridSpec empty = g;
  empty.seeds.clear();
  CHECK_THROWS_AS(run_grid(empty), std::invalid_argument);
}

TEST_CASE("f_sweep returns one paired row per factor") {
  RunConfig base = quad_config(40, 1);
  const auto p = Problem::make(base.problem);
  const auto rows = f_sweep(p, base, {0.25, 0.5, 0.75, 0.99}, {1, 2, 3});
  REQUIRE(rows.size() == 4);
  for (const auto& r : rows) {
    CHECK(r.per_seed.size() == 3);
    REQUIRE(r.traces.size() == 1);
    CHECK(r.traces[0].component == rows[0].traces[0].component);
    std::vector<double> finals;
    for (const auto& s : r.per_seed) finals.push_back(s.final_loss);
    CHECK(r.median_final_loss == quantile(finals, 0.5));
  }
  CHECK_THROWS_AS(f_sweep(p, base, {1.0}, {1}), std::invalid_argument);
  RunConfig bad = base;
  bad.scheduler = constant_lr(0.1, 40);
  CHECK_THROWS_AS(f_sweep(p, bad, {0.5}, {1}), std::invalid_argument);
}

TEST_CASE("theorem 1 bound: exact zero at the minimizer and the rhs formula") {
  const Matrix a = (Matrix(2, 2) << 2.0, 0.0, 0.0, 1.0).finished();
  const auto p = Problem::quadratic({a, a}, {Vector::Zero(2), Vector::Zero(2)});
  RunConfig cfg;
  sched::GreedyConfig g;
  g.initial_lr = 0.25;
  g.min_lr = 0.05;
  g.max_lr = 0.5;
  cfg.scheduler = g;
  const auto at_min = theorem1_check(p, cfg, 100, {1, 2, 3}, Vector::Zero(2));
  CHECK(at_min.lhs == 0.0);
  CHECK(at_min.rhs == doctest::Approx(0.5 * 0.5 * 2.0 / (2 * 0.05)));
  CHECK(at_min.holds);

  Vector x0(2);
  x0 << 1.0, -2.0;
  const auto r = theorem1_check(p, cfg, 1000, {1}, x0);
  CHECK(r.rhs == doctest::Approx(5.0 / (2 * 0.05 * 1000) + 0.5 * 0.5 * 2.0 / 0.1));
  CHECK(r.holds);

  const auto logistic = Problem::make([] {
    problems::ProblemSpec s;
    s.kind = problems::ProblemKind::logistic;
    return s;
  }());
  CHECK_THROWS_AS(theorem1_check(logistic, cfg, 100, {1}), std::invalid_argument);
}

TEST_CASE("theorem 2 sweep inserts the optimal factor") {
  CHECK(optimal_factor(2.0) == 0.5);
  CHECK(optimal_factor(4.0) == 0.75);
  RunConfig cfg = quad_config(50, 1);
  cfg.problem.smoothness = 4.0;
  const auto p = Problem::make(cfg.problem);
  const auto rows = theorem2_sweep(p, cfg, {0.3, 0.9}, {1, 2});
  REQUIRE(rows.size() == 3);
  CHECK(rows[1].factor == 0.75);
  CHECK(rows[1].is_optimal);
  CHECK_FALSE(rows[0].is_optimal);
  for (const auto& r : rows) CHECK(r.median_suboptimality >= -1e-12);

  cfg.problem.smoothness = 1.0;
  const auto flat = Problem::make(cfg.problem);
  CHECK_THROWS_AS(theorem2_sweep(flat, cfg, {0.5}, {1}), std::invalid_argument);
}

TEST_CASE("run config validation") {
  RunConfig cfg = quad_config(9, 1);
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.total_steps = 10;
  CHECK_NOTHROW(cfg.validate());
  cfg.noise.strength = -1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
