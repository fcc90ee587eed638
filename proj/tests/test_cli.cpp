// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include <unistd.h>

#include <boost/property_tree/ini_parser.hpp>

#include "greedylr/cli.hpp"
#include "json.hpp"

using namespace greedylr;
using namespace greedylr::cli;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("greedylr_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "greedylr");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = main_entry(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

ConfigTree tree_of(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in, "test.ini");
}

std::string error_of(const std::string& text) {
  try {
    resolve_run(tree_of(text), {});
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

const char* kRunConfig =
    "[run]\n"
    "total_steps = 40\n"
    "seed = 3\n"
    "[problem]\n"
    "kind = quadratic_sum\n"
    "dimension = 4\n"
    "n_components = 8\n"
    "[scheduler]\n"
    "kind = greedy\n"
    "initial_lr = 0.1\n"
    "[noise]\n"
    "kind = gaussian\n"
    "strength = 0.05\n";

const char* kGridConfig =
    "[grid]\n"
    "total_steps = 30\n"
    "seeds = 1-2\n"
    "schedulers = greedy, cosine\n"
    "problems = quad_well, logistic\n"
    "noises = none, random_spike\n";

}  // namespace

TEST_CASE("format_double is the shortest round-trip representation") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::uint64_t> bits;
  for (int k = 0; k < 20000; ++k) {
    const double v = std::bit_cast<double>(bits(rng));
    if (!std::isfinite(v)) continue;
    const std::string s = format_double(v);
    double back = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), back);
    CHECK(back == v);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(1e-10) == "1e-10");
  CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
}

TEST_CASE("list parsing") {
  CHECK(parse_seed_list("1-3, 7") == std::vector<std::uint64_t>{1, 2, 3, 7});
  CHECK(parse_real_list("0.25,0.5") == std::vector<double>{0.25, 0.5});
  CHECK_THROWS_AS(parse_real_list("0.25,x"), ConfigError);
  CHECK_THROWS_AS(parse_seed_list("5-2"), ConfigError);
  CHECK(parse_format("json") == Format::json);
  CHECK_THROWS(parse_format("xml"));
}

TEST_CASE("tables: csv uses LF endings and json writes non-finite as null") {
  Table t;
  t.columns = {"a", "b", "c"};
  t.add({std::int64_t{1}, 0.5, std::string("x")});
  t.add({std::int64_t{2}, std::numeric_limits<double>::infinity(), true});
  CHECK_THROWS_AS(t.add({std::int64_t{3}}), std::logic_error);
  const std::string csv = to_csv(t);
  CHECK(csv.find('\r') == std::string::npos);
  CHECK(lines_of(csv) == std::vector<std::string>{"a,b,c", "1,0.5,x", "2,inf,true"});
  const auto j = nlohmann::json::parse(to_json(t));
  REQUIRE(j.size() == 2);
  CHECK(j[0]["b"] == 0.5);
  CHECK(j[1]["b"].is_null());
  CHECK(j[1]["c"] == true);
}

TEST_CASE("config errors name the offending line or key") {
  std::istringstream bad("[run\ntotal_steps = 4\n");
  try {
    parse_config(bad, "bad.ini");
    FAIL("expected a parse error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).rfind("bad.ini:1:", 0) == 0);
  }
  CHECK(error_of("[run]\ntotal_steps = 40\n") == "missing required key problem.kind");
  CHECK(error_of("[problem]\nkind = mlp\nwidth = 3\n") == "unknown key problem.width");
  CHECK(error_of("[problem]\nkind = mlp\n[extras]\na = 1\n") == "unknown section [extras]");
  CHECK(error_of("[run]\ntotal_steps = many\n[problem]\nkind = mlp\n")
            .find("run.total_steps") != std::string::npos);
  CHECK(error_of("[problem]\nkind = mlp\n[scheduler]\nkind = cosine\npatience = 3\n") ==
        "scheduler.patience does not apply to kind cosine");
  CHECK(error_of("[problem]\nkind = mlp\n[scheduler]\nkind = greedy\ndecay_rate = 0.9\n") ==
        "scheduler.decay_rate does not apply to kind greedy");
  CHECK_FALSE(error_of("[problem]\nkind = hexagon\n").empty());
}

TEST_CASE("echoed config reads back to the same resolved run") {
  const ResolvedRun first = resolve_run(tree_of(kRunConfig), {});
  std::ostringstream ini;
  boost::property_tree::write_ini(ini, first.echo);
  const ResolvedRun second = resolve_run(tree_of(ini.str()), {});
  std::ostringstream ini2;
  boost::property_tree::write_ini(ini2, second.echo);
  CHECK(ini.str() == ini2.str());
  const auto a = runner::run_one(first.run);
  const auto b = runner::run_one(second.run);
  CHECK(a.true_loss == b.true_loss);
  CHECK(a.lr == b.lr);
  const auto& g = std::get<sched::GreedyConfig>(first.run.scheduler);
  CHECK(g.min_lr == doctest::Approx(0.01));
  CHECK(g.max_lr == doctest::Approx(1.0));
}

TEST_CASE("flags override config values") {
  CommonOptions opts;
  opts.seed = 17;
  opts.format = Format::json;
  opts.jobs = 3;
  opts.out = "elsewhere";
  const ResolvedRun r = resolve_run(tree_of(kRunConfig), opts);
  CHECK(r.run.seed == 17);
  CHECK(r.output.format == Format::json);
  CHECK(r.output.jobs == 3);
  CHECK(r.output.dir == fs::path("elsewhere"));
}

TEST_CASE("run command writes a full trace and reruns byte-identically") {
  TempDir dir;
  spit(dir / "run.ini", kRunConfig);
  const auto out1 = (dir / "a").string();
  const auto out2 = (dir / "b").string();
  CHECK(run_cli({"run", "--config", (dir / "run.ini").string(), "--out", out1}).code == 0);
  CHECK(run_cli({"run", "--config", (dir / "run.ini").string(), "--out", out2}).code == 0);
  const std::string trace = slurp(fs::path(out1) / "trace.csv");
  const auto rows = lines_of(trace);
  REQUIRE(rows.size() == 41);
  CHECK(rows[0] == "step,true_loss,observed_loss,lr,grad_norm");
  CHECK(rows[1].rfind("0,", 0) == 0);
  CHECK(trace == slurp(fs::path(out2) / "trace.csv"));
  CHECK(slurp(fs::path(out1) / "summary.json") == slurp(fs::path(out2) / "summary.json"));
  const auto j = nlohmann::json::parse(slurp(fs::path(out1) / "summary.json"));
  CHECK(j["scheduler"] == "greedy");
  CHECK(j["steps_completed"] == 40);
  CHECK(j["diverged"] == false);
  CHECK(fs::exists(fs::path(out1) / "config.ini"));

  // The echoed config reproduces the run.
  const auto out3 = (dir / "c").string();
  CHECK(run_cli({"run", "--config", (fs::path(out1) / "config.ini").string(), "--out", out3})
            .code == 0);
  CHECK(trace == slurp(fs::path(out3) / "trace.csv"));

  const auto out4 = (dir / "d").string();
  CHECK(run_cli({"run", "--config", (dir / "run.ini").string(), "--out", out4, "--format",
                 "json"})
            .code == 0);
  CHECK(nlohmann::json::parse(slurp(fs::path(out4) / "trace.json")).size() == 40);
}

TEST_CASE("exit codes") {
  TempDir dir;
  spit(dir / "bad.ini", "[run]\ntotal_steps = 40\n");
  const auto r = run_cli({"run", "--config", (dir / "bad.ini").string(), "--out",
                          (dir / "o").string()});
  CHECK(r.code == 2);
  CHECK((r.out + r.err).find("problem.kind") != std::string::npos);
  CHECK(run_cli({"run", "--bogus"}).code == 2);
  CHECK(run_cli({"frobnicate"}).code == 2);
  CHECK(run_cli({"--help"}).code == 0);
  CHECK(run_cli({"run", "--config", (dir / "missing.ini").string()}).code == 2);
  CHECK(run_cli({"run", "--jobs", "0"}).code == 2);
}

TEST_CASE("robustness and classify commands") {
  TempDir dir;
  spit(dir / "grid.ini", kGridConfig);
  const fs::path out = dir / "grid";
  REQUIRE(run_cli({"robustness", "--config", (dir / "grid.ini").string(), "--out",
                   out.string(), "--jobs", "2"})
              .code == 0);
  for (const char* f : {"results.csv", "medians.csv", "percentiles.csv", "lr_bands.csv",
                        "config.ini"}) {
    CHECK(fs::exists(out / f));
  }
  const auto rows = read_results_csv(out / "results.csv");
  CHECK(rows.size() == 2 * 2 * 2 * 2);
  CHECK(lines_of(slurp(out / "medians.csv"))[0] == "scheduler,none,random_spike");
  CHECK(lines_of(slurp(out / "percentiles.csv"))[0] == "scheduler,p10,p50,p90");
  CHECK(lines_of(slurp(out / "lr_bands.csv")).size() == 1 + 2 * 30);

  // Single-threaded rerun gives identical bytes.
  const fs::path again = dir / "again";
  REQUIRE(run_cli({"robustness", "--config", (dir / "grid.ini").string(), "--out",
                   again.string()})
              .code == 0);
  CHECK(slurp(out / "results.csv") == slurp(again / "results.csv"));
  CHECK(slurp(out / "lr_bands.csv") == slurp(again / "lr_bands.csv"));

  // Identical inputs: every delta is zero, so every verdict is starred.
  const fs::path same = dir / "same";
  REQUIRE(run_cli({"classify", (out / "results.csv").string(), (out / "results.csv").string(),
                   "--out", same.string()})
              .code == 0);
  const auto verdicts = lines_of(slurp(same / "verdicts.csv"));
  REQUIRE(verdicts.size() == 1 + rows.size());
  for (std::size_t k = 1; k < verdicts.size(); ++k) {
    CHECK(verdicts[k].find(",yes,") == std::string::npos);
    CHECK(verdicts[k].find(",no,") == std::string::npos);
  }

  // Greedy vs cosine, and the swapped comparison.
  ResolvedClassify settings;
  settings.greedy_scheduler = "greedy";
  settings.baseline_scheduler = "cosine";
  const auto fwd = classify_results(rows, rows, settings);
  std::swap(settings.greedy_scheduler, settings.baseline_scheduler);
  const auto rev = classify_results(rows, rows, settings);
  CHECK(fwd.counts.pairs == 8);
  CHECK(fwd.counts.sum() == 3 * fwd.counts.pairs);
  CHECK(fwd.counts.yes == rev.counts.no);
  CHECK(fwd.counts.no == rev.counts.yes);
  CHECK(fwd.counts.yes_star == rev.counts.no_star);
  CHECK(fwd.counts.no_star == rev.counts.yes_star);
  CHECK(fwd.verdicts.rows.size() == 8);
  CHECK(fwd.summary.rows.size() == 1);

  ResolvedClassify unpaired;
  unpaired.greedy_scheduler = "greedy";
  std::vector<ResultRow> fewer(rows.begin(), rows.begin() + 3);
  CHECK_THROWS_AS(classify_results(rows, fewer, unpaired), ConfigError);
}

TEST_CASE("results.csv reader rejects malformed input") {
  TempDir dir;
  spit(dir / "r.csv", "run_id,scheduler\n1,greedy\n");
  CHECK_THROWS_AS(read_results_csv(dir / "r.csv"), ConfigError);
  CHECK_THROWS(read_results_csv(dir / "absent.csv"));
}

TEST_CASE("fsweep command writes one row per factor and equal-length traces") {
  TempDir dir;
  spit(dir / "f.ini", "[fsweep]\nseeds = 1-2\n[run]\ntotal_steps = 30\n");
  const fs::path out = dir / "f";
  REQUIRE(run_cli({"fsweep", "--config", (dir / "f.ini").string(), "--out", out.string()})
              .code == 0);
  const auto rows = lines_of(slurp(out / "fsweep.csv"));
  REQUIRE(rows.size() == 5);
  std::size_t length = 0;
  for (const char* f : {"0.25", "0.5", "0.75", "0.99"}) {
    const fs::path trace = out / (std::string("trace_F") + f + ".csv");
    REQUIRE(fs::exists(trace));
    const auto n = lines_of(slurp(trace)).size();
    if (length == 0) length = n;
    CHECK(n == length);
  }
  CHECK(length == 31);
}

TEST_CASE("theory command writes both tables") {
  TempDir dir;
  spit(dir / "t.ini",
       "[theorem1]\nhorizons = 20, 40\nseeds = 1-2\n"
       "[theorem2]\nseeds = 1-2\ntotal_steps = 20\n");
  const fs::path out = dir / "t";
  REQUIRE(run_cli({"theory", "--config", (dir / "t.ini").string(), "--out", out.string()})
              .code == 0);
  const auto t1 = lines_of(slurp(out / "theorem1.csv"));
  REQUIRE(t1.size() == 3);
  CHECK(t1[0] == "T,lhs,rhs,holds");
  CHECK(t1[1].ends_with(",true"));
  const auto t2 = lines_of(slurp(out / "theorem2.csv"));
  CHECK(t2[0] == "F,final_suboptimality");
  CHECK(t2.size() == 1 + 6);

  spit(dir / "bad.ini", "[theorem1]\nmax_lr_fraction = 2.5\n");
  CHECK(run_cli({"theory", "--config", (dir / "bad.ini").string(), "--out",
                 (dir / "b").string()})
            .code == 2);
}
