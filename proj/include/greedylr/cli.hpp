// SPDX-License-Identifier: Apache-2.0
/**
 * @file   cli.hpp
 * @brief  Config resolution, experiment commands and CSV/JSON persistence
 *         behind the greedylr command-line tool.
 *
 * Every command reads an optional INI config, fills in defaults, writes the
 * fully resolved config to config.ini in the output directory, and writes
 * its tables there. Output bytes depend only on the config and the code.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <boost/property_tree/ptree.hpp>

#include "greedylr/runner.hpp"

namespace greedylr::cli {

/// Config problems: parse errors, unknown keys, bad values, missing keys.
/// The message names the line or the section.key involved.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Format { csv, json };
Format parse_format(std::string_view name);

/// Shortest decimal string that reads back to the same double.
std::string format_double(double v);

/// Parses a comma-separated list of numbers; integer items may also be
/// written as inclusive ranges "a-b".
std::vector<double> parse_real_list(const std::string& text);
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

// Tables.

using Cell = std::variant<std::monostate, double, std::int64_t, std::uint64_t,
                          std::string, bool>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row);
};

std::string to_csv(const Table& table);
std::string to_json(const Table& table);

/// Writes name.csv or name.json under dir and returns the path.
std::filesystem::path write_table(const std::filesystem::path& dir,
                                  const std::string& name, const Table& table,
                                  Format format);

Table trace_table(const runner::Trace& trace);

// Config documents.

using ConfigTree = boost::property_tree::ptree;

ConfigTree load_config(const std::filesystem::path& path);
ConfigTree parse_config(std::istream& in, const std::string& source = "config");

/// Options shared by all subcommands. Flags override config values.
struct CommonOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> out;
  std::optional<int> jobs;
  std::optional<std::uint64_t> seed;
  std::optional<Format> format;
};

struct OutputSettings {
  std::filesystem::path dir = "out";
  Format format = Format::csv;
  int jobs = 1;
};

struct ResolvedRun {
  runner::RunConfig run;
  OutputSettings output;
  ConfigTree echo;
};

struct ResolvedGrid {
  runner::GridSpec grid;
  OutputSettings output;
  ConfigTree echo;
};

struct ResolvedFSweep {
  runner::RunConfig base;
  std::vector<double> factors;
  std::vector<std::uint64_t> seeds;
  OutputSettings output;
  ConfigTree echo;
};

struct Theorem1Settings {
  problems::ProblemSpec problem;
  sched::GreedyConfig scheduler;
  std::vector<int> horizons;
  std::vector<std::uint64_t> seeds;
};

struct Theorem2Settings {
  problems::ProblemSpec problem;
  sched::GreedyConfig scheduler;
  int total_steps = 100;
  std::vector<double> factors;
  std::vector<std::uint64_t> seeds;
};

struct ResolvedTheory {
  Theorem1Settings theorem1;
  Theorem2Settings theorem2;
  OutputSettings output;
  ConfigTree echo;
};

struct ResolvedClassify {
  runner::Cutoff cutoff;
  std::optional<std::string> greedy_scheduler;
  std::optional<std::string> baseline_scheduler;
  OutputSettings output;
  ConfigTree echo;
};

ResolvedRun resolve_run(const ConfigTree& tree, const CommonOptions& opts);
ResolvedGrid resolve_robustness(const ConfigTree& tree, const CommonOptions& opts);
ResolvedFSweep resolve_fsweep(const ConfigTree& tree, const CommonOptions& opts);
ResolvedTheory resolve_theory(const ConfigTree& tree, const CommonOptions& opts);
ResolvedClassify resolve_classify(const ConfigTree& tree, const CommonOptions& opts);

/// Built-in F-sweep setup: the grid's small MLP trained with Adam from an
/// aggressive learning rate.
runner::RunConfig default_fsweep_config();
Theorem1Settings default_theorem1();
Theorem2Settings default_theorem2();

// Result rows.

struct ResultRow {
  std::int64_t run_id = 0;
  std::string scheduler;
  std::optional<double> factor;
  std::string problem;
  std::string noise;
  std::uint64_t seed = 0;
  runner::RunSummary summary;
};

Table results_table(const runner::GridResult& result);
Table medians_table(const runner::GridResult& result,
                    const std::vector<noise::NoiseKind>& noises);
Table percentiles_table(const runner::GridResult& result);
/// Per scheduler and step, the 10/50/90th percentiles of the learning rate
/// divided by the run's initial learning rate.
Table lr_bands_table(const runner::GridResult& result);

/// Reads a results.csv written by the robustness command.
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);

struct ClassifyOutput {
  Table verdicts;
  runner::VerdictCounts counts;
  Table summary;
};

/// Pairs greedy rows with baseline rows on (problem, noise, seed) and the
/// occurrence index of that key within each input, after the optional
/// scheduler filters. Throws ConfigError on unpaired rows.
ClassifyOutput classify_results(const std::vector<ResultRow>& greedy,
                                const std::vector<ResultRow>& baseline,
                                const ResolvedClassify& settings);

// Commands. Each returns a process exit status.

int cmd_run(const CommonOptions& opts, std::ostream& log);
int cmd_robustness(const CommonOptions& opts, std::ostream& log);
int cmd_fsweep(const CommonOptions& opts, std::ostream& log);
int cmd_theory(const CommonOptions& opts, std::ostream& log);
int cmd_classify(const CommonOptions& opts, const std::filesystem::path& greedy,
                 const std::filesystem::path& baseline, std::ostream& log);

/// Parses argv and dispatches to a command. Errors go to err with exit
/// status 2 for usage and config problems and 1 for failed runs.
int main_entry(int argc, const char* const* argv, std::ostream& out,
               std::ostream& err);

}  // namespace greedylr::cli
