// SPDX-License-Identifier: Apache-2.0
#include "greedylr/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>

#include "CLI11.hpp"
#include "json.hpp"

namespace greedylr::cli {

namespace fs = std::filesystem;
using boost::property_tree::ptree;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
std::optional<T> parse_number(std::string_view text) {
  const std::string s = trim(text);
  if (s.empty()) return std::nullopt;
  const char* first = s.data();
  if constexpr (std::is_unsigned_v<T>) {
    if (*first == '+') ++first;
  }
  T value{};
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (k) out += ',';
    out += items[k];
  }
  return out;
}

template <typename T>
std::string join_numbers(const std::vector<T>& values) {
  std::vector<std::string> items;
  for (const auto& v : values) {
    if constexpr (std::is_floating_point_v<T>) {
      items.push_back(format_double(v));
    } else {
      items.push_back(std::to_string(v));
    }
  }
  return join(items);
}

std::string_view to_string(Format f) { return f == Format::csv ? "csv" : "json"; }

using KeySets = std::map<std::string, std::set<std::string>>;

// Typed access to one config document. Every resolved value, explicit or
// defaulted, is recorded into the echo tree in resolution order.
class Reader {
 public:
  Reader(const ConfigTree& tree, const KeySets& allowed) : tree_(tree) {
    for (const auto& [section, node] : tree) {
      if (node.empty() && !node.data().empty()) {
        throw ConfigError("key '" + section + "' must be inside a [section]");
      }
      const auto it = allowed.find(section);
      if (it == allowed.end()) {
        throw ConfigError("unknown section [" + section + "]");
      }
      for (const auto& [key, value] : node) {
        if (!value.empty()) {
          throw ConfigError("nested key under " + section + "." + key);
        }
        if (!it->second.count(key)) {
          throw ConfigError("unknown key " + section + "." + key);
        }
      }
    }
  }

  bool has(const std::string& section, const std::string& key) const {
    return raw(section, key).has_value();
  }

  std::optional<std::string> raw(const std::string& section,
                                 const std::string& key) const {
    const auto sec = tree_.get_child_optional(ptree::path_type(section, '\0'));
    if (!sec) return std::nullopt;
    const auto val = sec->get_child_optional(ptree::path_type(key, '\0'));
    if (!val) return std::nullopt;
    std::string v = trim(val->data());
    if (v.empty()) return std::nullopt;
    return v;
  }

  double real(const std::string& section, const std::string& key, double fallback) {
    double v = fallback;
    if (auto text = raw(section, key)) {
      auto parsed = parse_number<double>(*text);
      if (!parsed || !std::isfinite(*parsed)) {
        fail(section, key, "expected a finite number", *text);
      }
      v = *parsed;
    }
    record(section, key, format_double(v));
    return v;
  }

  int integer(const std::string& section, const std::string& key, int fallback) {
    int v = fallback;
    if (auto text = raw(section, key)) {
      auto parsed = parse_number<int>(*text);
      if (!parsed) fail(section, key, "expected an integer", *text);
      v = *parsed;
    }
    record(section, key, std::to_string(v));
    return v;
  }

  std::uint64_t seed(const std::string& section, const std::string& key,
                     std::uint64_t fallback) {
    std::uint64_t v = fallback;
    if (auto text = raw(section, key)) {
      auto parsed = parse_number<std::uint64_t>(*text);
      if (!parsed) fail(section, key, "expected a nonnegative integer", *text);
      v = *parsed;
    }
    record(section, key, std::to_string(v));
    return v;
  }

  bool boolean(const std::string& section, const std::string& key, bool fallback) {
    bool v = fallback;
    if (auto text = raw(section, key)) {
      std::string t = *text;
      std::transform(t.begin(), t.end(), t.begin(), ::tolower);
      if (t == "true" || t == "yes" || t == "on" || t == "1") {
        v = true;
      } else if (t == "false" || t == "no" || t == "off" || t == "0") {
        v = false;
      } else {
        fail(section, key, "expected true or false", *text);
      }
    }
    record(section, key, v ? "true" : "false");
    return v;
  }

  std::string text(const std::string& section, const std::string& key,
                   const std::string& fallback) {
    std::string v = raw(section, key).value_or(fallback);
    record(section, key, v);
    return v;
  }

  std::string required(const std::string& section, const std::string& key) {
    auto v = raw(section, key);
    if (!v || v->empty()) {
      throw ConfigError("missing required key " + section + "." + key);
    }
    record(section, key, *v);
    return *v;
  }

  std::vector<double> reals(const std::string& section, const std::string& key,
                            const std::vector<double>& fallback) {
    std::vector<double> v = fallback;
    if (auto text = raw(section, key)) {
      try {
        v = parse_real_list(*text);
      } catch (const ConfigError& e) {
        fail(section, key, e.what(), *text);
      }
    }
    record(section, key, join_numbers(v));
    return v;
  }

  std::vector<std::uint64_t> seeds(const std::string& section, const std::string& key,
                                   const std::vector<std::uint64_t>& fallback) {
    std::vector<std::uint64_t> v = fallback;
    if (auto text = raw(section, key)) {
      try {
        v = parse_seed_list(*text);
      } catch (const ConfigError& e) {
        fail(section, key, e.what(), *text);
      }
    }
    record(section, key, join_numbers(v));
    return v;
  }

  std::vector<std::string> names(const std::string& section, const std::string& key,
                                 const std::vector<std::string>& fallback) {
    std::vector<std::string> v = fallback;
    if (auto text = raw(section, key)) {
      v.clear();
      for (const auto& item : split(*text, ',')) {
        const std::string name = trim(item);
        if (name.empty()) fail(section, key, "empty list item", *text);
        v.push_back(name);
      }
    }
    record(section, key, join(v));
    return v;
  }

  void record(const std::string& section, const std::string& key,
              const std::string& value) {
    echo_.put(ptree::path_type(section + '\x1f' + key, '\x1f'), value);
  }

  void overwrite(const std::string& section, const std::string& key,
                 const std::string& value) {
    record(section, key, value);
  }

  [[noreturn]] static void fail(const std::string& section, const std::string& key,
                                const std::string& what, const std::string& text) {
    throw ConfigError(section + "." + key + ": " + what + ", got '" + text + "'");
  }

  ConfigTree take_echo() { return std::move(echo_); }

 private:
  const ConfigTree& tree_;
  ConfigTree echo_;
};

template <typename Fn>
auto parse_enum(Reader& r, const std::string& section, const std::string& key,
                const std::string& fallback, Fn parse) {
  const std::string name = r.text(section, key, fallback);
  try {
    return parse(name);
  } catch (const std::invalid_argument&) {
    Reader::fail(section, key, "unknown value", name);
  }
}

const std::set<std::string> kProblemKeys = {
    "kind",        "dimension",    "n_components", "condition_number",
    "smoothness",  "heterogeneity", "hidden",      "batch_size",
    "label_noise", "target_noise", "seed"};
const std::set<std::string> kGreedyKeys = {
    "factor",  "patience", "threshold",   "cooldown",    "warmup", "max_lr",
    "eps",     "smoothing", "window_size", "reset_start", "mode"};
const std::set<std::string> kBaselineKeys = {"total_steps", "warmup_steps",
                                              "restart_period", "decay_rate", "power"};
const std::set<std::string> kOptimizerKeys = {"kind", "beta1", "beta2", "eps"};
const std::set<std::string> kNoiseKeys = {"kind", "strength", "period", "spike_prob"};
const std::set<std::string> kOutputKeys = {"dir", "format", "jobs"};

std::set<std::string> scheduler_keys() {
  std::set<std::string> keys = {"kind", "initial_lr", "min_lr"};
  keys.insert(kGreedyKeys.begin(), kGreedyKeys.end());
  keys.insert(kBaselineKeys.begin(), kBaselineKeys.end());
  return keys;
}

KeySets run_sections() {
  return {{"run", {"total_steps", "seed"}},
          {"problem", kProblemKeys},
          {"scheduler", scheduler_keys()},
          {"optimizer", kOptimizerKeys},
          {"noise", kNoiseKeys},
          {"output", kOutputKeys}};
}

// dir and jobs never change output bytes, so they stay out of the echo.
OutputSettings read_output(Reader& r, const CommonOptions& opts) {
  OutputSettings out;
  if (auto dir = r.raw("output", "dir")) out.dir = *dir;
  if (opts.out) out.dir = *opts.out;
  if (auto jobs = r.raw("output", "jobs")) {
    auto parsed = parse_number<int>(*jobs);
    if (!parsed || *parsed < 1) {
      Reader::fail("output", "jobs", "expected a positive integer", *jobs);
    }
    out.jobs = *parsed;
  }
  if (opts.jobs) {
    if (*opts.jobs < 1) throw ConfigError("--jobs must be positive");
    out.jobs = *opts.jobs;
  }
  out.format = parse_enum(r, "output", "format", "csv",
                          [](const std::string& s) { return parse_format(s); });
  if (opts.format) {
    out.format = *opts.format;
    r.overwrite("output", "format", std::string(to_string(out.format)));
  }
  return out;
}

problems::ProblemSpec read_problem(Reader& r, problems::ProblemSpec base,
                                   bool require_kind) {
  const std::string sec = "problem";
  problems::ProblemSpec p = base;
  if (require_kind) {
    const std::string kind = r.required(sec, "kind");
    try {
      p.kind = problems::parse_problem_kind(kind);
    } catch (const std::invalid_argument&) {
      Reader::fail(sec, "kind", "unknown value", kind);
    }
  } else {
    p.kind = parse_enum(r, sec, "kind", std::string(problems::to_string(base.kind)),
                        problems::parse_problem_kind);
  }
  p.dimension = r.integer(sec, "dimension", base.dimension);
  p.n_components = r.integer(sec, "n_components", base.n_components);
  p.condition_number = r.real(sec, "condition_number", base.condition_number);
  p.smoothness = r.real(sec, "smoothness", base.smoothness);
  p.heterogeneity = r.real(sec, "heterogeneity", base.heterogeneity);
  p.hidden = r.integer(sec, "hidden", base.hidden);
  p.batch_size = r.integer(sec, "batch_size", base.batch_size);
  p.label_noise = r.real(sec, "label_noise", base.label_noise);
  p.target_noise = r.real(sec, "target_noise", base.target_noise);
  p.seed = r.seed(sec, "seed", base.seed);
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("problem: ") + e.what());
  }
  return p;
}

sched::SchedulerConfig read_scheduler(Reader& r, const sched::SchedulerConfig& base,
                                      int total_steps) {
  const std::string sec = "scheduler";
  const std::string kind = r.text(sec, "kind", sched::scheduler_name(base));
  const bool greedy = kind == "greedy" || kind == "greedy_simple";
  if (!greedy) {
    try {
      sched::parse_baseline_kind(kind);
    } catch (const std::invalid_argument&) {
      Reader::fail(sec, "kind", "unknown value", kind);
    }
  }
  for (const auto& key : greedy ? kBaselineKeys : kGreedyKeys) {
    if (r.has(sec, key)) {
      throw ConfigError(sec + "." + key + " does not apply to kind " + kind);
    }
  }

  const double base_lr = sched::initial_lr(base);
  sched::SchedulerConfig out;
  try {
    if (greedy) {
      const auto* b = std::get_if<sched::GreedyConfig>(&base);
      const sched::GreedyConfig d = b ? *b : sched::GreedyConfig{};
      sched::GreedyConfig g = d;
      g.form = kind == "greedy" ? sched::GreedyForm::detailed : sched::GreedyForm::simple;
      g.initial_lr = r.real(sec, "initial_lr", base_lr);
      g.min_lr = r.real(sec, "min_lr", 0.1 * g.initial_lr);
      g.max_lr = r.real(sec, "max_lr", 10.0 * g.initial_lr);
      g.factor = r.real(sec, "factor", d.factor);
      g.patience = r.integer(sec, "patience", d.patience);
      g.threshold = r.real(sec, "threshold", d.threshold);
      g.cooldown = r.integer(sec, "cooldown", d.cooldown);
      g.warmup = r.integer(sec, "warmup", d.warmup);
      g.eps = r.real(sec, "eps", d.eps);
      g.smoothing = r.boolean(sec, "smoothing", d.smoothing);
      g.window_size = r.integer(sec, "window_size", d.window_size);
      g.reset_start = r.integer(sec, "reset_start", d.reset_start);
      g.mode = parse_enum(r, sec, "mode", std::string(sched::to_string(d.mode)),
                          [](const std::string& s) {
                            if (s == "min") return sched::Mode::min;
                            if (s == "max") return sched::Mode::max;
                            throw std::invalid_argument(s);
                          });
      g.validate();
      out = g;
    } else {
      const auto* b = std::get_if<sched::BaselineConfig>(&base);
      const sched::BaselineConfig d = b ? *b : sched::BaselineConfig{};
      sched::BaselineConfig c = d;
      c.kind = sched::parse_baseline_kind(kind);
      c.initial_lr = r.real(sec, "initial_lr", base_lr);
      c.min_lr = r.real(sec, "min_lr", b ? d.min_lr : 0.0);
      c.total_steps = r.integer(sec, "total_steps", total_steps);
      c.warmup_steps = r.integer(sec, "warmup_steps", d.warmup_steps);
      c.restart_period = r.integer(sec, "restart_period", d.restart_period);
      c.decay_rate = r.real(sec, "decay_rate", d.decay_rate);
      c.power = r.real(sec, "power", d.power);
      c.validate();
      out = c;
    }
  } catch (const sched::ConfigError& e) {
    throw ConfigError(std::string("scheduler: ") + e.what());
  }
  return out;
}

optim::OptimizerConfig read_optimizer(Reader& r, const optim::OptimizerConfig& base) {
  const std::string sec = "optimizer";
  optim::OptimizerConfig o = base;
  o.kind = parse_enum(r, sec, "kind", std::string(optim::to_string(base.kind)),
                      optim::parse_optimizer_kind);
  o.beta1 = r.real(sec, "beta1", base.beta1);
  o.beta2 = r.real(sec, "beta2", base.beta2);
  o.adam_eps = r.real(sec, "eps", base.adam_eps);
  try {
    o.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("optimizer: ") + e.what());
  }
  return o;
}

noise::NoiseSpec read_noise(Reader& r, const noise::NoiseSpec& base) {
  const std::string sec = "noise";
  noise::NoiseSpec n = base;
  n.kind = parse_enum(r, sec, "kind", std::string(noise::to_string(base.kind)),
                      noise::parse_noise_kind);
  n.strength = r.real(sec, "strength", base.strength);
  if (r.has(sec, "period")) {
    n.period = r.integer(sec, "period", 0);
  } else {
    r.record(sec, "period", n.period ? std::to_string(*n.period) : "");
  }
  n.spike_prob = r.real(sec, "spike_prob", base.spike_prob);
  try {
    n.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("noise: ") + e.what());
  }
  return n;
}

runner::RunConfig read_run(Reader& r, const runner::RunConfig& base,
                           const CommonOptions& opts, bool require_kind) {
  runner::RunConfig cfg = base;
  cfg.total_steps = r.integer("run", "total_steps", base.total_steps);
  cfg.seed = r.seed("run", "seed", base.seed);
  if (opts.seed) {
    cfg.seed = *opts.seed;
    r.overwrite("run", "seed", std::to_string(cfg.seed));
  }
  cfg.problem = read_problem(r, base.problem, require_kind);
  cfg.scheduler = read_scheduler(r, base.scheduler, cfg.total_steps);
  cfg.optimizer = read_optimizer(r, base.optimizer);
  cfg.noise = read_noise(r, base.noise);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("run: ") + e.what());
  }
  return cfg;
}

// --seed N moves a seed list to start at N, keeping its length.
std::vector<std::uint64_t> shift_seeds(Reader& r, const std::string& section,
                                       std::vector<std::uint64_t> seeds,
                                       const CommonOptions& opts) {
  if (opts.seed) {
    for (std::size_t k = 0; k < seeds.size(); ++k) seeds[k] = *opts.seed + k;
    r.overwrite(section, "seeds", join_numbers(seeds));
  }
  if (seeds.empty()) throw ConfigError(section + ".seeds: needs at least one seed");
  return seeds;
}

ConfigTree load_optional(const CommonOptions& opts) {
  return opts.config ? load_config(*opts.config) : ConfigTree{};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void prepare_dir(const OutputSettings& out, const ConfigTree& echo) {
  fs::create_directories(out.dir);
  std::ostringstream ini;
  boost::property_tree::ini_parser::write_ini(ini, echo);
  write_text(out.dir / "config.ini", ini.str());
}

template <typename Fn>
int guarded(std::ostream& log, Fn&& body) {
  try {
    body();
    return 0;
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return 1;
  }
}

Cell optional_cell(const std::optional<double>& v) {
  return v ? Cell{*v} : Cell{};
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string cell_text(const Cell& c) {
  struct Visitor {
    std::string operator()(std::monostate) const { return {}; }
    std::string operator()(double v) const { return format_double(v); }
    std::string operator()(std::int64_t v) const { return std::to_string(v); }
    std::string operator()(std::uint64_t v) const { return std::to_string(v); }
    std::string operator()(const std::string& v) const { return csv_escape(v); }
    std::string operator()(bool v) const { return v ? "true" : "false"; }
  };
  return std::visit(Visitor{}, c);
}

nlohmann::ordered_json cell_json(const Cell& c) {
  struct Visitor {
    nlohmann::ordered_json operator()(std::monostate) const { return nullptr; }
    nlohmann::ordered_json operator()(double v) const {
      if (!std::isfinite(v)) return nullptr;
      return v;
    }
    nlohmann::ordered_json operator()(std::int64_t v) const { return v; }
    nlohmann::ordered_json operator()(std::uint64_t v) const { return v; }
    nlohmann::ordered_json operator()(const std::string& v) const { return v; }
    nlohmann::ordered_json operator()(bool v) const { return v; }
  };
  return std::visit(Visitor{}, c);
}

nlohmann::ordered_json finite_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

const std::vector<std::string> kResultColumns = {
    "run_id",   "scheduler", "F",          "problem",        "noise",
    "seed",     "stage10",   "stage50",    "stage100",       "final_loss",
    "max_loss", "recovery_ratio", "recovery_speed", "diverged"};

}  // namespace

Format parse_format(std::string_view name) {
  if (name == "csv") return Format::csv;
  if (name == "json") return Format::json;
  throw std::invalid_argument("unknown format '" + std::string(name) + "'");
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("cannot format number");
  return std::string(buf, ptr);
}

std::vector<double> parse_real_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split(text, ',')) {
    auto v = parse_number<double>(item);
    if (!v || !std::isfinite(*v)) throw ConfigError("bad number '" + trim(item) + "'");
    out.push_back(*v);
  }
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split(text, ',')) {
    const std::string t = trim(item);
    const auto dash = t.find('-', 1);
    if (dash != std::string::npos) {
      auto lo = parse_number<std::uint64_t>(t.substr(0, dash));
      auto hi = parse_number<std::uint64_t>(t.substr(dash + 1));
      if (!lo || !hi || *hi < *lo) throw ConfigError("bad seed range '" + t + "'");
      for (std::uint64_t s = *lo; s <= *hi; ++s) out.push_back(s);
    } else {
      auto v = parse_number<std::uint64_t>(t);
      if (!v) throw ConfigError("bad seed '" + t + "'");
      out.push_back(*v);
    }
  }
  return out;
}

void Table::add(std::vector<Cell> row) {
  if (row.size() != columns.size()) {
    throw std::logic_error("table row width does not match its header");
  }
  rows.push_back(std::move(row));
}

std::string to_csv(const Table& table) {
  std::string out = join(table.columns) + '\n';
  for (const auto& row : table.rows) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k) out += ',';
      out += cell_text(row[k]);
    }
    out += '\n';
  }
  return out;
}

std::string to_json(const Table& table) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& row : table.rows) {
    nlohmann::ordered_json obj = nlohmann::ordered_json::object();
    for (std::size_t k = 0; k < row.size(); ++k) obj[table.columns[k]] = cell_json(row[k]);
    arr.push_back(std::move(obj));
  }
  return arr.dump(2) + '\n';
}

fs::path write_table(const fs::path& dir, const std::string& name, const Table& table,
                     Format format) {
  const fs::path path = dir / (name + (format == Format::csv ? ".csv" : ".json"));
  write_text(path, format == Format::csv ? to_csv(table) : to_json(table));
  return path;
}

Table trace_table(const runner::Trace& trace) {
  Table t;
  t.columns = {"step", "true_loss", "observed_loss", "lr", "grad_norm"};
  for (std::size_t k = 0; k < trace.size(); ++k) {
    t.add({static_cast<std::int64_t>(k), trace.true_loss[k], trace.observed_loss[k],
           trace.lr[k], trace.grad_norm[k]});
  }
  return t;
}

ConfigTree parse_config(std::istream& in, const std::string& source) {
  ConfigTree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(source + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  return tree;
}

ConfigTree load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  return parse_config(in, path.string());
}

ResolvedRun resolve_run(const ConfigTree& tree, const CommonOptions& opts) {
  Reader r(tree, run_sections());
  ResolvedRun out;
  runner::RunConfig base;
  sched::GreedyConfig g;
  g.initial_lr = 0.01;
  base.scheduler = g;
  out.run = read_run(r, base, opts, true);
  out.output = read_output(r, opts);
  out.echo = r.take_echo();
  return out;
}

ResolvedGrid resolve_robustness(const ConfigTree& tree, const CommonOptions& opts) {
  Reader r(tree, {{"grid",
                   {"total_steps", "seeds", "schedulers", "problems", "noises",
                    "factor", "patience", "window_size"}},
                  {"output", kOutputKeys}});
  const runner::GridSpec def = runner::default_robustness_grid();
  ResolvedGrid out;
  runner::GridSpec& g = out.grid;
  const std::string sec = "grid";
  g.total_steps = r.integer(sec, "total_steps", def.total_steps);
  if (g.total_steps < 10) {
    Reader::fail(sec, "total_steps", "must be at least 10", std::to_string(g.total_steps));
  }
  g.seeds = shift_seeds(r, sec, r.seeds(sec, "seeds", def.seeds), opts);

  std::vector<std::string> def_names;
  for (const auto& s : def.schedulers) def_names.push_back(s.name);
  for (const auto& name : r.names(sec, "schedulers", def_names)) {
    auto it = std::find_if(def.schedulers.begin(), def.schedulers.end(),
                           [&](const auto& s) { return s.name == name; });
    if (it == def.schedulers.end()) Reader::fail(sec, "schedulers", "unknown scheduler", name);
    g.schedulers.push_back(*it);
  }
  def_names.clear();
  for (const auto& p : def.problems) def_names.push_back(p.name);
  for (const auto& name : r.names(sec, "problems", def_names)) {
    auto it = std::find_if(def.problems.begin(), def.problems.end(),
                           [&](const auto& p) { return p.name == name; });
    if (it == def.problems.end()) Reader::fail(sec, "problems", "unknown problem", name);
    g.problems.push_back(*it);
  }
  def_names.clear();
  for (auto k : def.noises) def_names.emplace_back(noise::to_string(k));
  for (const auto& name : r.names(sec, "noises", def_names)) {
    try {
      g.noises.push_back(noise::parse_noise_kind(name));
    } catch (const std::invalid_argument&) {
      Reader::fail(sec, "noises", "unknown noise kind", name);
    }
  }

  sched::GreedyConfig def_greedy;
  for (const auto& s : def.schedulers) {
    if (auto* c = std::get_if<sched::GreedyConfig>(&s.config)) def_greedy = *c;
  }
  const double factor = r.real(sec, "factor", def_greedy.factor);
  const int patience = r.integer(sec, "patience", def_greedy.patience);
  const int window = r.integer(sec, "window_size", def_greedy.window_size);
  for (auto& s : g.schedulers) {
    if (auto* c = std::get_if<sched::GreedyConfig>(&s.config)) {
      c->factor = factor;
      c->patience = patience;
      c->window_size = window;
      try {
        c->validate();
      } catch (const sched::ConfigError& e) {
        throw ConfigError(std::string("grid: ") + e.what());
      }
    }
  }
  out.output = read_output(r, opts);
  g.jobs = out.output.jobs;
  out.echo = r.take_echo();
  return out;
}

runner::RunConfig default_fsweep_config() {
  const runner::GridSpec grid = runner::default_robustness_grid();
  runner::RunConfig cfg;
  for (const auto& p : grid.problems) {
    if (p.name == "mlp_small") {
      cfg.problem = p.spec;
      cfg.optimizer = p.optimizer;
    }
  }
  sched::GreedyConfig g;
  g.form = sched::GreedyForm::detailed;
  g.initial_lr = 0.1;
  g.min_lr = 0.01;
  g.max_lr = 1.0;
  g.patience = 10;
  g.smoothing = true;
  g.window_size = 50;
  cfg.scheduler = g;
  cfg.total_steps = 500;
  cfg.seed = 1;
  return cfg;
}

ResolvedFSweep resolve_fsweep(const ConfigTree& tree, const CommonOptions& opts) {
  KeySets sections = run_sections();
  sections["fsweep"] = {"factors", "seeds"};
  Reader r(tree, sections);
  ResolvedFSweep out;
  out.factors = r.reals("fsweep", "factors", {0.25, 0.5, 0.75, 0.99});
  if (out.factors.empty()) throw ConfigError("fsweep.factors: needs at least one factor");
  for (double f : out.factors) {
    if (!(f > 0.0 && f < 1.0)) {
      Reader::fail("fsweep", "factors", "factors must lie in (0, 1)", format_double(f));
    }
  }
  out.seeds = shift_seeds(r, "fsweep", r.seeds("fsweep", "seeds", {1, 2, 3, 4, 5}), opts);
  CommonOptions no_seed = opts;
  no_seed.seed.reset();
  out.base = read_run(r, default_fsweep_config(), no_seed, false);
  if (!std::holds_alternative<sched::GreedyConfig>(out.base.scheduler)) {
    throw ConfigError("scheduler.kind must be greedy or greedy_simple for fsweep");
  }
  out.output = read_output(r, opts);
  out.echo = r.take_echo();
  return out;
}

Theorem1Settings default_theorem1() {
  Theorem1Settings s;
  s.problem.kind = problems::ProblemKind::quadratic_sum;
  s.problem.dimension = 8;
  s.problem.n_components = 16;
  s.problem.condition_number = 10.0;
  s.problem.smoothness = 5.0;
  s.problem.heterogeneity = 0.5;
  s.problem.seed = 11;
  s.scheduler.form = sched::GreedyForm::simple;
  s.scheduler.factor = 0.95;
  s.scheduler.max_lr = 1.0 / s.problem.smoothness;
  s.scheduler.min_lr = 0.1 / s.problem.smoothness;
  s.scheduler.initial_lr = 0.5 * s.scheduler.max_lr;
  s.horizons = {100, 1000, 10000};
  for (std::uint64_t k = 1; k <= 20; ++k) s.seeds.push_back(k);
  return s;
}

Theorem2Settings default_theorem2() {
  Theorem2Settings s;
  s.problem.kind = problems::ProblemKind::quadratic_sum;
  s.problem.dimension = 8;
  s.problem.n_components = 16;
  s.problem.condition_number = 10.0;
  s.problem.smoothness = 2.0;
  s.problem.heterogeneity = 0.05;
  s.problem.seed = 7;
  s.scheduler.form = sched::GreedyForm::simple;
  s.scheduler.min_lr = 0.01;
  s.scheduler.max_lr = 0.99;
  s.scheduler.initial_lr = 0.5;
  s.total_steps = 100;
  s.factors = {0.1, 0.3, 0.5, 0.7, 0.9, 0.99};
  for (std::uint64_t k = 1; k <= 10; ++k) s.seeds.push_back(k);
  return s;
}

ResolvedTheory resolve_theory(const ConfigTree& tree, const CommonOptions& opts) {
  const std::set<std::string> quad = {"dimension",     "n_components", "condition_number",
                                      "smoothness",    "heterogeneity", "problem_seed",
                                      "form",          "seeds"};
  std::set<std::string> t1 = quad;
  t1.insert({"factor", "max_lr_fraction", "min_lr_fraction", "initial_lr_fraction",
             "horizons"});
  std::set<std::string> t2 = quad;
  t2.insert({"patience", "min_lr", "max_lr", "initial_lr", "total_steps", "factors"});
  Reader r(tree, {{"theorem1", t1}, {"theorem2", t2}, {"output", kOutputKeys}});

  auto read_quad = [&](const std::string& sec, problems::ProblemSpec p) {
    p.dimension = r.integer(sec, "dimension", p.dimension);
    p.n_components = r.integer(sec, "n_components", p.n_components);
    p.condition_number = r.real(sec, "condition_number", p.condition_number);
    p.smoothness = r.real(sec, "smoothness", p.smoothness);
    p.heterogeneity = r.real(sec, "heterogeneity", p.heterogeneity);
    p.seed = r.seed(sec, "problem_seed", p.seed);
    try {
      p.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(sec + ": " + e.what());
    }
    return p;
  };
  auto read_form = [&](const std::string& sec, sched::GreedyForm def) {
    return parse_enum(r, sec, "form", std::string(sched::to_string(def)),
                      [](const std::string& s) {
                        if (s == "simple") return sched::GreedyForm::simple;
                        if (s == "detailed") return sched::GreedyForm::detailed;
                        throw std::invalid_argument(s);
                      });
  };

  ResolvedTheory out;
  {
    const Theorem1Settings d = default_theorem1();
    Theorem1Settings& s = out.theorem1;
    const std::string sec = "theorem1";
    s.problem = read_quad(sec, d.problem);
    s.scheduler = d.scheduler;
    s.scheduler.form = read_form(sec, d.scheduler.form);
    s.scheduler.factor = r.real(sec, "factor", d.scheduler.factor);
    const double l = s.problem.smoothness;
    const double max_frac = r.real(sec, "max_lr_fraction", 1.0);
    const double min_frac = r.real(sec, "min_lr_fraction", 0.1);
    const double init_frac = r.real(sec, "initial_lr_fraction", 0.5);
    if (!(max_frac > 0.0 && max_frac < 2.0)) {
      Reader::fail(sec, "max_lr_fraction", "must lie in (0, 2)", format_double(max_frac));
    }
    s.scheduler.max_lr = max_frac / l;
    s.scheduler.min_lr = min_frac / l;
    s.scheduler.initial_lr = init_frac * s.scheduler.max_lr;
    std::vector<double> hs;
    for (int h : d.horizons) hs.push_back(h);
    for (double h : r.reals(sec, "horizons", hs)) {
      if (h < 10 || h != std::floor(h) || h > 1e9) {
        Reader::fail(sec, "horizons", "horizons must be integers of at least 10",
                     format_double(h));
      }
      s.horizons.push_back(static_cast<int>(h));
    }
    s.seeds = shift_seeds(r, sec, r.seeds(sec, "seeds", d.seeds), opts);
    try {
      s.scheduler.validate();
    } catch (const sched::ConfigError& e) {
      throw ConfigError(sec + ": " + e.what());
    }
  }
  {
    const Theorem2Settings d = default_theorem2();
    Theorem2Settings& s = out.theorem2;
    const std::string sec = "theorem2";
    s.problem = read_quad(sec, d.problem);
    if (!(s.problem.smoothness > 1.0)) {
      Reader::fail(sec, "smoothness", "must exceed 1 for the optimal factor to exist",
                   format_double(s.problem.smoothness));
    }
    s.scheduler = d.scheduler;
    s.scheduler.form = read_form(sec, d.scheduler.form);
    s.scheduler.patience = r.integer(sec, "patience", d.scheduler.patience);
    s.scheduler.min_lr = r.real(sec, "min_lr", d.scheduler.min_lr);
    s.scheduler.max_lr = r.real(sec, "max_lr", d.scheduler.max_lr);
    s.scheduler.initial_lr = r.real(sec, "initial_lr", d.scheduler.initial_lr);
    s.total_steps = r.integer(sec, "total_steps", d.total_steps);
    if (s.total_steps < 10) {
      Reader::fail(sec, "total_steps", "must be at least 10", std::to_string(s.total_steps));
    }
    s.factors = r.reals(sec, "factors", d.factors);
    for (double f : s.factors) {
      if (!(f > 0.0 && f < 1.0)) {
        Reader::fail(sec, "factors", "factors must lie in (0, 1)", format_double(f));
      }
    }
    s.seeds = shift_seeds(r, sec, r.seeds(sec, "seeds", d.seeds), opts);
    try {
      s.scheduler.validate();
    } catch (const sched::ConfigError& e) {
      throw ConfigError(sec + ": " + e.what());
    }
  }
  out.output = read_output(r, opts);
  out.echo = r.take_echo();
  return out;
}

ResolvedClassify resolve_classify(const ConfigTree& tree, const CommonOptions& opts) {
  Reader r(tree, {{"classify", {"cutoff", "cutoff_kind", "greedy", "baseline"}},
                  {"output", kOutputKeys}});
  ResolvedClassify out;
  const std::string sec = "classify";
  out.cutoff.value = r.real(sec, "cutoff", 0.1);
  if (out.cutoff.value < 0.0) {
    Reader::fail(sec, "cutoff", "must be nonnegative", format_double(out.cutoff.value));
  }
  out.cutoff.kind = parse_enum(r, sec, "cutoff_kind", "absolute", [](const std::string& s) {
    if (s == "absolute") return runner::CutoffKind::absolute;
    if (s == "relative") return runner::CutoffKind::relative;
    throw std::invalid_argument(s);
  });
  const std::string g = r.text(sec, "greedy", "");
  const std::string b = r.text(sec, "baseline", "");
  if (!g.empty()) out.greedy_scheduler = g;
  if (!b.empty()) out.baseline_scheduler = b;
  out.output = read_output(r, opts);
  out.echo = r.take_echo();
  return out;
}

Table results_table(const runner::GridResult& result) {
  Table t;
  t.columns = kResultColumns;
  std::int64_t id = 0;
  for (const auto& c : result.cells) {
    const auto& s = c.summary;
    t.add({id++, c.scheduler, optional_cell(c.factor), c.problem,
           std::string(noise::to_string(c.noise)), c.seed, s.stage10, s.stage50,
           s.stage100, s.final_loss, s.max_loss, optional_cell(s.recovery_ratio),
           s.recovery_speed ? Cell{static_cast<std::int64_t>(*s.recovery_speed)} : Cell{},
           s.diverged});
  }
  return t;
}

Table medians_table(const runner::GridResult& result,
                    const std::vector<noise::NoiseKind>& noises) {
  Table t;
  t.columns = {"scheduler"};
  for (auto k : noises) t.columns.emplace_back(noise::to_string(k));
  std::vector<std::string> order;
  for (const auto& c : result.cells) {
    if (std::find(order.begin(), order.end(), c.scheduler) == order.end()) {
      order.push_back(c.scheduler);
    }
  }
  for (const auto& s : order) {
    std::vector<Cell> row{s};
    const auto it = result.medians.find(s);
    for (auto k : noises) {
      const std::string n(noise::to_string(k));
      if (it != result.medians.end() && it->second.count(n)) {
        row.emplace_back(it->second.at(n));
      } else {
        row.emplace_back();
      }
    }
    t.add(std::move(row));
  }
  return t;
}

Table percentiles_table(const runner::GridResult& result) {
  Table t;
  t.columns = {"scheduler", "p10", "p50", "p90"};
  std::vector<std::string> order;
  for (const auto& c : result.cells) {
    if (std::find(order.begin(), order.end(), c.scheduler) == order.end()) {
      order.push_back(c.scheduler);
    }
  }
  for (const auto& s : order) {
    const auto it = result.percentiles.find(s);
    if (it == result.percentiles.end()) continue;
    t.add({s, it->second.p10, it->second.p50, it->second.p90});
  }
  return t;
}

Table lr_bands_table(const runner::GridResult& result) {
  Table t;
  t.columns = {"scheduler", "step", "p10", "p50", "p90"};
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::vector<double>>> curves;
  for (const auto& c : result.cells) {
    if (c.error) continue;
    if (!curves.count(c.scheduler)) order.push_back(c.scheduler);
    const double base = sched::initial_lr(c.config.scheduler);
    std::vector<double> scaled;
    for (double lr : c.lr) scaled.push_back(lr / base);
    curves[c.scheduler].push_back(std::move(scaled));
  }
  for (const auto& s : order) {
    const auto& runs = curves[s];
    std::size_t longest = 0;
    for (const auto& r : runs) longest = std::max(longest, r.size());
    for (std::size_t k = 0; k < longest; ++k) {
      std::vector<double> at;
      for (const auto& r : runs) {
        if (k < r.size()) at.push_back(r[k]);
      }
      t.add({s, static_cast<std::int64_t>(k), runner::quantile(at, 0.1),
             runner::quantile(at, 0.5), runner::quantile(at, 0.9)});
    }
  }
  return t;
}

std::vector<ResultRow> read_results_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read results file " + path.string());
  const std::string where = path.string();
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(where + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (split(line, ',') != kResultColumns) {
    throw ConfigError(where + ":1: header does not match the results schema");
  }
  std::vector<ResultRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line, ',');
    auto bad = [&](const std::string& column) -> ConfigError {
      return ConfigError(where + ":" + std::to_string(lineno) + ": bad " + column + " value");
    };
    if (f.size() != kResultColumns.size()) {
      throw ConfigError(where + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(kResultColumns.size()) + " fields");
    }
    auto real = [&](std::size_t k) {
      auto v = parse_number<double>(f[k]);
      if (!v) throw bad(kResultColumns[k]);
      return *v;
    };
    ResultRow r;
    auto id = parse_number<std::int64_t>(f[0]);
    if (!id) throw bad("run_id");
    r.run_id = *id;
    r.scheduler = f[1];
    if (!f[2].empty()) r.factor = real(2);
    r.problem = f[3];
    r.noise = f[4];
    auto seed = parse_number<std::uint64_t>(f[5]);
    if (!seed) throw bad("seed");
    r.seed = *seed;
    r.summary.stage10 = real(6);
    r.summary.stage50 = real(7);
    r.summary.stage100 = real(8);
    r.summary.final_loss = real(9);
    r.summary.max_loss = real(10);
    if (!f[11].empty()) r.summary.recovery_ratio = real(11);
    if (!f[12].empty()) {
      auto v = parse_number<int>(f[12]);
      if (!v) throw bad("recovery_speed");
      r.summary.recovery_speed = *v;
    }
    if (f[13] == "true") {
      r.summary.diverged = true;
    } else if (f[13] != "false") {
      throw bad("diverged");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

ClassifyOutput classify_results(const std::vector<ResultRow>& greedy,
                                const std::vector<ResultRow>& baseline,
                                const ResolvedClassify& settings) {
  using Key = std::pair<runner::PairKey, int>;
  auto index = [](const std::vector<ResultRow>& rows,
                  const std::optional<std::string>& filter) {
    std::vector<std::pair<Key, const ResultRow*>> out;
    std::map<runner::PairKey, int> seen;
    for (const auto& r : rows) {
      if (filter && r.scheduler != *filter) continue;
      runner::PairKey k{r.problem, r.noise, r.seed};
      out.push_back({{k, seen[k]++}, &r});
    }
    return out;
  };
  auto describe = [](const Key& k) {
    return k.first.problem + "/" + k.first.noise + "/seed " + std::to_string(k.first.seed) +
           " (occurrence " + std::to_string(k.second) + ")";
  };

  const auto g = index(greedy, settings.greedy_scheduler);
  const auto b = index(baseline, settings.baseline_scheduler);
  std::map<Key, const ResultRow*> by_key;
  for (const auto& [k, r] : b) by_key[k] = r;
  if (g.empty()) throw ConfigError("classify: no greedy rows to compare");

  ClassifyOutput out;
  out.verdicts.columns = {"problem",  "noise",   "seed",    "greedy",  "baseline",
                          "stage10",  "stage50", "stage100", "overall", "delta10",
                          "delta50",  "delta100", "delta_final"};
  for (const auto& [k, gr] : g) {
    const auto it = by_key.find(k);
    if (it == by_key.end()) throw ConfigError("classify: no baseline row for " + describe(k));
    const ResultRow* br = it->second;
    by_key.erase(it);
    const auto v = runner::classify(gr->summary, br->summary, settings.cutoff, k.first, k.first);
    out.counts.add(v);
    out.verdicts.add({gr->problem, gr->noise, gr->seed, gr->scheduler, br->scheduler,
                      std::string(runner::to_string(v.stage10)),
                      std::string(runner::to_string(v.stage50)),
                      std::string(runner::to_string(v.stage100)),
                      std::string(runner::to_string(v.overall)), v.delta10, v.delta50,
                      v.delta100, v.delta_final});
  }
  if (!by_key.empty()) {
    throw ConfigError("classify: no greedy row for " + describe(by_key.begin()->first));
  }

  const auto& c = out.counts;
  out.summary.columns = {"pairs",       "yes",          "yes_star",
                         "no",          "no_star",      "as_good_or_better_pct",
                         "better_pct",  "as_good_pct",  "worse_pct",
                         "clearly_better_pct", "final_within_cutoff", "average_benefit",
                         "max_benefit"};
  out.summary.add({static_cast<std::int64_t>(c.pairs), static_cast<std::int64_t>(c.yes),
                   static_cast<std::int64_t>(c.yes_star), static_cast<std::int64_t>(c.no),
                   static_cast<std::int64_t>(c.no_star), c.as_good_or_better_pct(),
                   c.better_pct(), c.as_good_pct(), c.worse_pct(), c.clearly_better_pct(),
                   static_cast<std::int64_t>(c.final_within_cutoff), c.average_benefit(),
                   c.max_benefit});
  return out;
}

int cmd_run(const CommonOptions& opts, std::ostream& log) {
  return guarded(log, [&] {
    const ResolvedRun cfg = resolve_run(load_optional(opts), opts);
    prepare_dir(cfg.output, cfg.echo);
    const runner::Trace tr = runner::run_one(cfg.run);
    const runner::RunSummary s = runner::summarize(tr);

    log << "wrote " << write_table(cfg.output.dir, "trace", trace_table(tr), cfg.output.format).string()
        << '\n';
    nlohmann::ordered_json j;
    j["scheduler"] = sched::scheduler_name(cfg.run.scheduler);
    j["problem"] = problems::to_string(cfg.run.problem.kind);
    j["noise"] = noise::to_string(cfg.run.noise.kind);
    j["seed"] = cfg.run.seed;
    j["total_steps"] = cfg.run.total_steps;
    j["steps_completed"] = tr.size();
    j["stage10"] = finite_or_null(s.stage10);
    j["stage50"] = finite_or_null(s.stage50);
    j["stage100"] = finite_or_null(s.stage100);
    j["final_loss"] = finite_or_null(s.final_loss);
    j["max_loss"] = finite_or_null(s.max_loss);
    j["recovery_ratio"] = s.recovery_ratio ? finite_or_null(*s.recovery_ratio) : nullptr;
    j["recovery_speed"] = s.recovery_speed ? nlohmann::ordered_json(*s.recovery_speed) : nullptr;
    j["diverged"] = s.diverged;
    j["final_full_loss"] = finite_or_null(tr.final_full_loss);
    j["avg_iterate_full_loss"] = finite_or_null(tr.avg_iterate_full_loss);
    write_text(cfg.output.dir / "summary.json", j.dump(2) + '\n');
    log << "wrote " << (cfg.output.dir / "summary.json").string() << '\n';
  });
}

int cmd_robustness(const CommonOptions& opts, std::ostream& log) {
  return guarded(log, [&] {
    const ResolvedGrid cfg = resolve_robustness(load_optional(opts), opts);
    prepare_dir(cfg.output, cfg.echo);
    const runner::GridResult result = runner::run_grid(cfg.grid);
    for (const auto& c : result.cells) {
      if (c.error) {
        throw std::runtime_error("cell " + c.scheduler + "/" + c.problem + "/" +
                                 std::string(noise::to_string(c.noise)) + "/seed " +
                                 std::to_string(c.seed) + " failed: " + *c.error);
      }
    }
    const auto& dir = cfg.output.dir;
    const Format f = cfg.output.format;
    for (const auto& path :
         {write_table(dir, "results", results_table(result), f),
          write_table(dir, "medians", medians_table(result, cfg.grid.noises), f),
          write_table(dir, "percentiles", percentiles_table(result), f),
          write_table(dir, "lr_bands", lr_bands_table(result), f)}) {
      log << "wrote " << path.string() << '\n';
    }
  });
}

int cmd_fsweep(const CommonOptions& opts, std::ostream& log) {
  return guarded(log, [&] {
    const ResolvedFSweep cfg = resolve_fsweep(load_optional(opts), opts);
    prepare_dir(cfg.output, cfg.echo);
    const auto problem = problems::Problem::make(cfg.base.problem);
    const auto rows = runner::f_sweep(problem, cfg.base, cfg.factors, cfg.seeds);
    Table t;
    t.columns = {"F", "final_loss", "diverged"};
    for (const auto& r : rows) {
      t.add({r.factor, r.median_final_loss, r.diverged_runs > 0});
      const auto path = write_table(cfg.output.dir, "trace_F" + format_double(r.factor),
                                    trace_table(r.traces.front()), cfg.output.format);
      log << "wrote " << path.string() << '\n';
    }
    log << "wrote " << write_table(cfg.output.dir, "fsweep", t, cfg.output.format).string()
        << '\n';
  });
}

int cmd_theory(const CommonOptions& opts, std::ostream& log) {
  return guarded(log, [&] {
    const ResolvedTheory cfg = resolve_theory(load_optional(opts), opts);
    prepare_dir(cfg.output, cfg.echo);

    const auto& s1 = cfg.theorem1;
    const auto p1 = problems::Problem::make(s1.problem);
    runner::RunConfig r1;
    r1.problem = s1.problem;
    r1.scheduler = s1.scheduler;
    Table t1;
    t1.columns = {"T", "lhs", "rhs", "holds"};
    for (int h : s1.horizons) {
      const auto res = runner::theorem1_check(p1, r1, h, s1.seeds);
      t1.add({static_cast<std::int64_t>(res.horizon), res.lhs, res.rhs, res.holds});
    }
    log << "wrote " << write_table(cfg.output.dir, "theorem1", t1, cfg.output.format).string()
        << '\n';

    const auto& s2 = cfg.theorem2;
    const auto p2 = problems::Problem::make(s2.problem);
    runner::RunConfig r2;
    r2.problem = s2.problem;
    r2.scheduler = s2.scheduler;
    r2.total_steps = s2.total_steps;
    Table t2;
    t2.columns = {"F", "final_suboptimality"};
    for (const auto& row : runner::theorem2_sweep(p2, r2, s2.factors, s2.seeds)) {
      t2.add({row.factor, row.median_suboptimality});
    }
    log << "wrote " << write_table(cfg.output.dir, "theorem2", t2, cfg.output.format).string()
        << '\n';
  });
}

int cmd_classify(const CommonOptions& opts, const fs::path& greedy, const fs::path& baseline,
                 std::ostream& log) {
  return guarded(log, [&] {
    const ResolvedClassify cfg = resolve_classify(load_optional(opts), opts);
    const auto g = read_results_csv(greedy);
    const auto b = read_results_csv(baseline);
    const ClassifyOutput out = classify_results(g, b, cfg);
    prepare_dir(cfg.output, cfg.echo);
    log << "wrote "
        << write_table(cfg.output.dir, "verdicts", out.verdicts, cfg.output.format).string()
        << '\n';
    log << "wrote "
        << write_table(cfg.output.dir, "summary_counts", out.summary, cfg.output.format).string()
        << '\n';
  });
}

int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"GreedyLR scheduler benchmark harness", "greedylr"};
  app.require_subcommand(1);

  CommonOptions opts;
  std::string config, out_dir, format;
  int jobs = 0;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "INI config file");
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--jobs", jobs, "Worker threads for grid runs")
        ->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "Seed override");
    sub->add_option("--format", format, "Table format")
        ->check(CLI::IsMember({"csv", "json"}));
  };

  auto* run = app.add_subcommand("run", "Single run: trace and summary");
  auto* robustness = app.add_subcommand("robustness", "Noise robustness grid");
  auto* fsweep = app.add_subcommand("fsweep", "Sweep of the GreedyLR factor F");
  auto* theory = app.add_subcommand("theory", "Convergence theory checks");
  auto* classify = app.add_subcommand("classify", "Paired verdicts from two result files");
  for (auto* sub : {run, robustness, fsweep, theory, classify}) add_common(sub);
  std::string greedy_path, baseline_path;
  classify->add_option("greedy_results", greedy_path, "results.csv holding GreedyLR runs")
      ->required();
  classify->add_option("baseline_results", baseline_path, "results.csv holding baseline runs")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  auto pick = [&](CLI::App* sub) {
    if (sub->count("--config")) opts.config = config;
    if (sub->count("--out")) opts.out = out_dir;
    if (sub->count("--jobs")) opts.jobs = jobs;
    if (sub->count("--seed")) opts.seed = seed;
    if (sub->count("--format")) opts.format = parse_format(format);
  };
  if (run->parsed()) {
    pick(run);
    return cmd_run(opts, err);
  }
  if (robustness->parsed()) {
    pick(robustness);
    return cmd_robustness(opts, err);
  }
  if (fsweep->parsed()) {
    pick(fsweep);
    return cmd_fsweep(opts, err);
  }
  if (theory->parsed()) {
    pick(theory);
    return cmd_theory(opts, err);
  }
  pick(classify);
  return cmd_classify(opts, greedy_path, baseline_path, err);
}

}  // namespace greedylr::cli
