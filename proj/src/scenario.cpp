#include "onestate/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "onestate/detector.hpp"
#include "onestate/noise.hpp"

namespace onestate {

namespace pt = boost::property_tree;

RunMode parse_run_mode(const std::string& name) {
  if (name == "trace") return RunMode::trace;
  if (name == "montecarlo" || name == "monte-carlo") return RunMode::monte_carlo;
  if (name == "design") return RunMode::design;
  if (name == "sweep") return RunMode::sweep;
  if (name == "validate-dep") return RunMode::validate_dep;
  throw ConfigError("run.mode", fmt::format("unknown mode '{}'", name));
}

const char* to_string(RunMode mode) {
  switch (mode) {
    case RunMode::trace: return "trace";
    case RunMode::monte_carlo: return "montecarlo";
    case RunMode::design: return "design";
    case RunMode::sweep: return "sweep";
    case RunMode::validate_dep: return "validate-dep";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& field, const std::string& text) {
  const std::string t = trim(text);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    throw ConfigError(field, fmt::format("expected a number, got '{}'", t));
  }
  if (used != t.size()) throw ConfigError(field, fmt::format("expected a number, got '{}'", t));
  if (!std::isfinite(v)) throw ConfigError(field, "must be finite");
  return v;
}

long long to_integer(const std::string& field, const std::string& text) {
  const std::string t = trim(text);
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(t, &used);
  } catch (const std::exception&) {
    throw ConfigError(field, fmt::format("expected an integer, got '{}'", t));
  }
  if (used != t.size()) throw ConfigError(field, fmt::format("expected an integer, got '{}'", t));
  return v;
}

std::vector<double> to_list(const std::string& field, const std::string& text) {
  std::vector<double> out;
  std::string item;
  std::stringstream ss(text);
  while (std::getline(ss, item, ',')) {
    std::stringstream words(item);
    std::string w;
    while (words >> w) out.push_back(to_double(field, w));
  }
  return out;
}

/// Rows separated by ';', entries by ',' or whitespace.
Matrix to_matrix(const std::string& field, const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::string row;
  std::stringstream ss(text);
  while (std::getline(ss, row, ';')) {
    if (trim(row).empty()) continue;
    rows.push_back(to_list(field, row));
  }
  if (rows.empty()) throw ConfigError(field, "empty matrix");
  const std::size_t cols = rows.front().size();
  for (const auto& r : rows) {
    if (r.size() != cols) throw ConfigError(field, "rows have different lengths");
  }
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return m;
}

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"run", {"mode", "trials", "dense_refine"}},
      {"plant", {"model", "a", "b", "c"}},
      {"input", {"kind", "level", "amplitude", "omega", "phase", "values", "step"}},
      {"disturbance", {"zeta0", "zeta1", "t_fault"}},
      {"noise", {"sigma2", "seed"}},
      {"horizon", {"t_end", "tau", "align"}},
      {"design",
       {"epsilon", "window", "tau_lo", "tau_hi", "tau_points", "sigma2_lo", "sigma2_hi",
        "sigma2_points"}},
      {"sweep", {"tau_lo", "tau_hi", "tau_points", "threshold"}},
  };
  return keys;
}

class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  std::optional<std::string> get(const std::string& section, const std::string& key) const {
    const auto sec = tree_.get_child_optional(section);
    if (!sec) return std::nullopt;
    const auto v = sec->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!v) return std::nullopt;
    return trim(*v);
  }

  void number(const std::string& section, const std::string& key, double& out) const {
    if (auto v = get(section, key)) out = to_double(section + "." + key, *v);
  }

  void integer(const std::string& section, const std::string& key, int& out) const {
    if (auto v = get(section, key)) {
      const long long n = to_integer(section + "." + key, *v);
      if (n < std::numeric_limits<int>::min() || n > std::numeric_limits<int>::max()) {
        throw ConfigError(section + "." + key, "out of range");
      }
      out = static_cast<int>(n);
    }
  }

 private:
  const pt::ptree& tree_;
};

InputSignal parse_input(const Reader& r) {
  const std::string kind = r.get("input", "kind").value_or("constant");
  try {
    if (kind == "constant") {
      double level = 1.0;
      r.number("input", "level", level);
      return InputSignal::constant(level);
    }
    if (kind == "sinusoid") {
      SinusoidInput s;
      r.number("input", "amplitude", s.amplitude);
      r.number("input", "omega", s.angular_frequency);
      r.number("input", "phase", s.phase);
      return InputSignal(s);
    }
    if (kind == "sampled") {
      SampledInput s;
      const auto values = r.get("input", "values");
      if (!values) throw ConfigError("input.values", "required for sampled input");
      s.values = to_list("input.values", *values);
      r.number("input", "step", s.step);
      return InputSignal(s);
    }
  } catch (const LinalgError& e) {
    throw ConfigError("input", e.what());
  }
  throw ConfigError("input.kind", fmt::format("unknown input kind '{}'", kind));
}

std::optional<double> optional_time(const Reader& r, const std::string& section,
                                    const std::string& key, std::optional<double> fallback) {
  const auto v = r.get(section, key);
  if (!v) return fallback;
  if (*v == "none") return std::nullopt;
  return to_double(section + "." + key, *v);
}

void validate(const ScenarioConfig& cfg) {
  if (!(cfg.levels.zeta0 > 0.0)) throw ConfigError("disturbance.zeta0", "must be positive");
  if (!(cfg.levels.zeta1 > 0.0)) throw ConfigError("disturbance.zeta1", "must be positive");
  if (!(cfg.levels.zeta1 < cfg.levels.zeta0)) {
    throw ConfigError("disturbance.zeta1", "levels must satisfy 0 < zeta1 < zeta0");
  }
  if (!(cfg.noise.sigma2 >= 0.0)) throw ConfigError("noise.sigma2", "must be >= 0");
  if (!(cfg.t_end > 0.0)) throw ConfigError("horizon.t_end", "must be positive");
  if (cfg.tau && !(*cfg.tau > 0.0)) throw ConfigError("horizon.tau", "must be positive");
  if (cfg.t_fault && !(*cfg.t_fault >= 0.0)) throw ConfigError("disturbance.t_fault", "must be >= 0");
  if (cfg.t_fault && *cfg.t_fault > cfg.t_end) {
    throw ConfigError("disturbance.t_fault", "must not exceed horizon.t_end");
  }
  if (!cfg.tau && !cfg.input.is_constant() && !cfg.input.is_periodic()) {
    throw ConfigError("horizon.tau", "auto-design needs a constant or sinusoidal input");
  }
  if (!(cfg.design.epsilon > 0.0 && cfg.design.epsilon < 1.0)) {
    throw ConfigError("design.epsilon", "must lie in (0, 1)");
  }
  if (!(cfg.design.window > 0.0)) throw ConfigError("design.window", "must be positive");
  if (!(cfg.design.tau_grid.lo > 0.0 && cfg.design.tau_grid.hi > cfg.design.tau_grid.lo)) {
    throw ConfigError("design.tau_lo", "tau grid needs 0 < tau_lo < tau_hi");
  }
  if (cfg.design.tau_grid.resolution < 2) throw ConfigError("design.tau_points", "must be >= 2");
  if (!(cfg.sigma2_lo > 0.0 && cfg.sigma2_hi >= cfg.sigma2_lo)) {
    throw ConfigError("design.sigma2_lo", "sigma^2 grid needs 0 < lo <= hi");
  }
  if (cfg.sigma2_points < 1) throw ConfigError("design.sigma2_points", "must be >= 1");
  if (!(cfg.sweep_grid.lo > 0.0 && cfg.sweep_grid.hi > cfg.sweep_grid.lo)) {
    throw ConfigError("sweep.tau_lo", "tau grid needs 0 < tau_lo < tau_hi");
  }
  if (cfg.sweep_grid.resolution < 2) throw ConfigError("sweep.tau_points", "must be >= 2");
  if (!(cfg.sweep_threshold >= 0.0 && cfg.sweep_threshold <= 1.0)) {
    throw ConfigError("sweep.threshold", "must lie in [0, 1]");
  }
  if (cfg.trials < 1) throw ConfigError("run.trials", "must be >= 1");
  if (cfg.dense_refine < 0) throw ConfigError("run.dense_refine", "must be >= 0");
  try {
    (void)cfg.plant();
  } catch (const ModelError& e) {
    throw ConfigError("plant", e.what());
  }
}

}  // namespace

LtiPlant ScenarioConfig::plant() const {
  if (plant_model == "flight-f4e") return LtiPlant::flight_f4e(input);
  if (!a || !b || !c) throw ModelError("explicit plant needs a, b and c");
  return LtiPlant(*a, *b, *c, input);
}

ScenarioConfig parse_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("", fmt::format("line {}: {}", e.line(), e.message()));
  }

  for (const auto& [section, body] : tree) {
    const auto known = known_keys().find(section);
    if (known == known_keys().end()) {
      throw ConfigError(section, "unknown section");
    }
    if (!body.data().empty()) throw ConfigError(section, "keys must live inside a section");
    for (const auto& [key, value] : body) {
      if (!known->second.count(key)) throw ConfigError(section + "." + key, "unknown key");
    }
  }

  const Reader r(tree);
  ScenarioConfig cfg;

  if (auto v = r.get("run", "mode")) cfg.mode = parse_run_mode(*v);
  r.integer("run", "trials", cfg.trials);
  r.integer("run", "dense_refine", cfg.dense_refine);

  cfg.plant_model = r.get("plant", "model").value_or("flight-f4e");
  if (cfg.plant_model == "explicit") {
    for (const char* key : {"a", "b", "c"}) {
      const auto v = r.get("plant", key);
      if (!v) throw ConfigError(fmt::format("plant.{}", key), "required for an explicit plant");
      Matrix m = to_matrix(fmt::format("plant.{}", key), *v);
      if (key[0] == 'a') cfg.a = m;
      if (key[0] == 'b') cfg.b = m;
      if (key[0] == 'c') cfg.c = m;
    }
  } else if (cfg.plant_model == "flight-f4e") {
    for (const char* key : {"a", "b", "c"}) {
      if (r.get("plant", key)) {
        throw ConfigError(fmt::format("plant.{}", key), "only allowed with model = explicit");
      }
    }
  } else {
    throw ConfigError("plant.model", fmt::format("unknown plant '{}'", cfg.plant_model));
  }

  cfg.input = parse_input(r);

  r.number("disturbance", "zeta0", cfg.levels.zeta0);
  r.number("disturbance", "zeta1", cfg.levels.zeta1);
  cfg.t_fault = optional_time(r, "disturbance", "t_fault", cfg.t_fault);

  r.number("noise", "sigma2", cfg.noise.sigma2);
  if (auto v = r.get("noise", "seed")) {
    const long long s = to_integer("noise.seed", *v);
    if (s < 0) throw ConfigError("noise.seed", "must be non-negative");
    cfg.noise.seed = static_cast<std::uint64_t>(s);
  }

  r.number("horizon", "t_end", cfg.t_end);
  if (auto v = r.get("horizon", "tau")) {
    if (*v == "auto-design") {
      cfg.tau.reset();
    } else {
      cfg.tau = to_double("horizon.tau", *v);
    }
  }
  if (auto v = r.get("horizon", "align")) {
    if (*v == "strict") {
      cfg.align = GridAlign::strict;
    } else if (*v == "snap") {
      cfg.align = GridAlign::snap;
    } else {
      throw ConfigError("horizon.align", fmt::format("expected strict or snap, got '{}'", *v));
    }
  }

  r.number("design", "epsilon", cfg.design.epsilon);
  r.number("design", "window", cfg.design.window);
  r.number("design", "tau_lo", cfg.design.tau_grid.lo);
  r.number("design", "tau_hi", cfg.design.tau_grid.hi);
  r.integer("design", "tau_points", cfg.design.tau_grid.resolution);
  r.number("design", "sigma2_lo", cfg.sigma2_lo);
  r.number("design", "sigma2_hi", cfg.sigma2_hi);
  r.integer("design", "sigma2_points", cfg.sigma2_points);

  r.number("sweep", "tau_lo", cfg.sweep_grid.lo);
  r.number("sweep", "tau_hi", cfg.sweep_grid.hi);
  r.integer("sweep", "tau_points", cfg.sweep_grid.resolution);
  r.number("sweep", "threshold", cfg.sweep_threshold);

  cfg.design.levels = cfg.levels;
  cfg.design.sigma2 = cfg.noise.sigma2;
  validate(cfg);
  return cfg;
}

ScenarioConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", fmt::format("cannot open config '{}'", path));
  return parse_config(in);
}

namespace {

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

nlohmann::json input_json(const InputSignal& f) {
  return std::visit(
      [](const auto& s) -> nlohmann::json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, ConstantInput>) {
          return {{"kind", "constant"}, {"level", s.level}};
        } else if constexpr (std::is_same_v<T, SinusoidInput>) {
          return {{"kind", "sinusoid"},
                  {"amplitude", s.amplitude},
                  {"omega", s.angular_frequency},
                  {"phase", s.phase}};
        } else {
          return {{"kind", "sampled"}, {"values", s.values}, {"step", s.step}};
        }
      },
      f.kind());
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::json ScenarioConfig::to_json() const {
  nlohmann::json plant_j{{"model", plant_model}};
  if (plant_model == "explicit") {
    plant_j["a"] = matrix_json(*a);
    plant_j["b"] = matrix_json(*b);
    plant_j["c"] = matrix_json(*c);
  }
  return {
      {"run", {{"mode", to_string(mode)}, {"trials", trials}, {"dense_refine", dense_refine}}},
      {"plant", plant_j},
      {"input", input_json(input)},
      {"disturbance",
       {{"zeta0", levels.zeta0}, {"zeta1", levels.zeta1}, {"t_fault", optional_json(t_fault)}}},
      {"noise", {{"sigma2", noise.sigma2}, {"seed", noise.seed}}},
      {"horizon",
       {{"t_end", t_end},
        {"tau", tau ? nlohmann::json(*tau) : nlohmann::json("auto-design")},
        {"align", align == GridAlign::strict ? "strict" : "snap"}}},
      {"design",
       {{"epsilon", design.epsilon},
        {"window", design.window},
        {"tau_lo", design.tau_grid.lo},
        {"tau_hi", design.tau_grid.hi},
        {"tau_points", design.tau_grid.resolution},
        {"sigma2_lo", sigma2_lo},
        {"sigma2_hi", sigma2_hi},
        {"sigma2_points", sigma2_points}}},
      {"sweep",
       {{"tau_lo", sweep_grid.lo},
        {"tau_hi", sweep_grid.hi},
        {"tau_points", sweep_grid.resolution},
        {"threshold", sweep_threshold}}},
  };
}

// ---------------------------------------------------------------------------
// Resolution

namespace {

int place(const char* field, double t, double tau, GridAlign align) {
  if (align == GridAlign::snap) return static_cast<int>(std::ceil(t / tau - 1e-9));
  const double k = std::round(t / tau);
  if (std::abs(k * tau - t) > 1e-9) {
    throw ConfigError(field, fmt::format("{} is not a multiple of tau = {} (nearest {}); "
                                         "set horizon.align = snap to round up",
                                         t, tau, k * tau));
  }
  return static_cast<int>(k);
}

}  // namespace

ResolvedScenario resolve(const ScenarioConfig& cfg) {
  ResolvedScenario out{cfg.plant(), 0.0, 0, std::nullopt, 0.0, std::nullopt, std::nullopt,
                       std::nullopt};
  GridAlign align = cfg.align;
  if (cfg.tau) {
    out.tau = *cfg.tau;
  } else {
    // A designed tau is never a divisor of T in general, so it always snaps.
    align = GridAlign::snap;
    if (cfg.input.is_constant()) {
      out.design = tau_opt_constant(cfg.design, out.plant);
      if (!out.design->feasible()) {
        throw InfeasibleDesign(fmt::format("no admissible tau in (0, {:.6g}] for sigma^2 = {}",
                                           out.design->tau0, cfg.design.sigma2));
      }
      out.tau = *out.design->tau_opt;
    } else {
      out.sweep = edp_sweep_periodic(cfg.design, out.plant, cfg.sweep_grid, cfg.sweep_threshold);
      out.tau = out.sweep->argmax;
    }
  }
  out.steps = place("horizon.t_end", cfg.t_end, out.tau, align);
  if (out.steps < 1) throw ConfigError("horizon.t_end", "horizon shorter than one step");
  out.t_end = out.steps * out.tau;
  if (cfg.t_fault) {
    out.k_fault = place("disturbance.t_fault", *cfg.t_fault, out.tau, align);
    out.t_fault = *out.k_fault * out.tau;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Runs

TraceSummary summarize(const ClosedLoopTrace& trace, const LtiPlant& plant) {
  TraceSummary s;
  s.steps = trace.total_steps();
  const int k_fault = trace.k_fault.value_or(s.steps + 1);
  int pre = 0;
  int post = 0;
  double e_max = 0.0;
  for (const TraceStep& row : trace.steps) {
    if (row.k == 0) continue;
    const bool faulty = row.z == Level::faulty;
    (faulty ? post : pre) += 1;
    if (row.detection_error()) (faulty ? s.errors_post : s.errors_pre) += 1;
    const double dev = (plant.c() * row.e).norm();
    if (row.k > k_fault) {
      s.peak_deviation_post = std::max(s.peak_deviation_post, dev);
      e_max = std::max(e_max, row.e.norm());
    } else {
      s.peak_deviation_pre = std::max(s.peak_deviation_pre, dev);
    }
  }
  s.errors = s.errors_pre + s.errors_post;
  s.error_rate = s.steps ? static_cast<double>(s.errors) / s.steps : 0.0;
  s.error_rate_pre = pre ? static_cast<double>(s.errors_pre) / pre : 0.0;
  s.error_rate_post = post ? static_cast<double>(s.errors_post) / post : 0.0;

  if (trace.k_fault && *trace.k_fault < s.steps) {
    int last_above = *trace.k_fault;
    for (const TraceStep& row : trace.steps) {
      if (row.k > *trace.k_fault && row.e.norm() > 1e-3 * e_max) last_above = row.k;
    }
    if (e_max == 0.0) {
      s.e_decay_time = *trace.k_fault * trace.tau;
    } else if (last_above < s.steps) {
      s.e_decay_time = (last_above + 1) * trace.tau;
    }
  }
  return s;
}

void parallel_for(int n, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  const int workers =
      std::max(1, std::min(n, static_cast<int>(std::thread::hardware_concurrency())));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n && !failed; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

namespace {

nlohmann::json grid_json(const ResolvedScenario& rs) {
  return {{"tau", rs.tau},
          {"steps", rs.steps},
          {"t_end", rs.t_end},
          {"k_fault", rs.k_fault ? nlohmann::json(*rs.k_fault) : nlohmann::json(nullptr)},
          {"t_fault", optional_json(rs.t_fault)}};
}

nlohmann::json summary_json(const TraceSummary& s) {
  return {{"steps", s.steps},
          {"errors", s.errors},
          {"errors_pre", s.errors_pre},
          {"errors_post", s.errors_post},
          {"error_rate", s.error_rate},
          {"error_rate_pre", s.error_rate_pre},
          {"error_rate_post", s.error_rate_post},
          {"peak_deviation_pre", s.peak_deviation_pre},
          {"peak_deviation_post", s.peak_deviation_post},
          {"e_decay_time", optional_json(s.e_decay_time)}};
}

nlohmann::json design_json(const DesignResult& d) {
  return {{"tau_opt", optional_json(d.tau_opt)},
          {"tau0", d.tau0},
          {"peak", d.peak},
          {"edp_at_opt", d.edp_at_opt},
          {"feasible", d.feasible()}};
}

nlohmann::json sweep_json(const PeriodicSweep& s) {
  return {{"argmax", s.argmax}, {"suitable", s.suitable}};
}

RunReport base_report(const ScenarioConfig& cfg, const char* mode) {
  RunReport rep;
  rep.summary["schema_version"] = kSchemaVersion;
  rep.summary["mode"] = mode;
  rep.summary["config"] = cfg.to_json();
  return rep;
}

void attach_resolution(RunReport& rep, const ResolvedScenario& rs) {
  rep.summary["grid"] = grid_json(rs);
  if (rs.design) rep.summary["design"] = design_json(*rs.design);
  if (rs.sweep) rep.summary["sweep"] = sweep_json(*rs.sweep);
}

struct Stats {
  double mean = 0.0;
  double std = 0.0;
};

Stats stats(const std::vector<double>& v) {
  Stats s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double acc = 0.0;
    for (double x : v) acc += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(acc / static_cast<double>(v.size() - 1));
  }
  return s;
}

nlohmann::json stats_json(const std::vector<double>& v) {
  const Stats s = stats(v);
  return {{"mean", s.mean}, {"std", s.std}};
}

std::vector<double> sigma2_grid(const ScenarioConfig& cfg) {
  std::vector<double> out;
  if (cfg.sigma2_points == 1) return {cfg.sigma2_lo};
  const double step = (cfg.sigma2_hi - cfg.sigma2_lo) / (cfg.sigma2_points - 1);
  for (int i = 0; i < cfg.sigma2_points; ++i) out.push_back(cfg.sigma2_lo + i * step);
  out.back() = cfg.sigma2_hi;
  return out;
}

}  // namespace

RunReport run_trace(const ScenarioConfig& cfg) {
  RunReport rep = base_report(cfg, "trace");
  const ResolvedScenario rs = resolve(cfg);
  attach_resolution(rep, rs);

  const ClosedLoopSystem sys(rs.plant, rs.profile(cfg.levels), rs.tau);
  const ClosedLoopTrace trace = sys.simulate(cfg.noise);
  const std::vector<Vector> nominal = sys.nominal_states();
  const OpenLoopTrace open = sys.uncompensated(cfg.noise);

  rep.summary["trace"] = summary_json(summarize(trace, rs.plant));
  rep.summary["files"] = {"trace.csv", "summary.json"};
  rep.files["trace.csv"] = trace_csv(trace, rs.plant, nominal, open);

  if (cfg.dense_refine > 0) {
    std::vector<Vector> xs;
    std::vector<double> scales;
    std::vector<double> ones(static_cast<std::size_t>(rs.steps), 1.0);
    std::vector<double> open_scales;
    for (const TraceStep& row : trace.steps) {
      xs.push_back(row.x);
      if (row.k > 0) {
        scales.push_back(row.u_scale);
        open_scales.push_back(sys.profile().value(row.k - 1));
      }
    }
    rep.files["trace_dense.csv"] =
        dense_csv(dense_output(rs.plant, rs.tau, xs, scales, cfg.dense_refine),
                  dense_output(rs.plant, rs.tau, nominal, ones, cfg.dense_refine),
                  dense_output(rs.plant, rs.tau, open.x, open_scales, cfg.dense_refine));
    rep.summary["files"].push_back("trace_dense.csv");
  }
  return rep;
}

RunReport run_montecarlo(const ScenarioConfig& cfg, int trials) {
  if (trials < 1) throw ConfigError("run.trials", "must be >= 1");
  RunReport rep = base_report(cfg, "montecarlo");
  const ResolvedScenario rs = resolve(cfg);
  attach_resolution(rep, rs);

  const ClosedLoopSystem sys(rs.plant, rs.profile(cfg.levels), rs.tau);
  std::vector<TraceSummary> results(static_cast<std::size_t>(trials));
  std::vector<std::vector<char>> wrong(static_cast<std::size_t>(trials));
  parallel_for(trials, [&](int i) {
    const NoiseSpec noise{cfg.noise.sigma2, cfg.noise.seed + static_cast<std::uint64_t>(i)};
    const ClosedLoopTrace trace = sys.simulate(noise);
    results[static_cast<std::size_t>(i)] = summarize(trace, rs.plant);
    auto& flags = wrong[static_cast<std::size_t>(i)];
    for (const TraceStep& row : trace.steps) {
      if (row.k > 0) flags.push_back(row.detection_error() ? 1 : 0);
    }
  });

  std::vector<double> rate, rate_pre, rate_post, peak_post;
  std::string trials_csv = "trial,seed,errors,error_rate,error_rate_pre,error_rate_post,"
                           "peak_deviation_post\n";
  for (int i = 0; i < trials; ++i) {
    const TraceSummary& s = results[static_cast<std::size_t>(i)];
    rate.push_back(s.error_rate);
    rate_pre.push_back(s.error_rate_pre);
    rate_post.push_back(s.error_rate_post);
    peak_post.push_back(s.peak_deviation_post);
    trials_csv += fmt::format("{},{},{},{:.12g},{:.12g},{:.12g},{:.12g}\n", i,
                              cfg.noise.seed + static_cast<std::uint64_t>(i), s.errors,
                              s.error_rate, s.error_rate_pre, s.error_rate_post,
                              s.peak_deviation_post);
  }

  // Per-step error frequency; with a 3-sigma binomial band around it.
  std::string steps_csv = "k,t,z,errors,trials,frequency,band_lo,band_hi\n";
  for (int k = 1; k <= rs.steps; ++k) {
    long errors = 0;
    for (const auto& flags : wrong) errors += flags[static_cast<std::size_t>(k - 1)];
    const double p = static_cast<double>(errors) / trials;
    const double half = 3.0 * std::sqrt(p * (1.0 - p) / trials);
    steps_csv += fmt::format("{},{:.12g},{},{},{},{:.12g},{:.12g},{:.12g}\n", k, k * rs.tau,
                             to_string(sys.profile().level(k - 1)), errors, trials, p,
                             std::max(0.0, p - half), std::min(1.0, p + half));
  }

  rep.summary["montecarlo"] = {{"trials", trials},
                               {"first_seed", cfg.noise.seed},
                               {"error_rate", stats_json(rate)},
                               {"error_rate_pre", stats_json(rate_pre)},
                               {"error_rate_post", stats_json(rate_post)},
                               {"peak_deviation_post", stats_json(peak_post)}};
  rep.files["montecarlo_trials.csv"] = trials_csv;
  rep.files["montecarlo_steps.csv"] = steps_csv;
  rep.summary["files"] = {"montecarlo_trials.csv", "montecarlo_steps.csv", "summary.json"};
  return rep;
}

RunReport run_design(const ScenarioConfig& cfg) {
  RunReport rep = base_report(cfg, "design");
  const LtiPlant plant = cfg.plant();
  if (cfg.input.is_periodic()) {
    const PeriodicSweep sweep =
        edp_sweep_periodic(cfg.design, plant, cfg.sweep_grid, cfg.sweep_threshold);
    rep.summary["sweep"] = sweep_json(sweep);
    rep.files["sweep_periodic.csv"] = periodic_sweep_csv(sweep);
    rep.summary["files"] = {"sweep_periodic.csv", "summary.json"};
    return rep;
  }
  if (!cfg.input.is_constant()) {
    throw ConfigError("input.kind", "design needs a constant or sinusoidal input");
  }
  const DesignResult result = tau_opt_constant(cfg.design, plant);
  const CmProfile profile = profile_cm(plant, cfg.design.tau_grid);
  const FeasibilityCurve curve = sigma_feasibility_curve(cfg.design, plant, sigma2_grid(cfg));

  rep.summary["design"] = design_json(result);
  rep.summary["cm_all_negative"] = profile.all_negative;
  rep.summary["sigma2_boundary"] = optional_json(curve.boundary);
  rep.files["sweep_cm.csv"] = cm_sweep_csv(profile);
  rep.files["sweep_edp.csv"] = edp_sweep_csv(result);
  rep.files["sweep_sigma.csv"] = sigma_sweep_csv(curve);
  rep.summary["files"] = {"sweep_cm.csv", "sweep_edp.csv", "sweep_sigma.csv", "summary.json"};
  if (!result.feasible()) rep.exit_code = 3;
  return rep;
}

RunReport run_sweep(const ScenarioConfig& cfg) {
  RunReport rep = base_report(cfg, "sweep");
  const PeriodicSweep sweep =
      edp_sweep_periodic(cfg.design, cfg.plant(), cfg.sweep_grid, cfg.sweep_threshold);
  rep.summary["sweep"] = sweep_json(sweep);
  rep.files["sweep_periodic.csv"] = periodic_sweep_csv(sweep);
  rep.summary["files"] = {"sweep_periodic.csv", "summary.json"};
  return rep;
}

RunReport run_validate_dep(const ScenarioConfig& cfg, int trials) {
  if (trials < 10000) throw ConfigError("run.trials", "validate-dep needs at least 10^4 trials");
  RunReport rep = base_report(cfg, "validate-dep");
  const ResolvedScenario rs = resolve(cfg);
  attach_resolution(rep, rs);
  if (rs.plant.outputs() != 1) throw ConfigError("plant.c", "validate-dep needs a scalar output");

  const DisturbanceProfile profile = rs.profile(cfg.levels);
  const ClosedLoopSystem sys(rs.plant, profile, rs.tau);
  const DetectionAnalysis analysis(rs.plant, rs.tau, cfg.levels, rs.steps);
  const DetectorModel model = DetectorModel::from_plant(rs.plant, rs.tau, cfg.levels);
  const double sigma = cfg.noise.sigma();

  // Noise-free closed loop: every decision is right, so x_{k-1} and z_{k-2}
  // are the conditioning state for the decision made on r_k with D_{k-1} = 0.
  const ClosedLoopTrace clean = sys.simulate(NoiseSpec{0.0, cfg.noise.seed});

  std::vector<DepValidationRow> rows(static_cast<std::size_t>(rs.steps));
  parallel_for(rs.steps, [&](int i) {
    const int k = i + 1;
    const Level z = profile.level(k - 1);
    const Level cond = k >= 2 ? profile.level(k - 2) : Level::nominal;
    const Vector& m = sys.moments().at(k);
    const Vector& x_prev = clean.steps[static_cast<std::size_t>(k - 1)].x;
    const Vector y = rs.plant.c() * (model.phi * x_prev +
                                     (cfg.levels.value(z) / cfg.levels.value(cond)) * m);
    const DetectorState state{x_prev, cond, k};

    DepValidationRow& row = rows[static_cast<std::size_t>(i)];
    row.k = k;
    row.z = z;
    row.zeta_cond = cond;
    row.trials = trials;
    row.analytic = analysis.dep({k, Vector::Zero(rs.plant.states()), cond, z, sigma});
    Vector reading = y;
    for (int t = 0; t < trials; ++t) {
      const NormalStream stream(cfg.noise.seed, static_cast<std::uint64_t>(t));
      reading(0) = y(0) + sigma * stream(static_cast<std::uint64_t>(k));
      if (decide(state, reading, m, model).zhat != z) ++row.errors;
    }
  });

  int outside = 0;
  for (const auto& row : rows) outside += row.inside() ? 0 : 1;
  rep.summary["validate_dep"] = {{"trials", trials},
                                 {"steps", rs.steps},
                                 {"outside_band", outside},
                                 {"all_inside", outside == 0}};
  rep.files["dep_validation.csv"] = dep_validation_csv(rows);
  rep.summary["files"] = {"dep_validation.csv", "summary.json"};
  return rep;
}

RunReport run(const ScenarioConfig& cfg) {
  switch (cfg.mode) {
    case RunMode::trace: return run_trace(cfg);
    case RunMode::monte_carlo: return run_montecarlo(cfg, cfg.trials);
    case RunMode::design: return run_design(cfg);
    case RunMode::sweep: return run_sweep(cfg);
    case RunMode::validate_dep: return run_validate_dep(cfg, cfg.trials);
  }
  throw ConfigError("run.mode", "unhandled mode");
}

}  // namespace onestate
