#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "onestate/design.hpp"
#include "onestate/plant.hpp"

namespace onestate {

/// Invalid or inconsistent scenario configuration. `field` names the
/// offending key as "section.key".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field.empty() ? message : field + ": " + message),
        field(std::move(field)) {}
  std::string field;
};

enum class RunMode { trace, monte_carlo, design, sweep, validate_dep };

RunMode parse_run_mode(const std::string& name);
const char* to_string(RunMode mode);

/// How T and T_F map onto the sampling grid.
enum class GridAlign {
  strict,  ///< both must be whole multiples of tau (to 1e-9)
  snap,    ///< K = ceil(T / tau), k_F = ceil(T_F / tau)
};

struct ScenarioConfig {
  std::string plant_model = "flight-f4e";
  std::optional<Matrix> a, b, c;  ///< explicit plant, when plant_model == "explicit"
  InputSignal input = InputSignal::constant(1.0);
  Levels levels;
  std::optional<double> t_fault = 20.0;
  NoiseSpec noise{2.0, 1};
  double t_end = 40.0;
  std::optional<double> tau = 0.112;  ///< empty means auto-design
  GridAlign align = GridAlign::strict;

  DesignSpec design;
  double sigma2_lo = 1.0;
  double sigma2_hi = 50.0;
  int sigma2_points = 50;

  TauGrid sweep_grid{0.005, 1.0, 200};
  double sweep_threshold = 0.8;

  RunMode mode = RunMode::trace;
  int trials = 100;
  int dense_refine = 0;

  LtiPlant plant() const;
  nlohmann::json to_json() const;
};

/// Parses the INI-style scenario format. Unknown sections or keys are errors.
ScenarioConfig parse_config(std::istream& in);
ScenarioConfig parse_config_string(const std::string& text);
ScenarioConfig load_config(const std::string& path);

/// Sampling grid after tau has been chosen and T, T_F placed on it.
struct ResolvedScenario {
  LtiPlant plant;
  double tau = 0.0;
  int steps = 0;
  std::optional<int> k_fault;
  double t_end = 0.0;                ///< K tau
  std::optional<double> t_fault;     ///< k_F tau
  std::optional<DesignResult> design;  ///< set when tau came from auto-design
  std::optional<PeriodicSweep> sweep;

  DisturbanceProfile profile(const Levels& levels) const { return {levels, k_fault, steps}; }
};

/// Resolves tau (running the design search for "auto-design") and the grid.
/// Throws ConfigError on grid misalignment; an infeasible auto-design raises
/// InfeasibleDesign.
ResolvedScenario resolve(const ScenarioConfig& cfg);

class InfeasibleDesign : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-run statistics.
struct TraceSummary {
  int steps = 0;
  int errors = 0;
  int errors_pre = 0;
  int errors_post = 0;
  double error_rate = 0.0;
  double error_rate_pre = 0.0;   ///< over decisions on z_0..z_{k_F-1}
  double error_rate_post = 0.0;  ///< over decisions on z_{k_F}..z_{K-1}
  double peak_deviation_post = 0.0;  ///< max_{k > k_F} |C E_k|
  double peak_deviation_pre = 0.0;   ///< max_{k <= k_F} |C E_k|
  std::optional<double> e_decay_time;  ///< first t >= T_F after which |E| stays <= 1e-3 of its post-failure max
};

TraceSummary summarize(const ClosedLoopTrace& trace, const LtiPlant& plant);

/// Output of one CLI run: a JSON summary plus named artifact files.
struct RunReport {
  nlohmann::json summary;
  std::map<std::string, std::string> files;
  int exit_code = 0;
};

RunReport run_trace(const ScenarioConfig& cfg);
RunReport run_montecarlo(const ScenarioConfig& cfg, int trials);
RunReport run_design(const ScenarioConfig& cfg);
RunReport run_sweep(const ScenarioConfig& cfg);
RunReport run_validate_dep(const ScenarioConfig& cfg, int trials);
RunReport run(const ScenarioConfig& cfg);

/// Calls fn(i) for i in [0, n) on a worker pool. fn must only write to
/// state owned by index i.
void parallel_for(int n, const std::function<void(int)>& fn);

// CSV writers; column order is part of the output contract.
std::string trace_csv(const ClosedLoopTrace& trace, const LtiPlant& plant,
                      const std::vector<Vector>& nominal, const OpenLoopTrace& uncompensated);
std::string dense_csv(const DenseOutput& compensated, const DenseOutput& nominal,
                      const DenseOutput& uncompensated);
std::string cm_sweep_csv(const CmProfile& profile);
std::string edp_sweep_csv(const DesignResult& result);
std::string sigma_sweep_csv(const FeasibilityCurve& curve);
std::string periodic_sweep_csv(const PeriodicSweep& sweep);

struct DepValidationRow {
  int k = 0;
  Level z = Level::nominal;
  Level zeta_cond = Level::nominal;
  double analytic = 0.0;
  long errors = 0;
  long trials = 0;

  double empirical() const { return trials ? static_cast<double>(errors) / trials : 0.0; }
  /// Acceptance band for the empirical frequency: the binomial(trials,
  /// analytic) quantiles at the two-sided 3-sigma level (alpha = 0.0027),
  /// rounded outwards. Close to analytic +- 3 sd when trials * analytic is
  /// large, and still calibrated when it is not.
  double band_lo() const;
  double band_hi() const;
  bool inside() const;
};
std::string dep_validation_csv(const std::vector<DepValidationRow>& rows);

/// [lo, hi] error counts accepted for `trials` draws at probability p: the
/// binomial quantiles at the two-sided 3-sigma level, rounded outwards.
std::pair<long, long> binomial_band(long trials, double p);

constexpr int kSchemaVersion = 1;

}  // namespace onestate
