#pragma once

#include <optional>
#include <vector>

#include "onestate/analysis.hpp"

namespace onestate {

class DesignError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// `resolution` evenly spaced points on [lo, hi], both ends included.
struct TauGrid {
  double lo = 0.005;
  double hi = 2.0;
  int resolution = 2000;

  std::vector<double> points() const;
};

struct DesignSpec {
  double epsilon = 1e-3;
  double window = 20.0;
  double sigma2 = 2.0;
  Levels levels;
  /// Range scanned for C M_tau; must extend past its minimiser. The feasible
  /// search then runs over [lo, tau0] with the same resolution.
  TauGrid tau_grid;
};

/// Number of steps covering the window W: ceil(W / tau).
int window_steps(double window, double tau);

struct CmProfile {
  std::vector<double> tau;
  std::vector<double> cm;
  double tau0 = 0.0;     ///< global minimiser of C M_tau
  double cm_tau0 = 0.0;
  bool all_negative = false;
};

/// Samples C M_tau on the grid (constant input only) and refines the grid
/// minimiser by golden-section search.
CmProfile profile_cm(const LtiPlant& plant, const TauGrid& grid);

/// C M_tau for a constant-input scalar plant.
double cm_constant(const LtiPlant& plant, double tau);

/// EDP^n for constant input: [erfc(-sqrt(SNR(zeta0))) / 2]^n.
Probability edp_constant(const LtiPlant& plant, double tau, int n, double sigma2, Levels levels);

struct SweepRow {
  double tau = 0.0;
  int steps = 0;            ///< ceil(W / tau)
  double edp = 0.0;         ///< EDP^{ceil(W/tau)}
  double edp_floor = 0.0;   ///< EDP^{floor(W/tau)}
  double edp_real = 0.0;    ///< EDP^{W/tau}, real exponent
  double peak = 0.0;        ///< max_{t in (0, tau]} |C M_t|
  bool feasible = false;    ///< tau <= tau0 and edp > 1 - epsilon
};

struct DesignResult {
  std::optional<double> tau_opt;
  double tau0 = 0.0;
  double peak = 0.0;
  double edp_at_opt = 0.0;
  std::vector<SweepRow> sweep;

  bool feasible() const { return tau_opt.has_value(); }
};

/// Smallest tau in (0, tau0] with EDP^{ceil(W/tau)} > 1 - epsilon. EDP is
/// monotone on that interval, so the grid brackets the threshold and
/// bisection refines it. Infeasibility is reported through an empty tau_opt.
DesignResult tau_opt_constant(const DesignSpec& spec, const LtiPlant& plant);

struct FeasibilityPoint {
  double sigma2 = 0.0;
  std::optional<double> tau_opt;
};

struct FeasibilityCurve {
  std::vector<FeasibilityPoint> points;
  /// sigma^2 at which EDP at tau0 equals 1 - epsilon, when bracketed.
  std::optional<double> boundary;
};

FeasibilityCurve sigma_feasibility_curve(const DesignSpec& spec, const LtiPlant& plant,
                                         const std::vector<double>& sigma2_grid);

struct PeriodicSweepRow {
  double tau = 0.0;
  int steps = 0;
  Probability edp;
  double peak = 0.0;  ///< max_k |C M_{tau,k}| over the window
  bool suitable = false;
};

struct PeriodicSweep {
  std::vector<PeriodicSweepRow> rows;
  double argmax = 0.0;
  std::vector<double> suitable;
};

/// EDP^{ceil(W/tau)}(1, 0, zeta0, zeta0) with time-varying M_{tau,k}.
PeriodicSweep edp_sweep_periodic(const DesignSpec& spec, const LtiPlant& plant,
                                 const TauGrid& grid, double threshold);

}  // namespace onestate
