#include "onestate/design.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

#include <fmt/format.h>

namespace onestate {

std::vector<double> TauGrid::points() const {
  if (!(lo > 0.0) || !(hi > lo) || resolution < 2) {
    throw DesignError(fmt::format("tau grid needs 0 < lo < hi and resolution >= 2, got [{}, {}] x {}",
                                  lo, hi, resolution));
  }
  std::vector<double> out(static_cast<std::size_t>(resolution));
  const double step = (hi - lo) / (resolution - 1);
  for (int i = 0; i < resolution; ++i) out[static_cast<std::size_t>(i)] = lo + i * step;
  out.back() = hi;
  return out;
}

int window_steps(double window, double tau) {
  return static_cast<int>(std::ceil(window / tau - 1e-9));
}

namespace {

void require_constant_scalar(const LtiPlant& plant) {
  if (!plant.input().is_constant()) {
    throw DesignError("this design path needs a constant input; use the periodic sweep instead");
  }
  if (plant.outputs() != 1) throw DesignError("design needs a scalar output");
}

void check_spec(const DesignSpec& spec) {
  if (!(spec.epsilon > 0.0) || !(spec.epsilon < 1.0)) {
    throw DesignError(fmt::format("epsilon must lie in (0, 1), got {}", spec.epsilon));
  }
  if (!(spec.window > 0.0)) throw DesignError("window W must be positive");
  if (!(spec.sigma2 > 0.0)) throw DesignError("design needs sigma^2 > 0");
}

/// log(erfc(-sqrt(SNR(zeta0))) / 2): log of the per-step success probability.
double log_step_success(double cm, double sigma2, const Levels& lv) {
  const double amp = std::abs((lv.zeta1 - lv.zeta0) / (2.0 * lv.zeta0) * cm);
  const double sqrt_snr = amp / std::sqrt(2.0 * sigma2);
  return log_one_minus_half_erfc(sqrt_snr);
}

struct Evaluated {
  double log_step;  // log per-step success
  int steps;
};

Evaluated evaluate(const LtiPlant& plant, double tau, const DesignSpec& spec) {
  return {log_step_success(cm_constant(plant, tau), spec.sigma2, spec.levels),
          window_steps(spec.window, tau)};
}

bool feasible(const Evaluated& e, double epsilon) {
  return e.steps * e.log_step > std::log1p(-epsilon);
}

double golden_section_min(const std::function<double(double)>& f, double lo, double hi, double tol) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo;
  double b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

double peak_up_to(const LtiPlant& plant, double tau) {
  constexpr int kSamples = 256;
  double peak = 0.0;
  for (int i = 1; i <= kSamples; ++i) {
    peak = std::max(peak, std::abs(cm_constant(plant, tau * i / kSamples)));
  }
  return peak;
}

DesignResult search(const DesignSpec& spec, const LtiPlant& plant, const CmProfile& profile,
                    bool with_sweep) {
  DesignResult result;
  result.tau0 = profile.tau0;

  if (with_sweep) {
    double running_peak = 0.0;
    for (std::size_t i = 0; i < profile.tau.size(); ++i) {
      const double tau = profile.tau[i];
      running_peak = std::max(running_peak, std::abs(profile.cm[i]));
      const double log_step = log_step_success(profile.cm[i], spec.sigma2, spec.levels);
      SweepRow row;
      row.tau = tau;
      row.steps = window_steps(spec.window, tau);
      const int floor_steps = static_cast<int>(std::floor(spec.window / tau + 1e-9));
      row.edp = std::exp(row.steps * log_step);
      row.edp_floor = std::exp(floor_steps * log_step);
      row.edp_real = std::exp(spec.window / tau * log_step);
      row.peak = tau > profile.tau0 ? std::max(running_peak, std::abs(profile.cm_tau0)) : running_peak;
      row.feasible = tau <= profile.tau0 && feasible({log_step, row.steps}, spec.epsilon);
      result.sweep.push_back(row);
    }
  }

  const auto grid = TauGrid{spec.tau_grid.lo, profile.tau0, spec.tau_grid.resolution}.points();
  std::optional<std::size_t> first;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (feasible(evaluate(plant, grid[i], spec), spec.epsilon)) {
      first = i;
      break;
    }
  }
  if (!first) return result;

  double hi = grid[*first];
  if (*first > 0) {
    double lo = grid[*first - 1];
    while (hi - lo > 1e-7) {
      const double mid = 0.5 * (lo + hi);
      if (feasible(evaluate(plant, mid, spec), spec.epsilon)) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
  }
  const Evaluated at = evaluate(plant, hi, spec);
  result.tau_opt = hi;
  result.edp_at_opt = std::exp(at.steps * at.log_step);
  result.peak = peak_up_to(plant, hi);
  return result;
}

}  // namespace

double cm_constant(const LtiPlant& plant, double tau) {
  return (plant.c() * input_moment(plant.a(), plant.b(), plant.input(), tau, 1))(0);
}

Probability edp_constant(const LtiPlant& plant, double tau, int n, double sigma2, Levels levels) {
  require_constant_scalar(plant);
  const double log_step = log_step_success(cm_constant(plant, tau), sigma2, levels);
  const double step = std::exp(log_step);
  return {std::pow(step, n), n * log_step};
}

CmProfile profile_cm(const LtiPlant& plant, const TauGrid& grid) {
  require_constant_scalar(plant);
  CmProfile out;
  out.tau = grid.points();
  out.cm.reserve(out.tau.size());
  for (double tau : out.tau) out.cm.push_back(cm_constant(plant, tau));
  out.all_negative = std::all_of(out.cm.begin(), out.cm.end(), [](double v) { return v < 0.0; });

  const auto best = static_cast<std::size_t>(
      std::min_element(out.cm.begin(), out.cm.end()) - out.cm.begin());
  const double lo = out.tau[best == 0 ? 0 : best - 1];
  const double hi = out.tau[std::min(best + 1, out.tau.size() - 1)];
  out.tau0 = golden_section_min([&](double t) { return cm_constant(plant, t); }, lo, hi, 1e-6);
  out.cm_tau0 = cm_constant(plant, out.tau0);
  if (out.cm[best] < out.cm_tau0) {
    out.tau0 = out.tau[best];
    out.cm_tau0 = out.cm[best];
  }
  return out;
}

DesignResult tau_opt_constant(const DesignSpec& spec, const LtiPlant& plant) {
  check_spec(spec);
  require_constant_scalar(plant);
  const CmProfile profile = profile_cm(plant, spec.tau_grid);
  if (!(spec.tau_grid.lo < profile.tau0)) {
    throw DesignError(fmt::format("grid lower end {} is not below tau0 = {}", spec.tau_grid.lo,
                                  profile.tau0));
  }
  return search(spec, plant, profile, true);
}

FeasibilityCurve sigma_feasibility_curve(const DesignSpec& spec, const LtiPlant& plant,
                                         const std::vector<double>& sigma2_grid) {
  check_spec(spec);
  require_constant_scalar(plant);
  const CmProfile profile = profile_cm(plant, spec.tau_grid);

  FeasibilityCurve curve;
  for (double s2 : sigma2_grid) {
    DesignSpec at = spec;
    at.sigma2 = s2;
    check_spec(at);
    curve.points.push_back({s2, search(at, plant, profile, false).tau_opt});
  }

  // EDP at tau0 decreases in sigma^2; bisect between the last feasible and
  // the first infeasible grid points.
  auto margin = [&](double s2) {
    DesignSpec at = spec;
    at.sigma2 = s2;
    const Evaluated e = evaluate(plant, profile.tau0, at);
    return e.steps * e.log_step - std::log1p(-spec.epsilon);
  };
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    if (a.tau_opt && !b.tau_opt) {
      double lo = a.sigma2;
      double hi = b.sigma2;
      while (hi - lo > 1e-9 * hi) {
        const double mid = 0.5 * (lo + hi);
        (margin(mid) > 0.0 ? lo : hi) = mid;
      }
      curve.boundary = 0.5 * (lo + hi);
      break;
    }
  }
  return curve;
}

PeriodicSweep edp_sweep_periodic(const DesignSpec& spec, const LtiPlant& plant,
                                 const TauGrid& grid, double threshold) {
  if (!(spec.window > 0.0)) throw DesignError("window W must be positive");
  if (!(spec.sigma2 > 0.0)) throw DesignError("sweep needs sigma^2 > 0");
  if (plant.outputs() != 1) throw DesignError("sweep needs a scalar output");
  const double sigma = std::sqrt(spec.sigma2);

  PeriodicSweep out;
  double best = -std::numeric_limits<double>::infinity();
  for (double tau : grid.points()) {
    const int n = window_steps(spec.window, tau);
    const DetectionAnalysis analysis(plant, tau, spec.levels, n);
    PeriodicSweepRow row;
    row.tau = tau;
    row.steps = n;
    row.edp = analysis.edp_n({1, n, Vector::Zero(plant.states()), Level::nominal,
                              Level::nominal, sigma});
    for (int k = 1; k <= n; ++k) row.peak = std::max(row.peak, std::abs(analysis.cm(k)));
    row.suitable = row.edp.value > threshold;
    if (row.edp.log_value > best) {
      best = row.edp.log_value;
      out.argmax = tau;
    }
    if (row.suitable) out.suitable.push_back(tau);
    out.rows.push_back(row);
  }
  return out;
}

}  // namespace onestate
