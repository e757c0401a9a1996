#include <algorithm>
#include <cmath>

#include <boost/math/distributions/binomial.hpp>
#include <fmt/format.h>

#include "onestate/scenario.hpp"

namespace onestate {

namespace {

constexpr double kThreeSigmaAlpha = 0.0026997960632601866;  // 2 * Phi(-3)

std::string num(double v) { return fmt::format("{:.12g}", v); }

std::string columns(const char* name, Eigen::Index count) {
  if (count == 1) return name;
  std::string out;
  for (Eigen::Index i = 1; i <= count; ++i) {
    if (i > 1) out += ',';
    out += fmt::format("{}{}", name, i);
  }
  return out;
}

std::string values(const Vector& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i > 0) out += ',';
    out += num(v(i));
  }
  return out;
}

}  // namespace

std::pair<long, long> binomial_band(long trials, double p) {
  if (trials <= 0) return {0, 0};
  if (p <= 0.0) return {0, 0};
  if (p >= 1.0) return {trials, trials};
  const boost::math::binomial_distribution<double> dist(static_cast<double>(trials), p);
  const double lo = boost::math::quantile(dist, kThreeSigmaAlpha / 2.0);
  const double hi = boost::math::quantile(boost::math::complement(dist, kThreeSigmaAlpha / 2.0));
  return {static_cast<long>(std::floor(lo)), static_cast<long>(std::ceil(hi))};
}

std::string trace_csv(const ClosedLoopTrace& trace, const LtiPlant& plant,
                      const std::vector<Vector>& nominal, const OpenLoopTrace& uncompensated) {
  const Eigen::Index m = plant.outputs();
  std::string out = fmt::format("k,t,{},{},zhat,z,e_norm,d_norm,{},{}\n", columns("y", m),
                                columns("r", m), columns("y_nominal", m),
                                columns("y_uncompensated", m));
  for (const TraceStep& row : trace.steps) {
    const auto k = static_cast<std::size_t>(row.k);
    out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", row.k, num(row.t), values(row.y),
                       values(row.r), to_string(row.zhat), to_string(row.z), num(row.e.norm()),
                       num(row.d.norm()), values(plant.c() * nominal[k]),
                       values(uncompensated.y[k]));
  }
  return out;
}

std::string dense_csv(const DenseOutput& compensated, const DenseOutput& nominal,
                      const DenseOutput& uncompensated) {
  const Eigen::Index m = compensated.y.empty() ? 1 : compensated.y.front().size();
  std::string out = fmt::format("t,{},{},{}\n", columns("y", m), columns("y_nominal", m),
                                columns("y_uncompensated", m));
  for (std::size_t i = 0; i < compensated.t.size(); ++i) {
    out += fmt::format("{},{},{},{}\n", num(compensated.t[i]), values(compensated.y[i]),
                       values(nominal.y[i]), values(uncompensated.y[i]));
  }
  return out;
}

std::string cm_sweep_csv(const CmProfile& profile) {
  std::string out = "tau,cm,is_tau0\n";
  for (std::size_t i = 0; i < profile.tau.size(); ++i) {
    out += fmt::format("{},{},0\n", num(profile.tau[i]), num(profile.cm[i]));
  }
  out += fmt::format("{},{},1\n", num(profile.tau0), num(profile.cm_tau0));
  return out;
}

std::string edp_sweep_csv(const DesignResult& result) {
  std::string out = "tau,steps,edp,edp_floor,edp_real,peak,feasible\n";
  for (const SweepRow& r : result.sweep) {
    out += fmt::format("{},{},{},{},{},{},{}\n", num(r.tau), r.steps, num(r.edp),
                       num(r.edp_floor), num(r.edp_real), num(r.peak), r.feasible ? 1 : 0);
  }
  return out;
}

std::string sigma_sweep_csv(const FeasibilityCurve& curve) {
  std::string out = "sigma2,tau_opt,feasible\n";
  for (const FeasibilityPoint& p : curve.points) {
    out += fmt::format("{},{},{}\n", num(p.sigma2), p.tau_opt ? num(*p.tau_opt) : "",
                       p.tau_opt ? 1 : 0);
  }
  return out;
}

std::string periodic_sweep_csv(const PeriodicSweep& sweep) {
  std::string out = "tau,steps,edp,log_edp,peak,suitable,argmax\n";
  for (const PeriodicSweepRow& r : sweep.rows) {
    out += fmt::format("{},{},{},{},{},{},{}\n", num(r.tau), r.steps, num(r.edp.value),
                       num(r.edp.log_value), num(r.peak), r.suitable ? 1 : 0,
                       r.tau == sweep.argmax ? 1 : 0);
  }
  return out;
}

double DepValidationRow::band_lo() const {
  return static_cast<double>(binomial_band(trials, analytic).first) / static_cast<double>(trials);
}

double DepValidationRow::band_hi() const {
  return static_cast<double>(binomial_band(trials, analytic).second) / static_cast<double>(trials);
}

bool DepValidationRow::inside() const {
  const auto [lo, hi] = binomial_band(trials, analytic);
  return errors >= lo && errors <= hi;
}

std::string dep_validation_csv(const std::vector<DepValidationRow>& rows) {
  std::string out = "k,z,zeta_cond,analytic,errors,trials,empirical,band_lo,band_hi,inside\n";
  for (const DepValidationRow& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", r.k, to_string(r.z),
                       to_string(r.zeta_cond), num(r.analytic), r.errors, r.trials,
                       num(r.empirical()), num(r.band_lo()), num(r.band_hi()),
                       r.inside() ? 1 : 0);
  }
  return out;
}

}  // namespace onestate
