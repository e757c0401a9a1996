// Acceptance suite: one line per criterion, non-zero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "onestate/analysis.hpp"
#include "onestate/design.hpp"
#include "onestate/detector.hpp"
#include "onestate/noise.hpp"
#include "onestate/scenario.hpp"
#include "error_identity.hpp"

using namespace onestate;

namespace {

// Pinned tolerances and budgets.
constexpr double kTauOpt = 0.112;
constexpr double kTauOptTol = 0.002;
constexpr double kTau0 = 0.55;
constexpr double kTau0Tol = 0.01;
constexpr double kBoundary = 34.72;
constexpr double kBoundaryTol = 0.5;
constexpr double kIdentityTol = 1e-9;
constexpr double kZeroNoiseTol = 1e-9;
constexpr double kEdpTol = 1e-12;
constexpr long kDepDraws = 100000;
constexpr int kDepCellsRequired = 24;
constexpr int kIdentityRuns = 1000;
constexpr int kPeakPairs = 100;
constexpr int kPeakRequired = 95;
constexpr int kSinSeeds = 200;

const Levels kLevels{1.0, 0.5};
const std::vector<double> kGridTau{0.05, 0.175, 0.3, 0.425, 0.55};
const std::vector<double> kGridSigma2{0.5, 1.0, 2.0, 4.0, 8.0};

DesignSpec flight_spec() {
  DesignSpec s;
  s.epsilon = 1e-3;
  s.window = 20.0;
  s.sigma2 = 2.0;
  s.levels = kLevels;
  s.tau_grid = {0.005, 2.0, 2000};
  return s;
}

int snap(double t, double tau) { return static_cast<int>(std::ceil(t / tau - 1e-9)); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* title;
  double budget_s;  // 0 means no runtime bound
  std::function<Outcome()> run;
};

Outcome c1_tau_opt() {
  const DesignResult r = tau_opt_constant(flight_spec(), LtiPlant::flight_f4e());
  if (!r.feasible()) return {false, "design reported infeasible"};
  const double t = *r.tau_opt;
  return {std::abs(t - kTauOpt) <= kTauOptTol,
          fmt::format("tau_opt = {:.6f} (target {} +- {}), EDP = {:.6f}", t, kTauOpt, kTauOptTol,
                      r.edp_at_opt)};
}

Outcome c2_tau0() {
  const CmProfile p = profile_cm(LtiPlant::flight_f4e(), flight_spec().tau_grid);
  double worst = -1e300;
  for (double v : p.cm) worst = std::max(worst, v);
  const bool ok = std::abs(p.tau0 - kTau0) <= kTau0Tol && p.all_negative;
  return {ok, fmt::format("tau0 = {:.6f} (target {} +- {}), C M_tau0 = {:.4f}, max over grid = {:.3e}",
                          p.tau0, kTau0, kTau0Tol, p.cm_tau0, worst)};
}

Outcome c3_boundary() {
  std::vector<double> grid;
  for (int i = 0; i < 50; ++i) grid.push_back(1.0 + i * (49.0 / 49.0));
  const FeasibilityCurve c = sigma_feasibility_curve(flight_spec(), LtiPlant::flight_f4e(), grid);
  if (!c.boundary) return {false, "no feasibility boundary on [1, 50]"};
  bool consistent = true;
  for (const FeasibilityPoint& p : c.points) {
    consistent = consistent && (p.tau_opt.has_value() == (p.sigma2 < *c.boundary));
  }
  const bool ok = consistent && std::abs(*c.boundary - kBoundary) <= kBoundaryTol;
  return {ok, fmt::format("boundary sigma^2 = {:.4f} (target {} +- {}), grid consistent: {}",
                          *c.boundary, kBoundary, kBoundaryTol, consistent)};
}

Outcome c4_dep_oracle() {
  const LtiPlant p = LtiPlant::flight_f4e();
  int inside = 0;
  int cell = 0;
  std::string misses;
  for (double tau : kGridTau) {
    const DetectionAnalysis an(p, tau, kLevels, 1);
    const DetectorModel model = DetectorModel::from_plant(p, tau, kLevels);
    const MomentTable table(p.a(), p.b(), p.input(), tau, 1);
    const Vector& m = table.at(1);
    for (double s2 : kGridSigma2) {
      const double sigma = std::sqrt(s2);
      // alternate the true level so both error branches are exercised
      const Level z = cell % 2 ? Level::faulty : Level::nominal;
      const double dep = an.dep({1, Vector::Zero(3), Level::nominal, z, sigma});
      const double y = (p.c() * (kLevels.value(z) * m))(0);
      const DetectorState st = DetectorState::initial(3);
      const NormalStream noise(20240 + static_cast<std::uint64_t>(cell));
      Vector reading(1);
      long errors = 0;
      for (long i = 0; i < kDepDraws; ++i) {
        reading(0) = y + sigma * noise(static_cast<std::uint64_t>(i));
        errors += decide(st, reading, m, model).zhat != z;
      }
      const DepValidationRow row{1, z, Level::nominal, dep, errors, kDepDraws};
      if (row.inside()) {
        ++inside;
      } else {
        misses += fmt::format(" [tau={} s2={}: {:.3e} vs {:.3e}]", tau, s2, row.empirical(), dep);
      }
      ++cell;
    }
  }
  return {inside >= kDepCellsRequired,
          fmt::format("{}/25 cells inside the 3-sigma binomial band (need {}){}", inside,
                      kDepCellsRequired, misses)};
}

Outcome c5_error_identity() {
  const std::vector<double> taus{0.05, 0.112, 0.2, 0.3, 0.4};
  const std::vector<double> sigma2s{0.5, 2.0, 8.0, 20.0};
  std::vector<error_identity::Result> results(kIdentityRuns);
  std::vector<std::string> failures(kIdentityRuns);
  parallel_for(kIdentityRuns, [&](int i) {
    const double tau = taus[static_cast<std::size_t>(i) % taus.size()];
    const double s2 = sigma2s[(static_cast<std::size_t>(i) / taus.size()) % sigma2s.size()];
    const InputSignal f = (i / 20) % 2 ? InputSignal::sinusoid(1.0, 1.0) : InputSignal::constant(1.0);
    const LtiPlant p = LtiPlant::flight_f4e(f);
    const ClosedLoopSystem sys(p, {kLevels, snap(20.0, tau), snap(40.0, tau)}, tau);
    try {
      results[static_cast<std::size_t>(i)] = error_identity::check(
          sys.moments().step_matrix(), sys.simulate({s2, static_cast<std::uint64_t>(i)}), kIdentityTol);
    } catch (const DivergenceError& e) {
      failures[static_cast<std::size_t>(i)] = e.what();
    }
  });
  error_identity::Result total;
  int diverged = 0;
  for (int i = 0; i < kIdentityRuns; ++i) {
    const auto& r = results[static_cast<std::size_t>(i)];
    total.clean_windows += r.clean_windows;
    total.clean_failures += r.clean_failures;
    total.error_windows += r.error_windows;
    total.error_misses += r.error_misses;
    diverged += !failures[static_cast<std::size_t>(i)].empty();
  }
  const bool ok = diverged == 0 && total.clean_failures == 0 && total.error_misses == 0 &&
                  total.clean_windows > 0 && total.error_windows > 0;
  return {ok, fmt::format("{} all-correct windows ({} broke the identity), {} windows with a wrong "
                          "decision ({} kept it), {} diverged runs",
                          total.clean_windows, total.clean_failures, total.error_windows,
                          total.error_misses, diverged)};
}

Outcome c6_zero_noise() {
  double worst = 0.0;
  int errors = 0;
  int runs = 0;
  for (const InputSignal& f : {InputSignal::constant(1.0), InputSignal::sinusoid(1.0, 1.0)}) {
    const LtiPlant p = LtiPlant::flight_f4e(f);
    for (double tau : {0.01, 0.05, 0.112, 0.3, 0.4, 0.55}) {
      const int total = snap(40.0, tau);
      const int kf = snap(20.0, tau);
      const ClosedLoopSystem sys(p, {kLevels, kf, total}, tau);
      const ClosedLoopTrace t = sys.simulate({0.0, 0});
      const Matrix& phi = sys.moments().step_matrix();
      errors += t.detection_errors();
      for (int k = 0; k <= kf; ++k) worst = std::max(worst, t.steps[static_cast<std::size_t>(k)].e.norm());
      const Vector jump =
          (kLevels.zeta1 / kLevels.zeta0 - 1.0) * sys.moments().at(kf + 1);
      worst = std::max(worst, (t.steps[static_cast<std::size_t>(kf) + 1].e - jump).norm());
      for (int k = kf + 2; k <= total; ++k) {
        const Vector expect = phi * t.steps[static_cast<std::size_t>(k) - 1].e;
        worst = std::max(worst, (t.steps[static_cast<std::size_t>(k)].e - expect).norm());
      }
      // geometric decay: the tail is far below the switch deviation
      const double first = t.steps[static_cast<std::size_t>(kf) + 1].e.norm();
      const double last = t.steps[static_cast<std::size_t>(total)].e.norm();
      if (!(last < first)) ++errors;
      ++runs;
    }
  }
  return {errors == 0 && worst <= kZeroNoiseTol,
          fmt::format("{} runs, {} detection errors, max deviation from the exact recursion {:.3e}",
                      runs, errors, worst)};
}

double post_peak(const ClosedLoopTrace& t, const LtiPlant& p) {
  double peak = 0.0;
  for (const TraceStep& s : t.steps) {
    if (s.k > *t.k_fault) peak = std::max(peak, (p.c() * s.e).norm());
  }
  return peak;
}

Outcome c7_peak_ordering() {
  const LtiPlant p = LtiPlant::flight_f4e();
  const ClosedLoopSystem slow(p, {kLevels, snap(20.0, 0.4), snap(40.0, 0.4)}, 0.4);
  const ClosedLoopSystem fast(p, {kLevels, snap(20.0, 0.112), snap(40.0, 0.112)}, 0.112);
  std::vector<char> larger(kPeakPairs, 0);
  parallel_for(kPeakPairs, [&](int i) {
    const NoiseSpec noise{2.0, static_cast<std::uint64_t>(i)};
    larger[static_cast<std::size_t>(i)] =
        post_peak(slow.simulate(noise), p) > post_peak(fast.simulate(noise), p);
  });
  int count = 0;
  for (char c : larger) count += c;
  return {count >= kPeakRequired,
          fmt::format("tau = 0.4 peak larger in {}/{} seed pairs (need {})", count, kPeakPairs,
                      kPeakRequired)};
}

double mean_error_rate(double tau) {
  const LtiPlant p = LtiPlant::flight_f4e(InputSignal::sinusoid(1.0, 1.0));
  const ClosedLoopSystem sys(p, {kLevels, snap(20.0, tau), snap(40.0, tau)}, tau);
  std::vector<double> rate(kSinSeeds, 0.0);
  parallel_for(kSinSeeds, [&](int i) {
    const ClosedLoopTrace t = sys.simulate({2.0, static_cast<std::uint64_t>(i)});
    rate[static_cast<std::size_t>(i)] =
        static_cast<double>(t.detection_errors()) / t.total_steps();
  });
  double sum = 0.0;
  for (double r : rate) sum += r;
  return sum / kSinSeeds;
}

Outcome c8_sinusoid_rates() {
  const double at_03 = mean_error_rate(0.3);
  const double at_001 = mean_error_rate(0.01);
  const bool ok = at_03 >= 0.02 && at_03 <= 0.06 && at_001 >= 0.05 && at_001 <= 0.13;
  return {ok, fmt::format("mean error rate {:.2f}% at tau = 0.3 (target [2, 6]), {:.2f}% at "
                          "tau = 0.01 (target [5, 13]) over {} seeds",
                          100.0 * at_03, 100.0 * at_001, kSinSeeds)};
}

Outcome c9_fault_ordering() {
  const LtiPlant p = LtiPlant::flight_f4e();
  int holds = 0;
  int total = 0;
  for (double tau : kGridTau) {
    const DetectionAnalysis an(p, tau, kLevels, 1);
    for (double s2 : kGridSigma2) {
      const double sigma = std::sqrt(s2);
      for (Level z : {Level::nominal, Level::faulty}) {
        const Probability after_fault = an.dep_probability({1, Vector::Zero(3), Level::faulty, z, sigma});
        const Probability nominal = an.dep_probability({1, Vector::Zero(3), Level::nominal, z, sigma});
        holds += after_fault.log_value < nominal.log_value;
        ++total;
      }
    }
  }
  return {holds == total, fmt::format("strict ordering holds in {}/{} cases", holds, total)};
}

Outcome c10_self_consistency() {
  const LtiPlant p = LtiPlant::flight_f4e();
  double worst_product = 0.0;
  double worst_tv = 0.0;
  double worst_log = 0.0;
  for (double tau : kGridTau) {
    for (double s2 : kGridSigma2) {
      const double sigma = std::sqrt(s2);
      const int nmax = 5000;
      const DetectionAnalysis an(p, tau, kLevels, nmax);
      const DetectionAnalysis forced(p, tau, kLevels, nmax, {MomentMethod::quadrature, 1e-12, 1e12});
      const LtiPlant sampled = p.with_input(InputSignal(SampledInput{{1.0, 1.0}, 1.0}));
      const DetectionAnalysis tv(sampled, tau, kLevels, 200);
      const double step = 0.5 * std::erfc(-an.snr(Level::nominal, 1, sigma).sqrt_value);
      const double log_step = std::log(step);
      for (int n : {1, 10, 179, 1000, 1001, 5000}) {
        const EdpQuery q{1, n, Vector::Zero(3), Level::nominal, Level::nominal, sigma};
        const double closed_log = n * log_step;
        const Probability prod = an.edp_n(q);
        const Probability quad = forced.edp_n(q);
        const double closed = std::exp(closed_log);
        worst_product = std::max({worst_product, std::abs(prod.value - closed),
                                  std::abs(quad.value - closed)});
        worst_log = std::max({worst_log, std::abs(prod.log_value - closed_log),
                              std::abs(quad.log_value - closed_log)});
        if (n <= 200) worst_tv = std::max(worst_tv, std::abs(tv.edp_n(q).value - closed));
      }
    }
  }
  const bool ok = worst_product <= kEdpTol && worst_tv <= kEdpTol;
  return {ok, fmt::format("max |EDP - step^n|: {:.2e} closed-form and quadrature moments, {:.2e} "
                          "through the sampled-input path (tolerance {:.0e}); max log gap {:.2e}",
                          worst_product, worst_tv, kEdpTol, worst_log)};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "tau_opt reproduction", 10.0, c1_tau_opt},
      {2, "tau0 reproduction", 5.0, c2_tau0},
      {3, "feasibility boundary", 60.0, c3_boundary},
      {4, "DEP oracle equivalence", 120.0, c4_dep_oracle},
      {5, "error propagation identity", 60.0, c5_error_identity},
      {6, "zero-noise exactness", 0.0, c6_zero_noise},
      {7, "peak ordering", 0.0, c7_peak_ordering},
      {8, "sinusoidal regime statistics", 0.0, c8_sinusoid_rates},
      {9, "post-failure DEP ordering", 0.0, c9_fault_ordering},
      {10, "analytic self-consistency", 0.0, c10_self_consistency},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string timing = fmt::format("{:.2f}s", secs);
    if (c.budget_s > 0.0) {
      timing += fmt::format(" of {:.0f}s", c.budget_s);
      if (secs > c.budget_s) {
        o.pass = false;
        o.detail += "; over the time budget";
      }
    }
    std::printf("criterion %2d: %s  %s: %s (%s)\n", c.id, o.pass ? "PASS" : "FAIL", c.title,
                o.detail.c_str(), timing.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
