#include "onestate/plant.hpp"

#include <cmath>

#include <fmt/format.h>

#include "onestate/detector.hpp"
#include "onestate/noise.hpp"

namespace onestate {

const char* to_string(Level l) { return l == Level::nominal ? "nominal" : "faulty"; }

// ---------------------------------------------------------------------------
// LtiPlant
// ---------------------------------------------------------------------------

LtiPlant::LtiPlant(Matrix a, Matrix b, Matrix c, InputSignal f)
    : a_(std::move(a)), b_(std::move(b)), c_(std::move(c)), f_(std::move(f)) {
  const auto n = a_.rows();
  if (n < 1 || a_.cols() != n) {
    throw ModelError(fmt::format("A must be square and non-empty, got {}x{}", a_.rows(), a_.cols()));
  }
  if (b_.rows() != n || b_.cols() != 1) {
    throw ModelError(fmt::format("B must be {}x1, got {}x{}", n, b_.rows(), b_.cols()));
  }
  if (c_.rows() < 1 || c_.cols() != n) {
    throw ModelError(fmt::format("C must be mx{} with m >= 1, got {}x{}", n, c_.rows(), c_.cols()));
  }
  if (!a_.allFinite() || !b_.allFinite() || !c_.allFinite()) {
    throw ModelError("plant matrices must be finite");
  }
}

LtiPlant LtiPlant::flight_f4e(InputSignal f) {
  Matrix a(3, 3);
  a << -0.5162, 26.96, 178.9,
       -0.6896, -1.225, -30.38,
        0.0, 0.0, -14.0;
  Matrix b(3, 1);
  b << -175.6, 0.0, 14.0;
  Matrix c(1, 3);
  c << 1.0, 12.43, 0.0;
  return LtiPlant(std::move(a), std::move(b), std::move(c), std::move(f));
}

// ---------------------------------------------------------------------------
// DisturbanceProfile / NoiseSpec
// ---------------------------------------------------------------------------

DisturbanceProfile::DisturbanceProfile(Levels levels, std::optional<int> k_fault, int total_steps)
    : levels_(levels), k_fault_(k_fault), total_steps_(total_steps) {
  if (!std::isfinite(levels.zeta0) || !std::isfinite(levels.zeta1) || !(levels.zeta1 > 0.0) ||
      !(levels.zeta1 < levels.zeta0)) {
    throw ModelError(fmt::format("levels must satisfy 0 < zeta1 < zeta0, got zeta0={} zeta1={}",
                                 levels.zeta0, levels.zeta1));
  }
  if (total_steps < 1) throw ModelError("total_steps must be at least 1");
  if (k_fault && *k_fault < 0) throw ModelError("k_fault must be non-negative");
}

namespace {

int whole_steps(double t, double tau, const char* what) {
  const double steps = std::round(t / tau);
  if (std::abs(steps * tau - t) > 1e-9) {
    throw ModelError(fmt::format("{} = {} is not on the sampling grid of tau = {} ({} steps)", what,
                                 t, tau, t / tau));
  }
  return static_cast<int>(steps);
}

}  // namespace

DisturbanceProfile DisturbanceProfile::from_times(Levels levels, std::optional<double> t_fault,
                                                  double t_end, double tau) {
  if (!(tau > 0.0) || !(t_end > 0.0)) throw ModelError("tau and T must be positive");
  const int total = whole_steps(t_end, tau, "T");
  std::optional<int> k_fault;
  if (t_fault) {
    if (*t_fault < 0.0) throw ModelError("T_F must be non-negative");
    k_fault = whole_steps(*t_fault, tau, "T_F");
  }
  return DisturbanceProfile(levels, k_fault, total);
}

double NoiseSpec::sigma() const {
  if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) {
    throw ModelError(fmt::format("noise variance must be finite and >= 0, got {}", sigma2));
  }
  return std::sqrt(sigma2);
}

int ClosedLoopTrace::detection_errors(int first, int last) const {
  int count = 0;
  for (int k = std::max(first, 1); k <= std::min(last, total_steps()); ++k) {
    count += steps[static_cast<std::size_t>(k)].detection_error() ? 1 : 0;
  }
  return count;
}

// ---------------------------------------------------------------------------
// ClosedLoopSystem
// ---------------------------------------------------------------------------

ClosedLoopSystem::ClosedLoopSystem(LtiPlant plant, DisturbanceProfile profile, double tau,
                                   const MomentOptions& opts)
    : plant_(std::move(plant)),
      profile_(std::move(profile)),
      tau_(tau),
      moments_(plant_.a(), plant_.b(), plant_.input(), tau, profile_.total_steps(), opts) {}

TraceStep ClosedLoopSystem::initial_step() const {
  const auto n = plant_.states();
  const auto m = plant_.outputs();
  TraceStep s;
  s.k = 0;
  s.t = 0.0;
  s.x = Vector::Zero(n);
  s.y = Vector::Zero(m);
  s.r = Vector::Zero(m);
  s.xhat = Vector::Zero(n);
  s.e = Vector::Zero(n);
  s.d = Vector::Zero(n);
  return s;
}

TraceStep ClosedLoopSystem::step(const TraceStep& prev, const NoiseSpec& noise,
                                 const DetectorFn& detect) const {
  const int k = prev.k + 1;
  const Levels& lv = profile_.levels();
  const Matrix& phi = moments_.step_matrix();
  const Vector& m = moments_.at(k);

  const Level z = profile_.level(k - 1);
  const double z_val = lv.value(z);
  const double zhat2 = lv.value(prev.zhat);
  const double scale = z_val / zhat2;

  TraceStep s;
  s.k = k;
  s.t = k * tau_;
  s.z = z;
  s.u_scale = scale;
  s.x = phi * prev.x + scale * m;
  if (!s.x.allFinite()) throw DivergenceError(fmt::format("state diverged at step {}", k));
  s.y = plant_.c() * s.x;

  const double sigma = noise.sigma();
  s.r = s.y;
  if (sigma > 0.0) {
    const NormalStream stream(noise.seed);
    for (Eigen::Index i = 0; i < s.r.size(); ++i) {
      const auto index = static_cast<std::uint64_t>(k) * static_cast<std::uint64_t>(s.r.size()) +
                         static_cast<std::uint64_t>(i);
      s.r(i) += sigma * stream(index);
    }
  }

  const Detection det = detect(s.r, m);
  s.zhat = det.zhat;
  s.xhat = det.xhat;
  s.margin = det.margin;

  s.e = phi * prev.e + (scale - 1.0) * m;
  s.d = phi * prev.d + ((lv.value(s.zhat) - z_val) / zhat2) * m;
  return s;
}

DetectorFn ClosedLoopSystem::make_detector() const {
  return OneStateDetector(DetectorModel::from_plant(plant_, tau_, profile_.levels()));
}

ClosedLoopTrace ClosedLoopSystem::simulate(const NoiseSpec& noise) const {
  return simulate(noise, make_detector());
}

ClosedLoopTrace ClosedLoopSystem::simulate(const NoiseSpec& noise, const DetectorFn& detect) const {
  ClosedLoopTrace trace;
  trace.tau = tau_;
  trace.levels = profile_.levels();
  trace.k_fault = profile_.k_fault();
  const int total = profile_.total_steps();
  trace.steps.reserve(static_cast<std::size_t>(total) + 1);
  trace.steps.push_back(initial_step());
  for (int k = 1; k <= total; ++k) trace.steps.push_back(step(trace.steps.back(), noise, detect));
  return trace;
}

std::vector<Vector> ClosedLoopSystem::nominal_states() const {
  const int total = profile_.total_steps();
  std::vector<Vector> xs;
  xs.reserve(static_cast<std::size_t>(total) + 1);
  xs.push_back(Vector::Zero(plant_.states()));
  const Matrix& phi = moments_.step_matrix();
  for (int k = 1; k <= total; ++k) xs.push_back(phi * xs.back() + moments_.at(k));
  return xs;
}

OpenLoopTrace ClosedLoopSystem::uncompensated(const NoiseSpec& noise) const {
  // Readings reuse the compensated run's noise indices so the two runs are paired.
  const int total = profile_.total_steps();
  const Matrix& phi = moments_.step_matrix();
  const double sigma = noise.sigma();
  const NormalStream stream(noise.seed);
  OpenLoopTrace out;
  out.tau = tau_;
  out.x.push_back(Vector::Zero(plant_.states()));
  out.y.push_back(Vector::Zero(plant_.outputs()));
  out.r.push_back(Vector::Zero(plant_.outputs()));
  for (int k = 1; k <= total; ++k) {
    Vector x = phi * out.x.back() + profile_.value(k - 1) * moments_.at(k);
    Vector y = plant_.c() * x;
    Vector r = y;
    if (sigma > 0.0) {
      for (Eigen::Index i = 0; i < r.size(); ++i) {
        const auto index = static_cast<std::uint64_t>(k) * static_cast<std::uint64_t>(r.size()) +
                           static_cast<std::uint64_t>(i);
        r(i) += sigma * stream(index);
      }
    }
    out.x.push_back(std::move(x));
    out.y.push_back(std::move(y));
    out.r.push_back(std::move(r));
  }
  return out;
}

ClosedLoopTrace simulate(const LtiPlant& plant, const DisturbanceProfile& profile,
                         const NoiseSpec& noise, double tau) {
  return ClosedLoopSystem(plant, profile, tau).simulate(noise);
}

std::vector<Vector> nominal_trace(const LtiPlant& plant, double tau, int steps) {
  const DisturbanceProfile profile(Levels{}, std::nullopt, std::max(steps, 1));
  auto xs = ClosedLoopSystem(plant, profile, tau).nominal_states();
  xs.resize(static_cast<std::size_t>(steps) + 1);
  return xs;
}

DenseOutput dense_output(const LtiPlant& plant, double tau, const std::vector<Vector>& states,
                         const std::vector<double>& scales, int refine) {
  if (refine < 1) throw ModelError("refine must be >= 1");
  if (states.empty() || scales.size() + 1 != states.size()) {
    throw ModelError("dense_output: need one scale per interval");
  }
  DenseOutput out;
  const double h = tau / refine;
  std::vector<Matrix> sub_exp;
  for (int j = 0; j < refine; ++j) sub_exp.push_back(mat_exp(plant.a(), j * h));
  for (std::size_t k = 1; k < states.size(); ++k) {
    const double t0 = static_cast<double>(k - 1) * tau;
    for (int j = 0; j < refine; ++j) {
      const double span = j * h;
      Vector x = sub_exp[static_cast<std::size_t>(j)] * states[k - 1];
      if (j > 0) {
        x += scales[k - 1] * input_moment_span(plant.a(), plant.b(), plant.input(), span, t0 + span);
      }
      out.t.push_back(t0 + span);
      out.y.push_back(plant.c() * x);
    }
  }
  out.t.push_back(static_cast<double>(states.size() - 1) * tau);
  out.y.push_back(plant.c() * states.back());
  return out;
}

}  // namespace onestate
