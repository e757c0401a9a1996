#include "onestate/analysis.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

namespace onestate {

namespace {
constexpr int kLogSpaceThreshold = 1000;
constexpr double kLogHalf = -std::numbers::ln2;
}  // namespace

double log_half_erfc(double x) { return kLogHalf + log_erfc(x); }

double log_one_minus_half_erfc(double x) {
  if (x >= 0.0) return std::log1p(-0.5 * std::erfc(x));
  return log_half_erfc(-x);
}

DetectionAnalysis::DetectionAnalysis(const LtiPlant& plant, double tau, Levels levels, int steps,
                                     const MomentOptions& opts)
    : c_(plant.c()),
      levels_(levels),
      moments_(plant.a(), plant.b(), plant.input(), tau, steps, opts) {
  if (plant.outputs() != 1) {
    throw AnalysisError(fmt::format(
        "closed-form error probabilities need a scalar output, plant has {}", plant.outputs()));
  }
  if (!(levels.zeta0 > 0.0) || !(levels.zeta1 > 0.0)) {
    throw AnalysisError("levels must be positive");
  }
}

double DetectionAnalysis::cm(int k) const { return (c_ * moments_.at(k))(0); }

DetectionAnalysis::Terms DetectionAnalysis::terms(const DepQuery& q) const {
  const auto n = moments_.step_matrix().rows();
  if (q.d.size() != n) {
    throw AnalysisError(fmt::format("gap vector has {} entries, expected {}", q.d.size(), n));
  }
  if (!q.d.allFinite()) throw AnalysisError("gap vector must be finite");
  if (!(q.sigma >= 0.0) || !std::isfinite(q.sigma)) {
    throw AnalysisError(fmt::format("sigma must be finite and >= 0, got {}", q.sigma));
  }
  const double zeta = levels_.value(q.zeta_cond);
  const double c_m = cm(q.k);
  Terms t;
  t.gap = (c_ * (moments_.step_matrix() * q.d))(0);
  t.half_sep = (levels_.zeta1 - levels_.zeta0) / (2.0 * zeta) * c_m;
  // S^{zeta1} - S^{zeta0} = ((zeta1 - zeta0) / zeta) C M_{tau,k}
  t.s1_above = 2.0 * t.half_sep > 0.0;
  return t;
}

double DetectionAnalysis::dep_numerator(const DepQuery& q) const {
  const Terms t = terms(q);
  // Each branch is written as P = erfc(x / (sigma sqrt 2)) / 2, using
  // 1 - erfc(u)/2 = erfc(-u)/2 for the complementary branches.
  if (q.z_true == Level::faulty) {
    // Error when the reading falls on the zeta0 side of the midpoint.
    if (t.s1_above) return -t.gap + t.half_sep;
    return -(-t.gap + t.half_sep);
  }
  // True level zeta0: error when the reading falls on the zeta1 side.
  if (t.s1_above) return -(-t.gap - t.half_sep);
  return -t.gap - t.half_sep;
}

Probability DetectionAnalysis::dep_probability(const DepQuery& q) const {
  const double num = dep_numerator(q);
  if (q.sigma == 0.0) {
    // Noise-free limit. A reading exactly on the midpoint resolves to zeta0.
    bool error = num < 0.0;
    if (num == 0.0) error = q.z_true == Level::faulty;
    return error ? Probability{1.0, 0.0}
                 : Probability{0.0, -std::numeric_limits<double>::infinity()};
  }
  const double x = num / (q.sigma * std::numbers::sqrt2);
  return {0.5 * std::erfc(x), log_half_erfc(x)};
}

double DetectionAnalysis::dep(const DepQuery& q) const { return dep_probability(q).value; }

double DetectionAnalysis::dep_compact(const DepQuery& q) const {
  const Terms t = terms(q);
  const double from_truth = q.z_true == Level::nominal ? -1.0 : 1.0;
  const double from_order = t.s1_above ? 1.0 : -1.0;  // 1 - 2 * [S^{zeta0} > S^{zeta1}]
  const double num = std::abs(t.half_sep) - t.gap * from_truth * from_order;
  if (q.sigma == 0.0) return dep(q);
  return 0.5 * std::erfc(num / (q.sigma * std::numbers::sqrt2));
}

Snr DetectionAnalysis::snr(Level eta, int k, double sigma) const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw AnalysisError(fmt::format("SNR needs sigma > 0, got {}", sigma));
  }
  const double amp = std::abs((levels_.zeta1 - levels_.zeta0) / (2.0 * levels_.value(eta)) * cm(k));
  Snr s;
  s.sqrt_value = amp / (sigma * std::numbers::sqrt2);
  s.value = s.sqrt_value * s.sqrt_value;
  s.db = 10.0 * std::log10(s.value);
  return s;
}

Probability DetectionAnalysis::edp_n(const EdpQuery& q, const DisturbanceProfile* profile) const {
  if (q.k0 < 1) throw AnalysisError("EDP window must start at k0 >= 1");
  if (q.n < 0) throw AnalysisError("EDP horizon must be non-negative");
  if (q.k0 + q.n - 1 > steps()) {
    throw AnalysisError(fmt::format("EDP window reaches step {}, moments only cover {}",
                                    q.k0 + q.n - 1, steps()));
  }
  if (profile != nullptr) {
    for (int j = q.k0 - 1; j <= q.k0 + q.n - 1; ++j) {
      if (profile->level(j) != q.eta) {
        throw AnalysisError(fmt::format("EDP window [{}, {}] crosses a switch of z at j={}",
                                        q.k0 - 1, q.k0 + q.n - 1, j));
      }
    }
  }

  const Matrix& phi = moments_.step_matrix();
  Vector gap = q.d;
  double log_sum = 0.0;
  double product = 1.0;
  for (int m = 0; m < q.n; ++m) {
    const DepQuery step{q.k0 + m, gap, m == 0 ? q.zeta : q.eta, q.eta, q.sigma};
    const double num = dep_numerator(step);
    if (q.sigma == 0.0) {
      const Probability err = dep_probability(step);
      if (err.value == 1.0) return {0.0, -std::numeric_limits<double>::infinity()};
    } else {
      const double x = num / (q.sigma * std::numbers::sqrt2);
      const double p = 0.5 * std::erfc(-x);  // 1 - DEP
      product *= p;
      log_sum += log_one_minus_half_erfc(x);
    }
    gap = phi * gap;
  }
  if (q.sigma == 0.0) return {1.0, 0.0};
  if (q.n > kLogSpaceThreshold) return {std::exp(log_sum), log_sum};
  return {product, log_sum};
}

Probability DetectionAnalysis::false_positive_window(int k_fault, double sigma) const {
  if (k_fault < 1) throw AnalysisError("false-positive window needs k_F >= 1");
  const auto n = moments_.step_matrix().rows();
  return edp_n({1, k_fault - 1, Vector::Zero(n), Level::nominal, Level::nominal, sigma});
}

Probability DetectionAnalysis::post_failure_decay(int k_fault, int n, double sigma) const {
  if (k_fault < 0) throw AnalysisError("k_F must be non-negative");
  if (n < 1) throw AnalysisError("decay horizon must be >= 1");
  const auto states = moments_.step_matrix().rows();
  return edp_n({k_fault + 1, n, Vector::Zero(states), Level::nominal, Level::faulty, sigma});
}

// ---------------------------------------------------------------------------

double dep(const DepQuery& q, const LtiPlant& plant, double tau, Levels levels) {
  return DetectionAnalysis(plant, tau, levels, q.k).dep(q);
}

Snr snr(Level eta, const LtiPlant& plant, double tau, int k, double sigma, Levels levels) {
  return DetectionAnalysis(plant, tau, levels, k).snr(eta, k, sigma);
}

Probability edp_n(const EdpQuery& q, const LtiPlant& plant, double tau, Levels levels) {
  return DetectionAnalysis(plant, tau, levels, std::max(q.k0 + q.n - 1, 1)).edp_n(q);
}

Probability false_positive_window(int k_fault, const LtiPlant& plant, double tau, double sigma,
                                  Levels levels) {
  return DetectionAnalysis(plant, tau, levels, std::max(k_fault - 1, 1))
      .false_positive_window(k_fault, sigma);
}

Probability post_failure_decay(int k_fault, int n, const LtiPlant& plant, double tau, double sigma,
                               Levels levels) {
  return DetectionAnalysis(plant, tau, levels, k_fault + n).post_failure_decay(k_fault, n, sigma);
}

}  // namespace onestate
