#pragma once

#include <optional>

#include "onestate/plant.hpp"

namespace onestate {

class AnalysisError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A probability together with its natural log. Long products are
/// accumulated in log space; `value` may underflow to 0 while `log_value`
/// stays finite.
struct Probability {
  double value = 1.0;
  double log_value = 0.0;
};

/// Detection error probability query for the decision made on reading r_k,
/// i.e. P(zhat_{k-1} != z_{k-1} | D_{k-1} = d, zhat_{k-2} = zeta_cond).
struct DepQuery {
  int k = 1;
  Vector d;
  Level zeta_cond = Level::nominal;
  Level z_true = Level::nominal;
  double sigma = 1.0;
};

/// Probability of n consecutive correct decisions on readings k0..k0+n-1
/// with the true level held at eta, starting from gap d and previous decision
/// zeta.
struct EdpQuery {
  int k0 = 1;
  int n = 1;
  Vector d;
  Level zeta = Level::nominal;
  Level eta = Level::nominal;
  double sigma = 1.0;
};

struct Snr {
  double value = 0.0;
  double sqrt_value = 0.0;
  double db = 0.0;
};

/// Closed-form error probabilities of the One State detector for a scalar
/// output plant sampled at tau. Holds M_{tau,k} for k = 1..steps.
class DetectionAnalysis {
 public:
  DetectionAnalysis(const LtiPlant& plant, double tau, Levels levels, int steps,
                    const MomentOptions& opts = {});

  /// Evaluated through the four (true level x candidate ordering) cases.
  double dep(const DepQuery& q) const;
  Probability dep_probability(const DepQuery& q) const;
  /// Same quantity from the single sign-product expression.
  double dep_compact(const DepQuery& q) const;

  Snr snr(Level eta, int k, double sigma) const;

  /// EDP^n. When `profile` is given the window [k0-1, k0+n-1] must hold z
  /// constant at eta.
  Probability edp_n(const EdpQuery& q, const DisturbanceProfile* profile = nullptr) const;

  /// EDP^{k_F-1}(1, 0, zeta0, zeta0): no false positive before the failure.
  Probability false_positive_window(int k_fault, double sigma) const;

  /// EDP^n(k_F+1, 0, zeta0, zeta1): decay after the failure.
  Probability post_failure_decay(int k_fault, int n, double sigma) const;

  /// C M_{tau,k}
  double cm(int k) const;
  int steps() const { return moments_.steps(); }
  double tau() const { return moments_.tau(); }
  const Levels& levels() const { return levels_; }
  const Matrix& step_matrix() const { return moments_.step_matrix(); }

 private:
  struct Terms {
    double gap;       // C e^{tau A} d
    double half_sep;  // ((zeta1 - zeta0) / (2 zeta)) C M_{tau,k}
    bool s1_above;    // S^{zeta1} > S^{zeta0}
  };
  Terms terms(const DepQuery& q) const;
  /// Argument numerator x such that DEP = erfc(x / (sigma sqrt 2)) / 2.
  double dep_numerator(const DepQuery& q) const;

  Matrix c_;
  Levels levels_;
  MomentTable moments_;
};

// Free-function forms; each builds the moment table it needs.
double dep(const DepQuery& q, const LtiPlant& plant, double tau, Levels levels);
Snr snr(Level eta, const LtiPlant& plant, double tau, int k, double sigma, Levels levels);
Probability edp_n(const EdpQuery& q, const LtiPlant& plant, double tau, Levels levels);
Probability false_positive_window(int k_fault, const LtiPlant& plant, double tau, double sigma,
                                  Levels levels);
Probability post_failure_decay(int k_fault, int n, const LtiPlant& plant, double tau,
                               double sigma, Levels levels);

/// log(erfc(x) / 2) and log(1 - erfc(x) / 2), both stable in the tails.
double log_half_erfc(double x);
double log_one_minus_half_erfc(double x);

}  // namespace onestate
