#pragma once

#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace onestate {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Thrown when a numerical kernel receives malformed input (shape, finiteness).
class LinalgError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when adaptive quadrature exhausts its panel budget.
class QuadratureError : public std::runtime_error {
 public:
  QuadratureError(const std::string& what, double achieved)
      : std::runtime_error(what), achieved_tolerance(achieved) {}
  double achieved_tolerance;
};

// ---------------------------------------------------------------------------
// Input signal f(t)
// ---------------------------------------------------------------------------

struct ConstantInput {
  double level = 1.0;
};

/// amplitude * sin(angular_frequency * t + phase)
struct SinusoidInput {
  double amplitude = 1.0;
  double angular_frequency = 1.0;
  double phase = 0.0;
};

/// Samples values[i] at t = i * step, linearly interpolated; held constant
/// past the last sample and before t = 0.
struct SampledInput {
  std::vector<double> values;
  double step = 1.0;
};

class InputSignal {
 public:
  using Kind = std::variant<ConstantInput, SinusoidInput, SampledInput>;

  InputSignal() : InputSignal(ConstantInput{}) {}
  InputSignal(ConstantInput c);
  InputSignal(SinusoidInput s);
  InputSignal(SampledInput s);

  static InputSignal constant(double level) { return InputSignal(ConstantInput{level}); }
  static InputSignal sinusoid(double amplitude, double omega, double phase = 0.0) {
    return InputSignal(SinusoidInput{amplitude, omega, phase});
  }

  double operator()(double t) const;

  const Kind& kind() const { return kind_; }
  bool is_constant() const { return std::holds_alternative<ConstantInput>(kind_); }
  bool is_periodic() const { return std::holds_alternative<SinusoidInput>(kind_); }
  std::string describe() const;

 private:
  Kind kind_;
};

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

void require_finite(const Matrix& m, const char* name);

/// e^{tA} by scaling-and-squaring with a Padé core.
Matrix mat_exp(const Matrix& a, double t);

enum class MomentMethod {
  automatic,   ///< closed form for constant f when A is well conditioned
  quadrature,  ///< always integrate numerically
};

struct MomentOptions {
  MomentMethod method = MomentMethod::automatic;
  double abs_tol = 1e-10;
  double cond_limit = 1e12;
};

/// \int_0^h e^{sA} B f(t_end - s) ds. This is the state increment produced by
/// the input over [t_end - h, t_end] starting from zero state.
Vector input_moment_span(const Matrix& a, const Matrix& b, const InputSignal& f, double h,
                         double t_end, const MomentOptions& opts = {});

/// M_{tau,k} = \int_0^tau e^{sA} B f(k tau - s) ds.
Vector input_moment(const Matrix& a, const Matrix& b, const InputSignal& f, double tau, int k,
                    const MomentOptions& opts = {});

/// Standard complementary error function.
double erfc(double x);

/// log(erfc(x)), accurate where erfc(x) underflows.
double log_erfc(double x);

/// Precomputed M_{tau,k}, k = 1..steps, for a fixed (A, B, f, tau).
///
/// Constant inputs reduce to one vector. Sinusoids decompose as
/// f(k tau - s) = a [sin(w k tau + p) cos(w s) - cos(w k tau + p) sin(w s)],
/// so two quadratures per tau serve every k. Sampled inputs take one
/// quadrature per step. Immutable after construction.
class MomentTable {
 public:
  MomentTable(const Matrix& a, const Matrix& b, const InputSignal& f, double tau, int steps,
              const MomentOptions& opts = {});

  /// M_{tau,k}; k in [1, steps()].
  const Vector& at(int k) const;
  int steps() const { return static_cast<int>(moments_.size()); }
  double tau() const { return tau_; }
  /// e^{tau A}
  const Matrix& step_matrix() const { return phi_; }

 private:
  double tau_;
  Matrix phi_;
  std::vector<Vector> moments_;
};

}  // namespace onestate
