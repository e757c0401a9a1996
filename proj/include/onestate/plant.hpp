#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "onestate/linalg.hpp"

namespace onestate {

/// The two quantization levels a disturbance can take.
enum class Level { nominal, faulty };

inline Level other(Level l) { return l == Level::nominal ? Level::faulty : Level::nominal; }
const char* to_string(Level l);

/// Numeric values of the two levels: zeta0 (nominal) and zeta1 (faulty).
struct Levels {
  double zeta0 = 1.0;
  double zeta1 = 0.5;

  double value(Level l) const { return l == Level::nominal ? zeta0 : zeta1; }
};

class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when the closed loop produces non-finite states.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// x' = A x + B z(t) (f(t) + u(t)),  y = C x,  x(0) = 0.
class LtiPlant {
 public:
  LtiPlant(Matrix a, Matrix b, Matrix c, InputSignal f);

  /// Longitudinal short-period mode of an F-4E with canards, supersonic.
  static LtiPlant flight_f4e(InputSignal f = InputSignal::constant(1.0));

  const Matrix& a() const { return a_; }
  const Matrix& b() const { return b_; }
  const Matrix& c() const { return c_; }
  const InputSignal& input() const { return f_; }
  int states() const { return static_cast<int>(a_.rows()); }
  int outputs() const { return static_cast<int>(c_.rows()); }

  LtiPlant with_input(InputSignal f) const { return LtiPlant(a_, b_, c_, std::move(f)); }

 private:
  Matrix a_;
  Matrix b_;
  Matrix c_;
  InputSignal f_;
};

/// Irreversible failure: z_j = zeta0 for j < k_fault, zeta1 for j >= k_fault.
class DisturbanceProfile {
 public:
  DisturbanceProfile(Levels levels, std::optional<int> k_fault, int total_steps);

  /// Builds a profile from times. Both T / tau and T_F / tau must be whole
  /// numbers (to 1e-9); off-grid switch instants are rejected.
  static DisturbanceProfile from_times(Levels levels, std::optional<double> t_fault,
                                       double t_end, double tau);

  const Levels& levels() const { return levels_; }
  std::optional<int> k_fault() const { return k_fault_; }
  int total_steps() const { return total_steps_; }

  /// Level of z_j.
  Level level(int j) const {
    return (k_fault_ && j >= *k_fault_) ? Level::faulty : Level::nominal;
  }
  double value(int j) const { return levels_.value(level(j)); }

 private:
  Levels levels_;
  std::optional<int> k_fault_;
  int total_steps_;
};

struct NoiseSpec {
  double sigma2 = 0.0;
  std::uint64_t seed = 0;

  double sigma() const;
};

/// One sample instant of a closed-loop run. Indices follow the recursion:
/// row k holds x_k, the reading r_k, and the decision zhat_{k-1} it produced.
struct TraceStep {
  int k = 0;
  double t = 0.0;
  Vector x;
  Vector y;
  Vector r;
  Level zhat = Level::nominal;  ///< zhat_{k-1}; row 0 holds the prior zhat_{-1}
  Level z = Level::nominal;     ///< true z_{k-1}; row 0 holds z_{-1} := nominal
  Vector xhat;
  Vector e;                     ///< E_k, compensated minus nominal trajectory
  Vector d;                     ///< D_k, estimate minus true state
  double u_scale = 1.0;         ///< z_{k-1} / zhat_{k-2}
  double margin = 0.0;

  bool detection_error() const { return k > 0 && zhat != z; }
};

struct ClosedLoopTrace {
  double tau = 0.0;
  Levels levels;
  std::optional<int> k_fault;
  std::vector<TraceStep> steps;  ///< rows k = 0..K

  int total_steps() const { return static_cast<int>(steps.size()) - 1; }
  /// Wrong decisions over rows [first, last].
  int detection_errors(int first, int last) const;
  int detection_errors() const { return detection_errors(1, total_steps()); }
};

/// Output of a detector for one reading.
struct Detection {
  Level zhat = Level::nominal;
  Vector xhat;
  double margin = 0.0;
};

/// Stateful detector callback: (reading r_k, M_{tau,k}) -> decision on z_{k-1}.
using DetectorFn = std::function<Detection(const Vector& reading, const Vector& m_tau_k)>;

/// Faulty plant without any compensation, sharing the noise stream of the
/// compensated run.
struct OpenLoopTrace {
  double tau = 0.0;
  std::vector<Vector> x;
  std::vector<Vector> y;
  std::vector<Vector> r;
};

/// A plant, a disturbance profile and a sampling period, with the moment
/// table M_{tau,k} precomputed for k = 1..K. Immutable; simulations may run
/// concurrently on one instance.
class ClosedLoopSystem {
 public:
  ClosedLoopSystem(LtiPlant plant, DisturbanceProfile profile, double tau,
                   const MomentOptions& opts = {});

  const LtiPlant& plant() const { return plant_; }
  const DisturbanceProfile& profile() const { return profile_; }
  double tau() const { return tau_; }
  const MomentTable& moments() const { return moments_; }

  /// Initial row: x_0 = xhat_0 = E_0 = D_0 = 0, zhat_{-1} = zeta0.
  TraceStep initial_step() const;

  /// Advances one sample: compensated plant update, noisy reading, detector
  /// call, then the E and D recursions.
  TraceStep step(const TraceStep& prev, const NoiseSpec& noise, const DetectorFn& detect) const;

  ClosedLoopTrace simulate(const NoiseSpec& noise) const;
  ClosedLoopTrace simulate(const NoiseSpec& noise, const DetectorFn& detect) const;

  /// x^N(k tau): unit gain on B f, no disturbance, no control.
  std::vector<Vector> nominal_states() const;

  OpenLoopTrace uncompensated(const NoiseSpec& noise) const;

  /// One State detector wired to this system's model.
  DetectorFn make_detector() const;

 private:
  LtiPlant plant_;
  DisturbanceProfile profile_;
  double tau_;
  MomentTable moments_;
};

/// Convenience wrappers over ClosedLoopSystem.
ClosedLoopTrace simulate(const LtiPlant& plant, const DisturbanceProfile& profile,
                         const NoiseSpec& noise, double tau);
std::vector<Vector> nominal_trace(const LtiPlant& plant, double tau, int steps);

/// Presentation-only reconstruction of y on a grid `refine` times finer than
/// tau, using the same closed forms between samples. `scales[k-1]` is the
/// input gain applied on [(k-1) tau, k tau).
struct DenseOutput {
  std::vector<double> t;
  std::vector<Vector> y;
};
DenseOutput dense_output(const LtiPlant& plant, double tau, const std::vector<Vector>& states,
                         const std::vector<double>& scales, int refine = 10);

}  // namespace onestate
