#pragma once

#include "onestate/plant.hpp"

namespace onestate {

/// What the detector needs from the plant: e^{tau A}, C and the two levels.
struct DetectorModel {
  Matrix phi;
  Matrix c;
  Levels levels;

  static DetectorModel from_plant(const LtiPlant& plant, double tau, Levels levels);
};

/// The detector's whole memory: one state estimate and one level.
struct DetectorState {
  Vector xhat;                       ///< xhat_{k-1}
  Level zhat_prev = Level::nominal;  ///< zhat_{k-2}
  int k = 1;                         ///< step the next reading belongs to

  static DetectorState initial(int states) { return {Vector::Zero(states), Level::nominal, 1}; }
};

struct Decision {
  Level zhat = Level::nominal;
  Vector s0;  ///< predicted reading if z_{k-1} = zeta0
  Vector s1;  ///< predicted reading if z_{k-1} = zeta1
  double margin = 0.0;
};

/// Nearest-candidate decision on z_{k-1} from the reading r_k. Ties go to
/// the nominal level.
Decision decide(const DetectorState& state, const Vector& reading, const Vector& m_tau_k,
                const DetectorModel& model);

/// xhat_k = e^{tau A} xhat_{k-1} + (zhat_{k-1} / zhat_{k-2}) M_{tau,k}
DetectorState update(const DetectorState& state, const Decision& decision, const Vector& m_tau_k,
                     const DetectorModel& model);

/// decide + update packaged as a DetectorFn.
class OneStateDetector {
 public:
  explicit OneStateDetector(DetectorModel model)
      : model_(std::move(model)), state_(DetectorState::initial(static_cast<int>(model_.phi.rows()))) {}

  Detection operator()(const Vector& reading, const Vector& m_tau_k);
  const DetectorState& state() const { return state_; }

 private:
  DetectorModel model_;
  DetectorState state_;
};

}  // namespace onestate
