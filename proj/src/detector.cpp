#include "onestate/detector.hpp"

#include <fmt/format.h>

namespace onestate {

DetectorModel DetectorModel::from_plant(const LtiPlant& plant, double tau, Levels levels) {
  return {mat_exp(plant.a(), tau), plant.c(), levels};
}

Decision decide(const DetectorState& state, const Vector& reading, const Vector& m_tau_k,
                const DetectorModel& model) {
  if (reading.size() != model.c.rows()) {
    throw ModelError(fmt::format("decide: reading has {} entries, expected {}", reading.size(),
                                 model.c.rows()));
  }
  const double zprev = model.levels.value(state.zhat_prev);
  const Vector base = model.c * (model.phi * state.xhat);
  const Vector cm = model.c * m_tau_k;

  Decision out;
  out.s0 = base + (model.levels.zeta0 / zprev) * cm;
  out.s1 = base + (model.levels.zeta1 / zprev) * cm;
  const double d0 = (reading - out.s0).norm();
  const double d1 = (reading - out.s1).norm();
  if (d0 <= d1) {
    out.zhat = Level::nominal;
    out.margin = d1 - d0;
  } else {
    out.zhat = Level::faulty;
    out.margin = d0 - d1;
  }
  return out;
}

DetectorState update(const DetectorState& state, const Decision& decision, const Vector& m_tau_k,
                     const DetectorModel& model) {
  const double ratio = model.levels.value(decision.zhat) / model.levels.value(state.zhat_prev);
  DetectorState next;
  next.xhat = model.phi * state.xhat + ratio * m_tau_k;
  next.zhat_prev = decision.zhat;
  next.k = state.k + 1;
  return next;
}

Detection OneStateDetector::operator()(const Vector& reading, const Vector& m_tau_k) {
  const Decision decision = decide(state_, reading, m_tau_k, model_);
  state_ = update(state_, decision, m_tau_k, model_);
  return {decision.zhat, state_.xhat, decision.margin};
}

}  // namespace onestate
