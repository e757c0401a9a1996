#include "onestate/linalg.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "onestate/quadrature.hpp"

namespace onestate {

// ---------------------------------------------------------------------------
// InputSignal
// ---------------------------------------------------------------------------

InputSignal::InputSignal(ConstantInput c) : kind_(c) {
  if (!std::isfinite(c.level)) throw LinalgError("constant input level must be finite");
}

InputSignal::InputSignal(SinusoidInput s) : kind_(s) {
  if (!(s.amplitude > 0.0) || !std::isfinite(s.amplitude)) {
    throw LinalgError("sinusoid amplitude must be positive and finite");
  }
  if (!std::isfinite(s.angular_frequency) || !std::isfinite(s.phase)) {
    throw LinalgError("sinusoid frequency and phase must be finite");
  }
}

InputSignal::InputSignal(SampledInput s) : kind_(std::move(s)) {
  const auto& sampled = std::get<SampledInput>(kind_);
  if (!(sampled.step > 0.0)) throw LinalgError("sampled input step must be positive");
  if (sampled.values.empty()) throw LinalgError("sampled input needs at least one value");
  for (double v : sampled.values) {
    if (!std::isfinite(v)) throw LinalgError("sampled input values must be finite");
  }
}

double InputSignal::operator()(double t) const {
  struct Eval {
    double t;
    double operator()(const ConstantInput& c) const { return c.level; }
    double operator()(const SinusoidInput& s) const {
      return s.amplitude * std::sin(s.angular_frequency * t + s.phase);
    }
    double operator()(const SampledInput& s) const {
      if (t <= 0.0) return s.values.front();
      const double pos = t / s.step;
      const auto last = s.values.size() - 1;
      if (pos >= static_cast<double>(last)) return s.values.back();
      const auto i = static_cast<std::size_t>(pos);
      const double frac = pos - static_cast<double>(i);
      return s.values[i] + frac * (s.values[i + 1] - s.values[i]);
    }
  };
  return std::visit(Eval{t}, kind_);
}

std::string InputSignal::describe() const {
  struct Describe {
    std::string operator()(const ConstantInput& c) const {
      return fmt::format("constant({})", c.level);
    }
    std::string operator()(const SinusoidInput& s) const {
      return fmt::format("sinusoid(amplitude={}, omega={}, phase={})", s.amplitude,
                         s.angular_frequency, s.phase);
    }
    std::string operator()(const SampledInput& s) const {
      return fmt::format("sampled({} values, step={})", s.values.size(), s.step);
    }
  };
  return std::visit(Describe{}, kind_);
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

void require_finite(const Matrix& m, const char* name) {
  if (!m.allFinite()) throw LinalgError(fmt::format("{} has non-finite entries", name));
}

Matrix mat_exp(const Matrix& a, double t) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw LinalgError(fmt::format("mat_exp: expected a non-empty square matrix, got {}x{}",
                                  a.rows(), a.cols()));
  }
  require_finite(a, "mat_exp input");
  if (!(t >= 0.0) || !std::isfinite(t)) {
    throw LinalgError(fmt::format("mat_exp: time must be finite and non-negative, got {}", t));
  }
  const Matrix scaled = a * t;
  return scaled.exp();
}

namespace {

void check_moment_shapes(const Matrix& a, const Matrix& b) {
  if (a.rows() != a.cols() || a.rows() == 0) throw LinalgError("input_moment: A must be square");
  if (b.rows() != a.rows() || b.cols() != 1) {
    throw LinalgError(fmt::format("input_moment: B must be {}x1, got {}x{}", a.rows(), b.rows(),
                                  b.cols()));
  }
  require_finite(a, "A");
  require_finite(b, "B");
}

double condition_number(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a);
  const auto& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  if (smin == 0.0) return std::numeric_limits<double>::infinity();
  return sv(0) / smin;
}

Vector quadrature_moment(const Matrix& a, const Matrix& b, const std::function<double(double)>& w,
                         double h, double tol) {
  const Vector bv = b.col(0);
  auto integrand = [&](double s) -> Vector { return mat_exp(a, s) * bv * w(s); };
  return integrate_gk15(integrand, 0.0, h, tol).value;
}

}  // namespace

Vector input_moment_span(const Matrix& a, const Matrix& b, const InputSignal& f, double h,
                         double t_end, const MomentOptions& opts) {
  check_moment_shapes(a, b);
  if (!(h >= 0.0) || !std::isfinite(h) || !std::isfinite(t_end)) {
    throw LinalgError(fmt::format("input_moment: invalid span h={} t_end={}", h, t_end));
  }
  if (h == 0.0 || b.isZero(0.0)) return Vector::Zero(a.rows());

  if (const auto* c = std::get_if<ConstantInput>(&f.kind())) {
    if (opts.method == MomentMethod::automatic && condition_number(a) <= opts.cond_limit) {
      const Matrix eye = Matrix::Identity(a.rows(), a.cols());
      const Vector a_inv_b = a.partialPivLu().solve(b.col(0));
      return c->level * ((mat_exp(a, h) - eye) * a_inv_b);
    }
  }
  return quadrature_moment(a, b, [&](double s) { return f(t_end - s); }, h, opts.abs_tol);
}

Vector input_moment(const Matrix& a, const Matrix& b, const InputSignal& f, double tau, int k,
                    const MomentOptions& opts) {
  if (!(tau > 0.0)) throw LinalgError(fmt::format("input_moment: tau must be positive, got {}", tau));
  if (k < 1) throw LinalgError(fmt::format("input_moment: step index must be >= 1, got {}", k));
  return input_moment_span(a, b, f, tau, k * tau, opts);
}

double erfc(double x) { return std::erfc(x); }

double log_erfc(double x) {
  if (x < 26.0) return std::log(std::erfc(x));
  // erfc(x) = exp(-x^2) / (x sqrt(pi)) * (1 - 1/(2x^2) + 3/(2x^2)^2 - 15/(2x^2)^3 + ...)
  const double inv = 1.0 / (2.0 * x * x);
  double term = 1.0;
  double series = 1.0;
  for (int j = 1; j <= 6; ++j) {
    term *= -(2.0 * j - 1.0) * inv;
    series += term;
  }
  return -x * x - std::log(x) - 0.5 * std::log(std::numbers::pi) + std::log(series);
}

// ---------------------------------------------------------------------------
// MomentTable
// ---------------------------------------------------------------------------

MomentTable::MomentTable(const Matrix& a, const Matrix& b, const InputSignal& f, double tau,
                         int steps, const MomentOptions& opts)
    : tau_(tau), phi_(mat_exp(a, tau)) {
  check_moment_shapes(a, b);
  if (!(tau > 0.0)) throw LinalgError("MomentTable: tau must be positive");
  if (steps < 0) throw LinalgError("MomentTable: negative step count");
  moments_.reserve(static_cast<std::size_t>(steps));

  if (f.is_constant()) {
    const Vector m = input_moment(a, b, f, tau, 1, opts);
    moments_.assign(static_cast<std::size_t>(steps), m);
  } else if (const auto* s = std::get_if<SinusoidInput>(&f.kind())) {
    const double w = s->angular_frequency;
    const Vector cos_part =
        quadrature_moment(a, b, [w](double u) { return std::cos(w * u); }, tau, opts.abs_tol);
    const Vector sin_part =
        quadrature_moment(a, b, [w](double u) { return std::sin(w * u); }, tau, opts.abs_tol);
    for (int k = 1; k <= steps; ++k) {
      const double theta = w * k * tau + s->phase;
      moments_.push_back(s->amplitude * (std::sin(theta) * cos_part - std::cos(theta) * sin_part));
    }
  } else {
    for (int k = 1; k <= steps; ++k) moments_.push_back(input_moment(a, b, f, tau, k, opts));
  }
}

const Vector& MomentTable::at(int k) const {
  if (k < 1 || k > steps()) {
    throw LinalgError(fmt::format("MomentTable: step {} outside [1, {}]", k, steps()));
  }
  return moments_[static_cast<std::size_t>(k - 1)];
}

}  // namespace onestate
