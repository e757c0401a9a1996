#include "onestate/quadrature.hpp"

#include <array>
#include <cmath>
#include <algorithm>
#include <vector>

#include <fmt/format.h>

namespace onestate {
namespace {

// Nodes on [0, 1]; index 0 is the centre. Even indices are the Gauss points.
constexpr std::array<double, 8> kNodes = {
    0.000000000000000000000000000000000, 0.207784955007898467600689403773245,
    0.405845151377397166906606412076961, 0.586087235467691130294144845693013,
    0.741531185599394439863864773280788, 0.864864423359769072789712788640926,
    0.949107912342758524526189684047851, 0.991455371120812639206854697526329};

constexpr std::array<double, 8> kKronrod = {
    0.209482141084727828012999174891714, 0.204432940075298892414161999234649,
    0.190350578064785409913256402421014, 0.169004726639267902826583426598550,
    0.140653259715525918745189590510238, 0.104790010322250183839876322541518,
    0.063092092629978553290700663189204, 0.022935322010529224963732008058970};

constexpr std::array<double, 4> kGauss = {
    0.417959183673469387755102040816327, 0.381830050505118944950369775488975,
    0.279705391489276667901467771423780, 0.129484966168869693270611432679082};

struct Panel {
  double lo;
  double hi;
  Vector value;
  double error;
  bool operator<(const Panel& o) const { return error < o.error; }
};

Panel evaluate(const std::function<Vector(double)>& f, double lo, double hi) {
  const double mid = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  Vector fc = f(mid);
  Vector kronrod = kKronrod[0] * fc;
  Vector gauss = kGauss[0] * fc;
  for (int i = 1; i < 8; ++i) {
    const double dx = half * kNodes[i];
    Vector pair = f(mid - dx) + f(mid + dx);
    kronrod += kKronrod[i] * pair;
    if (i % 2 == 0) gauss += kGauss[i / 2] * pair;
  }
  kronrod *= half;
  gauss *= half;
  const double err = (kronrod - gauss).cwiseAbs().maxCoeff();
  return Panel{lo, hi, std::move(kronrod), err};
}

}  // namespace

QuadratureResult integrate_gk15(const std::function<Vector(double)>& f, double lo, double hi,
                                double abs_tol, int max_panels) {
  if (!(hi >= lo) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw LinalgError(fmt::format("integrate_gk15: invalid interval [{}, {}]", lo, hi));
  }
  Panel first = evaluate(f, lo, hi);
  if (hi == lo) return {first.value, 0.0, 1};

  std::vector<Panel> work;
  work.push_back(std::move(first));
  double error = work.front().error;
  int panels = 1;

  for (;;) {
    if (!(error > abs_tol)) {
      // The running sum cancels badly once panel errors are tiny; confirm
      // convergence against a fresh sum before stopping.
      error = 0.0;
      for (const Panel& p : work) error += p.error;
      if (!(error > abs_tol)) break;
    }
    if (panels >= max_panels) {
      throw QuadratureError(
          fmt::format("quadrature did not converge: {} panels, achieved {:.3e} > {:.3e}", panels,
                      error, abs_tol),
          error);
    }
    std::pop_heap(work.begin(), work.end());
    const Panel worst = std::move(work.back());
    work.pop_back();
    const double mid = 0.5 * (worst.lo + worst.hi);
    for (Panel half : {evaluate(f, worst.lo, mid), evaluate(f, mid, worst.hi)}) {
      error += half.error;
      work.push_back(std::move(half));
      std::push_heap(work.begin(), work.end());
    }
    error -= worst.error;
    ++panels;
  }

  Vector sum = Vector::Zero(work.front().value.size());
  for (const Panel& p : work) sum += p.value;
  return {sum, error, panels};
}

}  // namespace onestate
