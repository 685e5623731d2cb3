#include "aoescape/toy_demo.hpp"

#include <algorithm>
#include <cmath>

namespace aoescape {
namespace {

double clamp(double t, double lo, double hi) { return std::min(std::max(t, lo), hi); }

// Exact minimizer of f(x, y_fixed) over x in [-box, box]. In x the objective
// is (1 - y^2) x^2 - 2xy + y^2: a quadratic whose curvature sign decides
// between the clamped stationary point and a box endpoint.
double best_x_given_y(double y, double box) {
  double best = -box;
  double best_f = toy_objective(-box, y);
  auto consider = [&](double x) {
    const double fx = toy_objective(x, y);
    if (fx < best_f) {
      best_f = fx;
      best = x;
    }
  };
  consider(box);
  const double curv = 1.0 - y * y;
  if (curv > 0) consider(clamp(y / curv, -box, box));
  return best;
}

}  // namespace

ToyDemoResult run_toy_demo(double x0, double y0, double box, const EscapeConfig& cfg) {
  auto loss = [](const Vector& z) { return toy_objective(z(0), z(1)); };

  PhaseStep ao = [box](const Vector& start) {
    PhaseResult r;
    r.x = start;
    double prev = toy_objective(r.x(0), r.x(1));
    for (int sweep = 0; sweep < 1000; ++sweep) {
      r.x(0) = best_x_given_y(r.x(1), box);
      r.x(1) = best_x_given_y(r.x(0), box);  // f is symmetric in its arguments
      ++r.iterations;
      const double cur = toy_objective(r.x(0), r.x(1));
      if (std::abs(prev - cur) <= 1e-10 * (1.0 + std::abs(prev))) break;
      prev = cur;
    }
    return r;
  };

  // Escape space {x = y}: f(t,t) = -t^4, minimized exactly over the box by
  // scanning the stationary point and endpoints.
  PhaseStep escape = [box](const Vector& start) {
    PhaseResult r;
    r.x = start;
    r.iterations = 1;
    double best_f = toy_objective(start(0), start(1));
    for (double t : {-box, 0.0, box}) {
      const double ft = toy_objective(t, t);
      if (ft < best_f) {
        best_f = ft;
        r.x(0) = t;
        r.x(1) = t;
      }
    }
    return r;
  };

  Vector start(2);
  start << x0, y0;

  ToyDemoResult out;
  out.ao_value = loss(ao(start).x);
  auto [point, report] = escape_loop(loss, ao, escape, start, cfg);
  out.point = std::move(point);
  out.value = loss(out.point);
  out.report = std::move(report);
  return out;
}

}  // namespace aoescape
