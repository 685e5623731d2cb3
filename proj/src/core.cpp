#include "aoescape/core.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace aoescape {

Vector finite_diff_gradient(const std::function<double(const Vector&)>& f,
                            const Vector& x, double h) {
  if (h <= 0) throw std::invalid_argument("finite_diff_gradient: h must be > 0");
  Vector g(x.size());
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe(i) = x(i) + h;
    const double fp = f(probe);
    probe(i) = x(i) - h;
    const double fm = f(probe);
    probe(i) = x(i);
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

double toy_objective(double x, double y) {
  const double diff = x - y;
  return diff * diff - x * x * y * y;
}

QuasiNewtonResult quasi_newton_minimize(const Objective& f, const Vector& x0,
                                        const QuasiNewtonConfig& cfg) {
  const Eigen::Index n = x0.size();
  auto grad = [&](const Vector& x) {
    return f.gradient ? f.gradient(x) : finite_diff_gradient(f.value, x, cfg.fd_step);
  };

  QuasiNewtonResult res;
  res.x = x0;
  res.value = f.value(x0);

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  Vector g = grad(res.x);
  res.grad_norm = g.norm();

  for (int it = 0; it < cfg.max_iter; ++it) {
    if (res.grad_norm <= cfg.grad_tol) {
      res.converged = true;
      break;
    }
    Vector p = -(H * g);
    double slope = g.dot(p);
    if (!(slope < 0)) {
      // H lost positive definiteness numerically; restart from steepest descent.
      H.setIdentity();
      p = -g;
      slope = g.dot(p);
      if (!(slope < 0)) break;  // zero gradient within rounding
    }

    double step = 1.0;
    bool accepted = false;
    Vector x_new;
    double f_new = res.value;
    for (int bt = 0; bt < cfg.max_backtracks; ++bt) {
      x_new = res.x + step * p;
      f_new = f.value(x_new);
      if (f_new <= res.value + cfg.armijo_c * step * slope) {
        accepted = true;
        break;
      }
      step *= cfg.backtrack_factor;
    }
    if (!accepted) {
      res.stalled = true;
      break;
    }

    Vector g_new = grad(x_new);
    Vector s = x_new - res.x;
    Vector yv = g_new - g;
    const double sy = s.dot(yv);
    if (sy > 1e-10) {
      const double rho = 1.0 / sy;
      Vector Hy = H * yv;
      const double yHy = yv.dot(Hy);
      // BFGS inverse update: H <- (I - rho s y')H(I - rho y s') + rho s s'
      H.noalias() -= rho * (Hy * s.transpose() + s * Hy.transpose());
      H.noalias() += (rho * rho * yHy + rho) * (s * s.transpose());
    }

    res.x = std::move(x_new);
    res.value = f_new;
    g = std::move(g_new);
    res.grad_norm = g.norm();
    res.iterations = it + 1;
  }
  res.converged = res.grad_norm <= cfg.grad_tol;
  return res;
}

std::pair<Vector, EscapeReport> escape_loop(
    const std::function<double(const Vector&)>& loss, const PhaseStep& ao_phase,
    const PhaseStep& escape_phase, const Vector& start, const EscapeConfig& cfg) {
  if (cfg.max_rounds < 1) throw std::invalid_argument("escape_loop: max_rounds must be >= 1");

  const double eps =
      cfg.epsilon > 0 ? cfg.epsilon : 1e-6 * (1.0 + std::abs(loss(start)));

  EscapeReport report;
  Vector x = start;
  for (int round = 0; round < cfg.max_rounds; ++round) {
    PhaseResult ao = ao_phase(x);
    report.total_ao_iterations += ao.iterations;
    const double loss_ao = loss(ao.x);

    PhaseResult esc = escape_phase(ao.x);
    report.total_escape_iterations += esc.iterations;
    const double loss_esc = loss(esc.x);
    report.rounds.push_back({loss_ao, loss_esc});

    x = std::move(esc.x);
    if (!(loss_esc < loss_ao - eps)) {
      report.terminated_by = EscapeTermination::improvement_below_epsilon;
      return {std::move(x), std::move(report)};
    }
  }
  report.terminated_by = EscapeTermination::round_cap;
  return {std::move(x), std::move(report)};
}

}  // namespace aoescape
