#pragma once

#include <Eigen/Core>

#include <functional>
#include <utility>
#include <vector>

namespace aoescape {

using Vector = Eigen::VectorXd;

// A scalar objective over a flat parameter vector. The gradient is optional;
// quasi_newton_minimize falls back to central differences when it is absent.
struct Objective {
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> gradient;
};

// Central-difference gradient, (f(x + h e_i) - f(x - h e_i)) / (2h) per coordinate.
Vector finite_diff_gradient(const std::function<double(const Vector&)>& f,
                            const Vector& x, double h = 1e-6);

// The saddle of the motivating two-variable example: (x - y)^2 - x^2 y^2.
double toy_objective(double x, double y);

struct QuasiNewtonConfig {
  double grad_tol = 1e-8;
  int max_iter = 200;
  double armijo_c = 1e-4;       // sufficient-decrease constant
  double backtrack_factor = 0.5;
  int max_backtracks = 60;
  double fd_step = 1e-6;        // used only when no analytic gradient is supplied
};

struct QuasiNewtonResult {
  Vector x;
  double value = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;   // grad_norm <= grad_tol
  bool stalled = false;     // line search could not find a decreasing step
};

// BFGS with an inverse-Hessian approximation (identity start) and Armijo
// backtracking. Updates are skipped when s'y <= 1e-10.
QuasiNewtonResult quasi_newton_minimize(const Objective& f, const Vector& x0,
                                        const QuasiNewtonConfig& cfg = {});

struct EscapeConfig {
  // epsilon <= 0 means "resolve at runtime" to 1e-6 * (1 + |initial loss|).
  double epsilon = 0.0;
  int max_rounds = 20;
  double ao_tol = 1e-8;
  double escape_tol = 1e-8;
};

enum class EscapeTermination { improvement_below_epsilon, round_cap };

struct EscapeReport {
  struct Round {
    double loss_after_ao;
    double loss_after_escape;
  };
  std::vector<Round> rounds;
  long total_ao_iterations = 0;
  long total_escape_iterations = 0;
  EscapeTermination terminated_by = EscapeTermination::improvement_below_epsilon;
};

// One phase (AO or escape search) run to its own convergence from a point.
// Must be weakly descending: loss(x) <= loss(input).
struct PhaseResult {
  Vector x;
  long iterations = 0;
};
using PhaseStep = std::function<PhaseResult(const Vector&)>;

// The outer escape recursion, unrolled: run AO to convergence, search the
// alternate subspace, repeat from the improved point while the search gains
// more than epsilon, up to max_rounds rounds.
std::pair<Vector, EscapeReport> escape_loop(
    const std::function<double(const Vector&)>& loss, const PhaseStep& ao_phase,
    const PhaseStep& escape_phase, const Vector& start,
    const EscapeConfig& cfg = {});

}  // namespace aoescape
