#pragma once

#include "aoescape/core.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <vector>

namespace aoescape::mcp {

// MC+ parameters. gamma > 1 keeps every one-dimensional subproblem strictly
// convex on its branches under the 1/2-factor objective used throughout this
// module: L(beta) = 0.5 ||y - X beta||^2 + sum_j J(beta_j).
struct PenaltyMC {
  double lambda = 1.0;
  double gamma = 2.0;
};

double mcp_penalty(double t, const PenaltyMC& pen);

// Derivative of the penalty for t != 0 (throws at the kink).
double mcp_penalty_deriv(double t, const PenaltyMC& pen);

// argmin_b 0.5 (b - z)^2 + J(b): the MC+ threshold operator.
double cd_update(double z, const PenaltyMC& pen);

struct RegressionProblem {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;  // columns x_1..x_d
  bool standardized = false;

  int n() const { return static_cast<int>(y.size()); }
  int d() const { return static_cast<int>(X.cols()); }
};

double objective(const RegressionProblem& prob, const PenaltyMC& pen,
                 const Eigen::VectorXd& beta);

struct CdResult {
  Eigen::VectorXd beta;
  bool converged = false;
  long sweeps = 0;
};

// Cyclic coordinate descent with incremental residual maintenance; stops when
// the largest coefficient change in a sweep drops below tol.
CdResult coordinate_descent(const RegressionProblem& prob, const PenaltyMC& pen,
                            Eigen::VectorXd beta0, double tol = 1e-8,
                            int max_sweeps = 10000);

struct CorrelationSets {
  double rho_min = 0.3;
  std::vector<std::vector<int>> sets;  // E_j per column, symmetric, j excluded
};

CorrelationSets correlation_set(const RegressionProblem& prob, double rho_min);

enum class CaseId { zero, pos_inside, pos_outside, neg_inside, neg_outside };

// One branch assumption for beta_j in the exact two-variable solve:
// beta_j = psi + xi * v under the branch constants (C, r).
struct CaseSpec {
  CaseId id;
  double C = 0.0;
  double r = 0.0;
  double psi = 0.0;
  double xi = 0.0;
};

std::vector<CaseSpec> build_case_specs(int j, const Eigen::VectorXd& beta,
                                       const RegressionProblem& prob,
                                       const PenaltyMC& pen,
                                       const std::vector<int>& Ej);

// Half-open interval of v > 0 on which a fixed set of scaled coefficients
// still has an active (nonzero) penalty derivative. active_count refers to
// the smallest-|.| entries of the sorted scaled coefficients.
struct Interval {
  double lo;
  double hi;  // +inf for the last interval
  int active_count;
};

struct Partition {
  std::vector<double> sorted_betas;  // nonzero scaled betas, ascending |.|
  std::vector<Interval> intervals;   // disjoint cover of [0, inf)
};

Partition partition_intervals(const std::vector<double>& scaled_betas,
                              const PenaltyMC& pen);

// Scalar products that determine the two-variable subproblem at column j.
// Residual expansions keep every candidate evaluation O(|E_j|).
struct SubproblemContext {
  double beta_j;      // incumbent coefficient
  double rr;          // ||r||^2 with r = y - X beta
  double rx;          // x_j' r
  double rc;          // c' r
  double xc;          // x_j' c
  double cc;          // c' c
  std::vector<double> scaled;  // beta_k for k in E_j
  double penalty_rest;         // sum of J over coefficients outside {j} and E_j
};

// Root of the piecewise-linear stationarity equation for v on one interval,
// for the branch assumption of `spec` and the given sign of v. Returns
// nothing when the endpoint values do not bracket a root inside the interval.
std::optional<double> solve_v_on_interval(const Interval& interval,
                                          const CaseSpec& spec,
                                          const SubproblemContext& ctx,
                                          const Partition& part,
                                          const PenaltyMC& pen, int sign);

struct ScalingStep {
  double beta_j;
  double v;
  double objective;  // exact objective at the chosen point
};

// Exact minimization of the two-variable subproblem (beta_j, v): enumerates
// all stationarity candidates per branch and interval, non-differentiability
// points, and the incumbent, filters out branch-inconsistent roots, and keeps
// the objective minimizer. Never worse than the incumbent.
ScalingStep selective_scaling_step(int j, const Eigen::VectorXd& beta,
                                   const RegressionProblem& prob,
                                   const PenaltyMC& pen,
                                   const std::vector<int>& Ej);

// One pass of expanded coordinate steps over j = 1..d. sets == nullptr means
// every k != j participates in the scaling.
Eigen::VectorXd scaling_escape_sweep(const Eigen::VectorXd& beta,
                                     const RegressionProblem& prob,
                                     const PenaltyMC& pen,
                                     const CorrelationSets* sets);

double lambda_max(const RegressionProblem& prob);

struct GridConfig {
  int n_lambda = 50;
  int n_gamma = 8;
  double gamma_lo = 1.000001;
  double gamma_hi = 150.0;
  double lambda_frac = 0.01;
};

// Log-equispaced grids with exact endpoints; lambdas descend from lambda_max.
std::pair<std::vector<double>, std::vector<double>> make_grid(
    const RegressionProblem& prob, const GridConfig& cfg = {});

enum class Surface { A, B, C };

struct SurfacePoint {
  Eigen::VectorXd beta;
  double objective;
};

struct SurfaceSet {
  std::vector<double> lambda_grid;  // descending
  std::vector<double> gamma_grid;   // ascending
  // indexed [lambda][gamma]
  std::vector<std::vector<SurfacePoint>> A, B, C;
  std::vector<std::vector<Surface>> kept;  // B or C, the pointwise better
  std::vector<std::vector<double>> kept_objective;

  const SurfacePoint& kept_point(int li, int gi) const {
    return kept[li][gi] == Surface::B ? B[li][gi] : C[li][gi];
  }
};

struct SurfaceConfig {
  double cd_tol = 1e-8;
  int cd_max_sweeps = 10000;
  int escape_rounds = 5;   // escape-round cap per grid point; 0 disables escape
  double epsilon = 0.0;    // <= 0: scale-free default
};

// Warm-started grid traversal: lambda descending, gamma descending within each
// lambda column; warm starts come from the previous lambda on the designated
// source surface. Surface C reuses A's descent phase at each point.
SurfaceSet fit_surfaces(const RegressionProblem& prob,
                        const std::vector<double>& lambda_grid,
                        const std::vector<double>& gamma_grid, double rho_min,
                        const SurfaceConfig& cfg = {});

double pct_delta_L(double L_old, double L_new);

// Fraction of coefficients misclassified as zero/nonzero vs the truth
// (|b| < 1e-10 counts as zero).
double var_sel_error(const Eigen::VectorXd& beta_hat, const Eigen::VectorXd& beta_true);

// AR(1)-correlated Gaussian design, rho^|j-k| covariance, drawn row by row
// through the triangular recursion.
Eigen::MatrixXd ar1_design(int n, int d, double rho, std::uint64_t seed);

// The simulation benchmark: n x d AR(1) design with rho = 0.7, ten unit
// coefficients 20 apart, noise sd chosen for signal-to-noise ratio 3,
// standardized on output. Returns the problem and the generating beta.
std::pair<RegressionProblem, Eigen::VectorXd> simulate_M1(int n = 100, int d = 200,
                                                          std::uint64_t seed = 0);

}  // namespace aoescape::mcp
