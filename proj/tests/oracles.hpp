// Independent reference implementations used only by the tests. Everything
// here is deliberately brute force so the library is checked against code
// that shares none of its machinery.
#pragma once

#include "aoescape/matfac.hpp"
#include "aoescape/mcp.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace oracles {

// argmin over b in [-5, 5] (step 1e-5) of 0.5 (b - z)^2 + J(b).
inline double grid_threshold(double z, const aoescape::mcp::PenaltyMC& pen) {
  auto obj = [&](double b) {
    return 0.5 * (b - z) * (b - z) + aoescape::mcp::mcp_penalty(b, pen);
  };
  double best_b = -5.0, best = obj(-5.0);
  for (long i = 1; i <= 1000000; ++i) {
    const double b = -5.0 + 1e-5 * static_cast<double>(i);
    const double o = obj(b);
    if (o < best) {
      best = o;
      best_b = b;
    }
  }
  return best_b;
}

// One random subproblem instance for the exact two-variable solver.
struct ScalingInstance {
  aoescape::mcp::RegressionProblem prob;
  aoescape::mcp::PenaltyMC pen;
  Eigen::VectorXd beta;
  int j = 0;
  std::vector<int> Ej;
};

inline ScalingInstance random_scaling_instance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> dim(2, 6);
  std::uniform_real_distribution<double> lam(0.05, 1.0);
  std::uniform_real_distribution<double> gam(1.1, 50.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  ScalingInstance inst;
  const int d = dim(rng);
  const int n = 8 + static_cast<int>(rng() % 8);
  Eigen::MatrixXd X(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) X(i, j) = gauss(rng);
  // Mix columns to create correlation, then center and normalize.
  for (int j = 1; j < d; ++j)
    if (unif(rng) < 0.6) X.col(j) = 0.6 * X.col(j - 1) + 0.8 * X.col(j);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y(i) = gauss(rng);
  auto scale = [](Eigen::VectorXd v) {
    v.array() -= v.mean();
    return Eigen::VectorXd(v / v.norm());
  };
  inst.prob.y = scale(y);
  inst.prob.X.resize(n, d);
  for (int j = 0; j < d; ++j) inst.prob.X.col(j) = scale(X.col(j));
  inst.prob.standardized = true;

  inst.pen.lambda = lam(rng);
  inst.pen.gamma = gam(rng);
  inst.j = static_cast<int>(rng() % d);
  inst.beta.resize(d);
  for (int j = 0; j < d; ++j) {
    const double coin = unif(rng);
    inst.beta(j) = coin < 0.35 ? 0.0 : 2.0 * gauss(rng);
  }
  std::vector<int> others;
  for (int k = 0; k < d; ++k)
    if (k != inst.j) others.push_back(k);
  std::shuffle(others.begin(), others.end(), rng);
  const int sz = static_cast<int>(rng() % std::min<std::size_t>(4, others.size() + 1));
  inst.Ej.assign(others.begin(), others.begin() + sz);
  std::sort(inst.Ej.begin(), inst.Ej.end());
  return inst;
}

// Exact objective of the two-variable subproblem at (b, v), computed from
// scratch (no residual expansions).
inline double scaling_subproblem_objective(const ScalingInstance& inst, double b,
                                           double v) {
  Eigen::VectorXd beta = inst.beta;
  beta(inst.j) = b;
  for (int k : inst.Ej) beta(k) = v * inst.beta(k);
  return aoescape::mcp::objective(inst.prob, inst.pen, beta);
}

// Brute-force minimum over (b, v) in [-3, 3]^2 (step 2e-3), then local
// coordinate-wise fine scans around the grid argmin. Only objective
// evaluations are used, so the refinement is implementation independent.
inline double scaling_grid_min(const ScalingInstance& inst) {
  const int N = 3001;  // -3 .. 3 step 2e-3
  const double step = 2e-3;

  // Separable pieces: obj(b, v) = 0.5 b^2 + J(b) + b * t(v) + const(v), with
  // t(v) = v * (x_j' c) - x_j' (y - d) and d the untouched columns.
  const auto& prob = inst.prob;
  Eigen::VectorXd d_resid = prob.y;
  std::vector<bool> in_set(prob.d(), false);
  in_set[inst.j] = true;
  for (int k : inst.Ej) in_set[k] = true;
  double penalty_rest = 0.0;
  for (int l = 0; l < prob.d(); ++l) {
    if (!in_set[l]) {
      d_resid -= inst.beta(l) * prob.X.col(l);
      penalty_rest += aoescape::mcp::mcp_penalty(inst.beta(l), inst.pen);
    }
  }
  Eigen::VectorXd c = Eigen::VectorXd::Zero(prob.n());
  for (int k : inst.Ej) c += inst.beta(k) * prob.X.col(k);
  const double dd = d_resid.squaredNorm();
  const double xd = prob.X.col(inst.j).dot(d_resid);
  const double cd = c.dot(d_resid);
  const double xc = prob.X.col(inst.j).dot(c);
  const double cc = c.squaredNorm();

  std::vector<double> bgrid(N), gb(N);
  for (int i = 0; i < N; ++i) {
    const double b = -3.0 + step * i;
    bgrid[i] = b;
    gb[i] = 0.5 * b * b + aoescape::mcp::mcp_penalty(b, inst.pen);
  }

  double best = std::numeric_limits<double>::infinity();
  double best_b = 0.0, best_v = 1.0;
  for (int iv = 0; iv < N; ++iv) {
    const double v = -3.0 + step * iv;
    double pen_scaled = 0.0;
    for (int k : inst.Ej)
      pen_scaled += aoescape::mcp::mcp_penalty(v * inst.beta(k), inst.pen);
    const double constv = 0.5 * (dd - 2.0 * v * cd + v * v * cc) + pen_scaled +
                          penalty_rest;
    const double t = v * xc - xd;
    double row_best = gb[0] + bgrid[0] * t;
    int row_arg = 0;
    for (int ib = 1; ib < N; ++ib) {
      const double val = gb[ib] + bgrid[ib] * t;
      if (val < row_best) {
        row_best = val;
        row_arg = ib;
      }
    }
    if (row_best + constv < best) {
      best = row_best + constv;
      best_b = bgrid[row_arg];
      best_v = v;
    }
  }

  // Local refinement by alternating fine scans around the grid argmin.
  double width = step;
  for (int pass = 0; pass < 4; ++pass) {
    const double fine = width / 50.0;
    double lo = best_b - width;
    for (int i = 0; i <= 100; ++i) {
      const double b = lo + fine * i;
      const double o = scaling_subproblem_objective(inst, b, best_v);
      if (o < best) {
        best = o;
        best_b = b;
      }
    }
    lo = best_v - width;
    for (int i = 0; i <= 100; ++i) {
      const double v = lo + fine * i;
      const double o = scaling_subproblem_objective(inst, best_b, v);
      if (o < best) {
        best = o;
        best_v = v;
      }
    }
    width = fine * 2.0;
  }
  return best;
}

// Proximal-gradient LASSO for 0.5 ||y - X b||^2 + lambda ||b||_1.
inline Eigen::VectorXd ista_lasso(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                                  double lambda, int iters = 200000,
                                  double tol = 1e-12) {
  const Eigen::MatrixXd G = X.transpose() * X;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
  const double L = std::max(es.eigenvalues().maxCoeff(), 1e-12);
  const double step = 1.0 / L;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(X.cols());
  const Eigen::VectorXd Xty = X.transpose() * y;
  for (int it = 0; it < iters; ++it) {
    Eigen::VectorXd g = G * b - Xty;
    Eigen::VectorXd next(b.size());
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      const double z = b(j) - step * g(j);
      const double a = std::abs(z) - step * lambda;
      next(j) = a > 0 ? (z > 0 ? a : -a) : 0.0;
    }
    const double change = (next - b).cwiseAbs().maxCoeff();
    b = std::move(next);
    if (change < tol) break;
  }
  return b;
}

// Term-by-term recomputation of the factorization loss.
inline double mf_loss_direct(const aoescape::mf::FactorModel& model,
                             const aoescape::mf::RatingSet& data) {
  double loss = 0.0;
  for (const auto& r : data.triples()) {
    double pred = 0.0;
    for (int k = 0; k < model.rank(); ++k) pred += model.P(r.user, k) * model.Q(r.item, k);
    const double e = r.value - pred;
    loss += e * e;
  }
  double pp = 0.0, qq = 0.0;
  for (Eigen::Index i = 0; i < model.P.rows(); ++i)
    for (int k = 0; k < model.rank(); ++k) pp += model.P(i, k) * model.P(i, k);
  for (Eigen::Index i = 0; i < model.Q.rows(); ++i)
    for (int k = 0; k < model.rank(); ++k) qq += model.Q(i, k) * model.Q(i, k);
  return loss + model.lambda * (pp + model.eta * qq);
}

// Loss of one user/item row after stepping alpha along w, everything else
// fixed; mirrors the greedy objective without using the library internals.
inline double row_step_loss(const aoescape::mf::FactorModel& model,
                            const aoescape::mf::RatingSet& data, int index,
                            bool user_row, const Eigen::VectorXd& w, double alpha) {
  aoescape::mf::FactorModel m = model;
  if (user_row)
    m.P.row(index) += alpha * w.transpose();
  else
    m.Q.row(index) += alpha * w.transpose();
  return aoescape::mf::mf_loss(m, data);
}

inline double rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double denom = std::max(1e-12, std::max(a.norm(), b.norm()));
  return (a - b).norm() / denom;
}

}  // namespace oracles
