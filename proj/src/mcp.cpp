#include "aoescape/mcp.hpp"

#include "aoescape/data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace aoescape::mcp {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kZeroTol = 1e-10;  // zero-detection threshold for coefficients
}  // namespace

double mcp_penalty(double t, const PenaltyMC& pen) {
  const double a = std::abs(t);
  if (a <= pen.gamma * pen.lambda) return pen.lambda * a - t * t / (2.0 * pen.gamma);
  return 0.5 * pen.gamma * pen.lambda * pen.lambda;
}

double mcp_penalty_deriv(double t, const PenaltyMC& pen) {
  if (t == 0.0) throw std::invalid_argument("mcp_penalty_deriv: not differentiable at 0");
  const double a = std::abs(t);
  if (a > pen.gamma * pen.lambda) return 0.0;
  return pen.lambda * (t > 0 ? 1.0 : -1.0) - t / pen.gamma;
}

double cd_update(double z, const PenaltyMC& pen) {
  if (pen.gamma <= 1.0) throw std::invalid_argument("cd_update: gamma must be > 1");
  const double a = std::abs(z);
  if (a <= pen.lambda) return 0.0;
  if (a <= pen.gamma * pen.lambda) {
    const double s = z > 0 ? 1.0 : -1.0;
    return s * (a - pen.lambda) / (1.0 - 1.0 / pen.gamma);
  }
  return z;
}

double objective(const RegressionProblem& prob, const PenaltyMC& pen,
                 const Eigen::VectorXd& beta) {
  double obj = 0.5 * (prob.y - prob.X * beta).squaredNorm();
  for (int j = 0; j < prob.d(); ++j) obj += mcp_penalty(beta(j), pen);
  return obj;
}

CdResult coordinate_descent(const RegressionProblem& prob, const PenaltyMC& pen,
                            Eigen::VectorXd beta0, double tol, int max_sweeps) {
  const int d = prob.d();
  if (beta0.size() != d) throw std::invalid_argument("coordinate_descent: beta size mismatch");
  CdResult out;
  out.beta = std::move(beta0);
  Eigen::VectorXd r = prob.y - prob.X * out.beta;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (int j = 0; j < d; ++j) {
      const double old = out.beta(j);
      const double z = prob.X.col(j).dot(r) + old;  // unit-norm columns
      const double next = cd_update(z, pen);
      if (next != old) {
        r.noalias() += (old - next) * prob.X.col(j);
        out.beta(j) = next;
        max_change = std::max(max_change, std::abs(next - old));
      }
    }
    ++out.sweeps;
    if (max_change < tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

CorrelationSets correlation_set(const RegressionProblem& prob, double rho_min) {
  const int d = prob.d();
  CorrelationSets out;
  out.rho_min = rho_min;
  out.sets.resize(d);
  for (int j = 0; j < d; ++j) {
    for (int k = j + 1; k < d; ++k) {
      if (std::abs(prob.X.col(j).dot(prob.X.col(k))) > rho_min) {
        out.sets[j].push_back(k);
        out.sets[k].push_back(j);
      }
    }
  }
  for (auto& s : out.sets) std::sort(s.begin(), s.end());
  return out;
}

namespace {

// Scalar products shared by every candidate evaluation at column j.
SubproblemContext make_context(int j, const Eigen::VectorXd& beta,
                               const RegressionProblem& prob, const PenaltyMC& pen,
                               const std::vector<int>& Ej, const Eigen::VectorXd& r,
                               const Eigen::VectorXd& c) {
  SubproblemContext ctx;
  ctx.beta_j = beta(j);
  ctx.rr = r.squaredNorm();
  ctx.rx = prob.X.col(j).dot(r);
  ctx.rc = c.dot(r);
  ctx.xc = prob.X.col(j).dot(c);
  ctx.cc = c.squaredNorm();
  ctx.scaled.reserve(Ej.size());
  for (int k : Ej) ctx.scaled.push_back(beta(k));
  ctx.penalty_rest = 0.0;
  std::vector<bool> in_set(prob.d(), false);
  in_set[j] = true;
  for (int k : Ej) in_set[k] = true;
  for (int l = 0; l < prob.d(); ++l)
    if (!in_set[l]) ctx.penalty_rest += mcp_penalty(beta(l), pen);
  return ctx;
}

// Exact objective at (b, v) through the residual expansion
// res = r + (beta_j - b) x_j + (1 - v) c, with ||x_j|| = 1.
double candidate_objective(const SubproblemContext& ctx, const PenaltyMC& pen,
                           double b, double v) {
  const double db = ctx.beta_j - b;
  const double dv = 1.0 - v;
  const double res2 = ctx.rr + db * db + dv * dv * ctx.cc + 2.0 * db * ctx.rx +
                      2.0 * dv * ctx.rc + 2.0 * db * dv * ctx.xc;
  double obj = 0.5 * res2 + mcp_penalty(b, pen) + ctx.penalty_rest;
  for (double bk : ctx.scaled) obj += mcp_penalty(v * bk, pen);
  return obj;
}

bool case_consistent(CaseId id, double b, double gl) {
  switch (id) {
    case CaseId::zero:
      return true;  // b == 0 by construction
    case CaseId::pos_inside:
      return b > 0 && b <= gl;
    case CaseId::neg_inside:
      return b < 0 && b >= -gl;
    case CaseId::pos_outside:
      return b > gl;
    case CaseId::neg_outside:
      return b < -gl;
  }
  return false;
}

std::vector<CaseSpec> make_cases(const SubproblemContext& ctx, const PenaltyMC& pen) {
  // x_j'(y - d) = rx + beta_j + xc, x_j'c = xc.
  const double xj_yd = ctx.rx + ctx.beta_j + ctx.xc;
  auto spec = [&](CaseId id, double C, double r) {
    CaseSpec s{id, C, r, 0.0, 0.0};
    s.psi = (xj_yd - C) / (1.0 - r);
    s.xi = -ctx.xc / (1.0 - r);
    return s;
  };
  std::vector<CaseSpec> cases;
  cases.push_back(CaseSpec{CaseId::zero, 0.0, 0.0, 0.0, 0.0});
  // Interior branches: J'(b) = lambda sgn(b) - b/gamma, so the linear factor
  // on b is (1 - 1/gamma) for both signs; only the constant term flips.
  cases.push_back(spec(CaseId::pos_inside, pen.lambda, 1.0 / pen.gamma));
  cases.push_back(spec(CaseId::pos_outside, 0.0, 0.0));
  cases.push_back(spec(CaseId::neg_inside, -pen.lambda, 1.0 / pen.gamma));
  cases.push_back(spec(CaseId::neg_outside, 0.0, 0.0));
  return cases;
}

}  // namespace

std::vector<CaseSpec> build_case_specs(int j, const Eigen::VectorXd& beta,
                                       const RegressionProblem& prob,
                                       const PenaltyMC& pen,
                                       const std::vector<int>& Ej) {
  Eigen::VectorXd r = prob.y - prob.X * beta;
  Eigen::VectorXd c = Eigen::VectorXd::Zero(prob.n());
  for (int k : Ej) c.noalias() += beta(k) * prob.X.col(k);
  SubproblemContext ctx = make_context(j, beta, prob, pen, Ej, r, c);
  return make_cases(ctx, pen);
}

Partition partition_intervals(const std::vector<double>& scaled_betas,
                              const PenaltyMC& pen) {
  Partition part;
  for (double b : scaled_betas)
    if (b != 0.0) part.sorted_betas.push_back(b);
  if (part.sorted_betas.empty()) return part;
  std::sort(part.sorted_betas.begin(), part.sorted_betas.end(),
            [](double a, double b) { return std::abs(a) < std::abs(b); });
  const int K = static_cast<int>(part.sorted_betas.size());
  const double gl = pen.gamma * pen.lambda;
  // I_K = [0, gl/|b_(K)|): every penalty derivative still active.
  part.intervals.push_back({0.0, gl / std::abs(part.sorted_betas[K - 1]), K});
  for (int k = K; k > 1; --k) {
    part.intervals.push_back({gl / std::abs(part.sorted_betas[k - 1]),
                              gl / std::abs(part.sorted_betas[k - 2]), k - 1});
  }
  part.intervals.push_back({gl / std::abs(part.sorted_betas[0]), kInf, 0});
  return part;
}

std::optional<double> solve_v_on_interval(const Interval& interval,
                                          const CaseSpec& spec,
                                          const SubproblemContext& ctx,
                                          const Partition& part,
                                          const PenaltyMC& pen, int sign) {
  // Equation (A v - B = 0) on the interval, with the first active_count
  // sorted coefficients contributing their linear penalty derivative terms.
  double sum_abs = 0.0, sum_sq = 0.0;
  for (int t = 0; t < interval.active_count; ++t) {
    const double b = part.sorted_betas[t];
    sum_abs += std::abs(b);
    sum_sq += b * b;
  }
  const double c_yd = ctx.rc + ctx.beta_j * ctx.xc + ctx.cc;  // c'(y - d)
  const double A = ctx.cc + spec.xi * ctx.xc - sum_sq / pen.gamma;
  const double B = c_yd - spec.psi * ctx.xc - sign * pen.lambda * sum_abs;

  double lo = interval.lo, hi = interval.hi;
  if (sign < 0) {  // reflected interval (-hi, -lo]
    lo = -interval.hi;
    hi = -interval.lo;
  }
  auto lhs = [&](double v) {
    if (std::isinf(v)) {
      if (A != 0.0) return v > 0 ? (A > 0 ? kInf : -kInf) : (A > 0 ? -kInf : kInf);
      return -B;
    }
    return A * v - B;
  };
  const double lo_val = lhs(lo);
  const double hi_val = lhs(hi);
  if (lo_val == 0.0) return lo;
  if (!std::isinf(hi) && hi_val == 0.0) return hi;
  if (!(lo_val * hi_val < 0.0)) return std::nullopt;  // no sign change
  if (A == 0.0) return std::nullopt;
  return B / A;
}

namespace {

ScalingStep selective_scaling_step_impl(int j, const Eigen::VectorXd& beta,
                                        const RegressionProblem& prob,
                                        const PenaltyMC& pen,
                                        const std::vector<int>& Ej,
                                        const Eigen::VectorXd& r,
                                        const Eigen::VectorXd& c) {
  SubproblemContext ctx = make_context(j, beta, prob, pen, Ej, r, c);
  const double gl = pen.gamma * pen.lambda;

  ScalingStep best{ctx.beta_j, 1.0, candidate_objective(ctx, pen, ctx.beta_j, 1.0)};
  auto consider = [&](double b, double v) {
    const double obj = candidate_objective(ctx, pen, b, v);
    if (obj < best.objective) best = {b, v, obj};
  };

  const double z_incumbent = ctx.rx + ctx.beta_j;  // partial residual at v = 1
  if (Ej.empty() || ctx.cc <= 0.0) {
    // Scaling is vacuous (or v structurally indeterminate): plain descent step.
    consider(cd_update(z_incumbent, pen), 1.0);
    return best;
  }

  consider(cd_update(z_incumbent, pen), 1.0);

  // x_j'(y - d - v c) as a function of v; exact beta_j for any fixed v.
  const double xj_yd = ctx.rx + ctx.beta_j + ctx.xc;
  auto best_b_at = [&](double v) { return cd_update(xj_yd - v * ctx.xc, pen); };

  consider(best_b_at(0.0), 0.0);  // v = 0 zeroes every scaled coefficient

  Partition part = partition_intervals(ctx.scaled, pen);
  if (part.intervals.empty()) {
    // All scaled coefficients are zero; rescaling cannot change them.
    return best;
  }

  // Non-differentiability candidates: v on a region boundary with the exact
  // beta_j for that v, and beta_j on its own region boundary.
  for (const Interval& iv : part.intervals) {
    for (double edge : {iv.lo, iv.hi}) {
      if (std::isinf(edge) || edge == 0.0) continue;
      consider(best_b_at(edge), edge);
      consider(best_b_at(-edge), -edge);
    }
  }

  std::vector<CaseSpec> cases = make_cases(ctx, pen);
  cases.push_back(CaseSpec{CaseId::pos_outside, 0.0, 0.0, gl, 0.0});   // beta_j = +gl
  cases.push_back(CaseSpec{CaseId::neg_outside, 0.0, 0.0, -gl, 0.0});  // beta_j = -gl
  const size_t n_branch_cases = 5;  // the first five carry a region assumption

  for (size_t ci = 0; ci < cases.size(); ++ci) {
    const CaseSpec& cs = cases[ci];
    const bool boundary = ci >= n_branch_cases;
    for (const Interval& iv : part.intervals) {
      for (int sign : {+1, -1}) {
        std::optional<double> v = solve_v_on_interval(iv, cs, ctx, part, pen, sign);
        if (!v) continue;
        const double b = cs.psi + cs.xi * (*v);
        if (!boundary && !case_consistent(cs.id, b, gl)) continue;
        consider(b, *v);
      }
    }
  }
  return best;
}

}  // namespace

ScalingStep selective_scaling_step(int j, const Eigen::VectorXd& beta,
                                   const RegressionProblem& prob,
                                   const PenaltyMC& pen,
                                   const std::vector<int>& Ej) {
  Eigen::VectorXd r = prob.y - prob.X * beta;
  Eigen::VectorXd c = Eigen::VectorXd::Zero(prob.n());
  for (int k : Ej) c.noalias() += beta(k) * prob.X.col(k);
  return selective_scaling_step_impl(j, beta, prob, pen, Ej, r, c);
}

Eigen::VectorXd scaling_escape_sweep(const Eigen::VectorXd& beta,
                                     const RegressionProblem& prob,
                                     const PenaltyMC& pen,
                                     const CorrelationSets* sets) {
  const int d = prob.d();
  Eigen::VectorXd b = beta;
  Eigen::VectorXd r = prob.y - prob.X * b;
  std::vector<int> all;
  if (!sets) {
    all.resize(d);
    for (int k = 0; k < d; ++k) all[k] = k;
  }
  Eigen::VectorXd c(prob.n());
  for (int j = 0; j < d; ++j) {
    std::vector<int> ej_all;
    const std::vector<int>* Ej;
    if (sets) {
      Ej = &sets->sets[j];
    } else {
      ej_all = all;
      ej_all.erase(ej_all.begin() + j);
      Ej = &ej_all;
    }
    c.setZero();
    for (int k : *Ej) c.noalias() += b(k) * prob.X.col(k);
    ScalingStep step = selective_scaling_step_impl(j, b, prob, pen, *Ej, r, c);
    if (step.beta_j == b(j) && step.v == 1.0) continue;
    r.noalias() += (b(j) - step.beta_j) * prob.X.col(j) + (1.0 - step.v) * c;
    b(j) = step.beta_j;
    for (int k : *Ej) b(k) *= step.v;
  }
  return b;
}

double lambda_max(const RegressionProblem& prob) {
  double lm = 0.0;
  for (int j = 0; j < prob.d(); ++j)
    lm = std::max(lm, std::abs(prob.X.col(j).dot(prob.y)));
  return lm;
}

std::pair<std::vector<double>, std::vector<double>> make_grid(
    const RegressionProblem& prob, const GridConfig& cfg) {
  const double lm = lambda_max(prob);
  std::vector<double> lambdas(cfg.n_lambda), gammas(cfg.n_gamma);
  for (int i = 0; i < cfg.n_lambda; ++i) {
    const double t = cfg.n_lambda > 1 ? static_cast<double>(i) / (cfg.n_lambda - 1) : 0.0;
    lambdas[i] = lm * std::pow(cfg.lambda_frac, t);
  }
  if (cfg.n_lambda > 1) lambdas.back() = lm * cfg.lambda_frac;  // exact endpoint
  for (int i = 0; i < cfg.n_gamma; ++i) {
    const double t = cfg.n_gamma > 1 ? static_cast<double>(i) / (cfg.n_gamma - 1) : 0.0;
    gammas[i] = cfg.gamma_lo * std::pow(cfg.gamma_hi / cfg.gamma_lo, t);
  }
  if (cfg.n_gamma > 1) gammas.back() = cfg.gamma_hi;
  return {std::move(lambdas), std::move(gammas)};
}

namespace {

// Escape rounds at one grid point: sweep of exact scaling steps, then
// descent back to convergence, while the gain exceeds epsilon.
SurfacePoint escape_fit(Eigen::VectorXd beta, const RegressionProblem& prob,
                        const PenaltyMC& pen, const CorrelationSets& sets,
                        const SurfaceConfig& cfg) {
  double L = objective(prob, pen, beta);
  const double eps = cfg.epsilon > 0 ? cfg.epsilon : 1e-6 * (1.0 + std::abs(L));
  for (int round = 0; round < cfg.escape_rounds; ++round) {
    Eigen::VectorXd next = scaling_escape_sweep(beta, prob, pen, &sets);
    next = coordinate_descent(prob, pen, std::move(next), cfg.cd_tol, cfg.cd_max_sweeps).beta;
    const double L2 = objective(prob, pen, next);
    if (L2 <= L) {
      beta = std::move(next);
      if (!(L2 < L - eps)) {
        L = L2;
        break;
      }
      L = L2;
    } else {
      break;
    }
  }
  return {std::move(beta), L};
}

}  // namespace

SurfaceSet fit_surfaces(const RegressionProblem& prob,
                        const std::vector<double>& lambda_grid,
                        const std::vector<double>& gamma_grid, double rho_min,
                        const SurfaceConfig& cfg) {
  if (lambda_grid.empty() || gamma_grid.empty())
    throw std::invalid_argument("fit_surfaces: empty grid");
  const int L = static_cast<int>(lambda_grid.size());
  const int G = static_cast<int>(gamma_grid.size());
  CorrelationSets sets = correlation_set(prob, rho_min);

  SurfaceSet out;
  out.lambda_grid = lambda_grid;
  out.gamma_grid = gamma_grid;
  auto alloc = [&](std::vector<std::vector<SurfacePoint>>& s) {
    s.assign(L, std::vector<SurfacePoint>(G));
  };
  alloc(out.A);
  alloc(out.B);
  alloc(out.C);
  out.kept.assign(L, std::vector<Surface>(G, Surface::B));
  out.kept_objective.assign(L, std::vector<double>(G, 0.0));

  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(prob.d());
  for (int li = 0; li < L; ++li) {
    for (int gi = G - 1; gi >= 0; --gi) {  // most convex gamma first
      const PenaltyMC pen{lambda_grid[li], gamma_grid[gi]};
      const Eigen::VectorXd& warm_a = li > 0 ? out.A[li - 1][gi].beta : zero;
      Eigen::VectorXd beta_a =
          coordinate_descent(prob, pen, warm_a, cfg.cd_tol, cfg.cd_max_sweeps).beta;
      out.A[li][gi] = {beta_a, objective(prob, pen, beta_a)};

      if (cfg.escape_rounds > 0) {
        const Eigen::VectorXd& warm_b = li > 0 ? out.B[li - 1][gi].beta : zero;
        Eigen::VectorXd beta_b =
            coordinate_descent(prob, pen, warm_b, cfg.cd_tol, cfg.cd_max_sweeps).beta;
        out.B[li][gi] = escape_fit(std::move(beta_b), prob, pen, sets, cfg);
        // C's descent phase from the previous A point is exactly A's fit here.
        out.C[li][gi] = escape_fit(out.A[li][gi].beta, prob, pen, sets, cfg);
      } else {
        out.B[li][gi] = out.A[li][gi];
        out.C[li][gi] = out.A[li][gi];
      }
      const bool b_wins = out.B[li][gi].objective <= out.C[li][gi].objective;
      out.kept[li][gi] = b_wins ? Surface::B : Surface::C;
      out.kept_objective[li][gi] =
          std::min(out.B[li][gi].objective, out.C[li][gi].objective);
    }
  }
  return out;
}

double pct_delta_L(double L_old, double L_new) {
  if (L_old == 0.0) throw std::invalid_argument("pct_delta_L: L_old must be nonzero");
  return (L_new - L_old) / L_old;
}

double var_sel_error(const Eigen::VectorXd& beta_hat, const Eigen::VectorXd& beta_true) {
  if (beta_hat.size() != beta_true.size())
    throw std::invalid_argument("var_sel_error: length mismatch");
  const int d = static_cast<int>(beta_hat.size());
  int miss = 0;
  for (int j = 0; j < d; ++j) {
    const bool hat_zero = std::abs(beta_hat(j)) < kZeroTol;
    const bool true_zero = std::abs(beta_true(j)) < kZeroTol;
    if (hat_zero != true_zero) ++miss;
  }
  return static_cast<double>(miss) / d;
}

Eigen::MatrixXd ar1_design(int n, int d, double rho, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double innov = std::sqrt(1.0 - rho * rho);
  Eigen::MatrixXd X(n, d);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = gauss(rng);
    for (int j = 1; j < d; ++j) X(i, j) = rho * X(i, j - 1) + innov * gauss(rng);
  }
  return X;
}

std::pair<RegressionProblem, Eigen::VectorXd> simulate_M1(int n, int d,
                                                          std::uint64_t seed) {
  if (d < 181) throw std::invalid_argument("simulate_M1: d must be >= 181");
  constexpr double rho = 0.7;
  Eigen::MatrixXd X = ar1_design(n, d, rho, seed);
  Eigen::VectorXd beta_true = Eigen::VectorXd::Zero(d);
  for (int j = 0; j <= 9; ++j) beta_true(20 * j) = 1.0;

  // sigma = sqrt(beta' Sigma beta) / 3 for signal-to-noise ratio 3.
  double quad = 0.0;
  for (int j = 0; j < d; ++j) {
    if (beta_true(j) == 0.0) continue;
    for (int k = 0; k < d; ++k) {
      if (beta_true(k) == 0.0) continue;
      quad += beta_true(j) * beta_true(k) * std::pow(rho, std::abs(j - k));
    }
  }
  const double sigma = std::sqrt(quad) / 3.0;

  std::mt19937_64 rng(seed ^ 0xe2f1c40d8c5a3b79ULL);
  std::normal_distribution<double> gauss(0.0, sigma);
  Eigen::VectorXd y = X * beta_true;
  for (int i = 0; i < n; ++i) y(i) += gauss(rng);

  return {data::standardize(y, X), std::move(beta_true)};
}

}  // namespace aoescape::mcp
