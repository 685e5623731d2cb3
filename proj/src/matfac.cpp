#include "aoescape/matfac.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <random>
#include <set>
#include <stdexcept>

namespace aoescape::mf {

RatingSet::RatingSet(std::vector<Rating> triples, int n_users, int n_items)
    : triples_(std::move(triples)), n_(n_users), m_(n_items) {
  if (n_ < 0 || m_ < 0) throw std::invalid_argument("RatingSet: negative dimensions");
  by_user_.resize(n_);
  by_item_.resize(m_);
  std::set<std::pair<int, int>> seen;
  for (int t = 0; t < static_cast<int>(triples_.size()); ++t) {
    const Rating& r = triples_[t];
    if (r.user < 0 || r.user >= n_ || r.item < 0 || r.item >= m_)
      throw std::out_of_range("RatingSet: index out of range");
    if (!std::isfinite(r.value)) throw std::invalid_argument("RatingSet: non-finite rating");
    if (!seen.emplace(r.user, r.item).second)
      throw std::invalid_argument("RatingSet: duplicate (user, item) pair");
    by_user_[r.user].push_back(t);
    by_item_[r.item].push_back(t);
  }
}

std::pair<double, double> RatingSet::value_range() const {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const Rating& r : triples_) {
    lo = std::min(lo, r.value);
    hi = std::max(hi, r.value);
  }
  return {lo, hi};
}

FactorModel FactorModel::init(int n, int m, int K, double lambda, std::uint64_t seed) {
  if (m <= 0) throw std::invalid_argument("FactorModel: need at least one item");
  FactorModel model;
  model.P.resize(n, K);
  model.Q.resize(m, K);
  model.lambda = lambda;
  model.eta = static_cast<double>(n) / static_cast<double>(m);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 0.1);
  for (int u = 0; u < n; ++u)
    for (int k = 0; k < K; ++k) model.P(u, k) = gauss(rng);
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < K; ++k) model.Q(i, k) = gauss(rng);
  return model;
}

double mf_loss(const FactorModel& model, const RatingSet& data) {
  if (model.P.rows() != data.n() || model.Q.rows() != data.m())
    throw std::invalid_argument("mf_loss: model/data dimension mismatch");
  double loss = 0.0;
  for (const Rating& r : data.triples()) {
    const double e = r.value - model.P.row(r.user).dot(model.Q.row(r.item));
    loss += e * e;
  }
  loss += model.lambda * (model.P.squaredNorm() + model.eta * model.Q.squaredNorm());
  return loss;
}

namespace {

Eigen::VectorXd ridge_row_solve(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs,
                                double ridge) {
  const int K = static_cast<int>(gram.rows());
  Eigen::MatrixXd A = gram + ridge * Eigen::MatrixXd::Identity(K, K);
  if (ridge > 0) return A.llt().solve(rhs);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (!lu.isInvertible())
    throw std::runtime_error("als update: singular system with zero penalty");
  return lu.solve(rhs);
}

}  // namespace

Eigen::VectorXd als_update_user(int u, const FactorModel& model, const RatingSet& data) {
  const int K = model.rank();
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(K, K);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(K);
  for (int t : data.by_user(u)) {
    const Rating& r = data.triples()[t];
    const auto q = model.Q.row(r.item);
    gram.noalias() += q.transpose() * q;
    rhs.noalias() += r.value * q.transpose();
  }
  return ridge_row_solve(gram, rhs, model.lambda);
}

Eigen::VectorXd als_update_item(int i, const FactorModel& model, const RatingSet& data) {
  const int K = model.rank();
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(K, K);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(K);
  for (int t : data.by_item(i)) {
    const Rating& r = data.triples()[t];
    const auto p = model.P.row(r.user);
    gram.noalias() += p.transpose() * p;
    rhs.noalias() += r.value * p.transpose();
  }
  return ridge_row_solve(gram, rhs, model.lambda * model.eta);
}

AoResult run_ao(FactorModel model, const RatingSet& data, double tol, int max_sweeps) {
  if (tol <= 0) throw std::invalid_argument("run_ao: tol must be > 0");
  AoResult out;
  double prev = mf_loss(model, data);
  out.loss_trace.push_back(prev);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    for (int u = 0; u < data.n(); ++u) model.P.row(u) = als_update_user(u, model, data);
    for (int i = 0; i < data.m(); ++i) model.Q.row(i) = als_update_item(i, model, data);
    const double cur = mf_loss(model, data);
    out.loss_trace.push_back(cur);
    ++out.sweeps;
    if (std::abs(prev - cur) <= tol * (1.0 + std::abs(prev))) break;
    prev = cur;
  }
  out.model = std::move(model);
  return out;
}

namespace {

// One (block, v) phase of the scaling escape packed as (block entries
// column-major, v). `fixed` is scaled by v while `block` is free; penalty
// weights follow the objective convention (1 for P, eta for Q).
struct ScalingPhaseState {
  Eigen::MatrixXd fixed;
  const RatingSet* data;
  bool block_is_users;  // free block = P when true, Q otherwise
  double lambda;
  double block_weight;
  double fixed_weight;
  Eigen::Index rows;
  int K;
};

}  // namespace

Objective scaling_phase_objective(const FactorModel& model, const RatingSet& data,
                                  bool user_block) {
  auto st = std::make_shared<ScalingPhaseState>();
  st->fixed = user_block ? model.Q : model.P;
  st->data = &data;
  st->block_is_users = user_block;
  st->lambda = model.lambda;
  st->block_weight = user_block ? 1.0 : model.eta;
  st->fixed_weight = user_block ? model.eta : 1.0;
  st->rows = user_block ? model.P.rows() : model.Q.rows();
  st->K = model.rank();

  Objective obj;
  obj.value = [st](const Vector& x) {
    const Eigen::Map<const Eigen::MatrixXd> b(x.data(), st->rows, st->K);
    const double v = x(st->rows * st->K);
    double loss = 0.0;
    for (const Rating& r : st->data->triples()) {
      const auto brow = b.row(st->block_is_users ? r.user : r.item);
      const auto frow = st->fixed.row(st->block_is_users ? r.item : r.user);
      const double e = r.value - v * brow.dot(frow);
      loss += e * e;
    }
    loss += st->lambda * (st->block_weight * b.squaredNorm() +
                          st->fixed_weight * v * v * st->fixed.squaredNorm());
    return loss;
  };
  obj.gradient = [st](const Vector& x) {
    const Eigen::Map<const Eigen::MatrixXd> b(x.data(), st->rows, st->K);
    const double v = x(st->rows * st->K);
    Eigen::MatrixXd gb = 2.0 * st->lambda * st->block_weight * b;
    double gv = 2.0 * st->lambda * st->fixed_weight * v * st->fixed.squaredNorm();
    for (const Rating& r : st->data->triples()) {
      const int bi = st->block_is_users ? r.user : r.item;
      const int fi = st->block_is_users ? r.item : r.user;
      const double dot = b.row(bi).dot(st->fixed.row(fi));
      const double e = r.value - v * dot;
      gb.row(bi).noalias() -= 2.0 * e * v * st->fixed.row(fi);
      gv -= 2.0 * e * dot;
    }
    Vector g(st->rows * st->K + 1);
    Eigen::Map<Eigen::MatrixXd>(g.data(), st->rows, st->K) = gb;
    g(st->rows * st->K) = gv;
    return g;
  };
  return obj;
}

ScalingEscapeResult scaling_escape(FactorModel model, const RatingSet& data,
                                   const QuasiNewtonConfig& cfg) {
  const int K = model.rank();
  ScalingEscapeResult out;

  auto run_phase = [&](Eigen::MatrixXd& block, Eigen::MatrixXd& fixed,
                       bool user_block, double fixed_weight) -> double {
    // v is structurally irrelevant when the product terms vanish and the
    // scaled penalty is zero; keep v = 1 and skip.
    const bool flat_products = block.isZero(0) || fixed.isZero(0);
    if (flat_products && model.lambda * fixed_weight * fixed.squaredNorm() == 0.0)
      return 1.0;

    Objective obj = scaling_phase_objective(model, data, user_block);
    const Eigen::Index nb = block.size();
    Vector x0(nb + 1);
    Eigen::Map<Eigen::MatrixXd>(x0.data(), block.rows(), K) = block;
    x0(nb) = 1.0;
    const double before = obj.value(x0);
    QuasiNewtonResult res = quasi_newton_minimize(obj, x0, cfg);
    if (res.value > before) return 1.0;  // numerical safety: keep the input
    block = Eigen::Map<const Eigen::MatrixXd>(res.x.data(), block.rows(), K);
    fixed *= res.x(nb);
    return res.x(nb);
  };

  out.v = run_phase(model.P, model.Q, true, model.eta);
  out.u = run_phase(model.Q, model.P, false, 1.0);
  out.model = std::move(model);
  return out;
}

std::pair<std::vector<int>, std::vector<int>> sample_participants(
    int n, int m, int s, std::uint64_t seed) {
  if (s < 0) throw std::invalid_argument("sample_participants: s must be >= 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<int> users, items;
  const double pu = n > 0 ? std::min(1.0, static_cast<double>(s) / n) : 0.0;
  const double pi = m > 0 ? std::min(1.0, static_cast<double>(s) / m) : 0.0;
  for (int u = 0; u < n; ++u)
    if (unif(rng) < pu) users.push_back(u);
  for (int i = 0; i < m; ++i)
    if (unif(rng) < pi) items.push_back(i);
  return {std::move(users), std::move(items)};
}

DirectionSet random_directions(const std::vector<int>& users,
                               const std::vector<int>& items, int K,
                               std::uint64_t seed) {
  DirectionSet dirs;
  dirs.users = users;
  dirs.items = items;
  dirs.provenance = DirectionSet::Provenance::random;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto draw = [&]() {
    Eigen::VectorXd w(K);
    for (int k = 0; k < K; ++k) w(k) = gauss(rng);
    return w;
  };
  dirs.w_users.reserve(users.size());
  for (size_t t = 0; t < users.size(); ++t) dirs.w_users.push_back(draw());
  dirs.w_items.reserve(items.size());
  for (size_t t = 0; t < items.size(); ++t) dirs.w_items.push_back(draw());
  return dirs;
}

namespace {

// Per-row view of the data used by alpha_hat and the greedy objective:
// the opposite-factor rows and the current residuals for one user or item.
struct RowContext {
  std::vector<Eigen::VectorXd> opp;   // q_i (user rows) or p_u (item rows)
  std::vector<double> resid;          // r - p'q at the current model
  Eigen::VectorXd self;               // p_u or q_i
  double penalty;                     // lambda for users, lambda*eta for items
};

RowContext user_context(int u, const FactorModel& model, const RatingSet& data) {
  RowContext ctx;
  ctx.self = model.P.row(u);
  ctx.penalty = model.lambda;
  for (int t : data.by_user(u)) {
    const Rating& r = data.triples()[t];
    ctx.opp.emplace_back(model.Q.row(r.item));
    ctx.resid.push_back(r.value - model.P.row(u).dot(model.Q.row(r.item)));
  }
  return ctx;
}

RowContext item_context(int i, const FactorModel& model, const RatingSet& data) {
  RowContext ctx;
  ctx.self = model.Q.row(i);
  ctx.penalty = model.lambda * model.eta;
  for (int t : data.by_item(i)) {
    const Rating& r = data.triples()[t];
    ctx.opp.emplace_back(model.P.row(r.user));
    ctx.resid.push_back(r.value - model.P.row(r.user).dot(model.Q.row(i)));
  }
  return ctx;
}

double alpha_hat_ctx(const RowContext& ctx, const Eigen::VectorXd& w) {
  double num = -ctx.penalty * w.dot(ctx.self);
  double den = ctx.penalty * w.squaredNorm();
  for (size_t t = 0; t < ctx.opp.size(); ++t) {
    const double wq = w.dot(ctx.opp[t]);
    num += wq * ctx.resid[t];
    den += wq * wq;
  }
  return den > 0 ? num / den : 0.0;
}

// Per-row loss at the optimal step: L(alpha_hat(w)). 0-homogeneous in w.
double greedy_value_ctx(const RowContext& ctx, const Eigen::VectorXd& w) {
  const double a = alpha_hat_ctx(ctx, w);
  double loss = ctx.penalty * (ctx.self + a * w).squaredNorm();
  for (size_t t = 0; t < ctx.opp.size(); ++t) {
    const double e = ctx.resid[t] - a * w.dot(ctx.opp[t]);
    loss += e * e;
  }
  return loss;
}

// Envelope gradient: d/dw at the fixed optimal alpha.
Eigen::VectorXd greedy_grad_ctx(const RowContext& ctx, const Eigen::VectorXd& w) {
  const double a = alpha_hat_ctx(ctx, w);
  Eigen::VectorXd g = ctx.penalty * (ctx.self + a * w);
  for (size_t t = 0; t < ctx.opp.size(); ++t) {
    const double e = ctx.resid[t] - a * w.dot(ctx.opp[t]);
    g.noalias() -= e * ctx.opp[t];
  }
  return 2.0 * a * g;
}

Eigen::VectorXd greedy_direction_ctx(const RowContext& ctx, int K,
                                     const QuasiNewtonConfig& cfg) {
  // Start from the negative gradient of the per-row loss at alpha = 0.
  Eigen::VectorXd w0 = -ctx.penalty * ctx.self;
  for (size_t t = 0; t < ctx.opp.size(); ++t) w0.noalias() += ctx.resid[t] * ctx.opp[t];
  if (w0.norm() < 1e-14) {
    w0 = Eigen::VectorXd::Zero(K);
    w0(0) = 1.0;
    return w0;
  }
  w0.normalize();

  Objective obj;
  obj.value = [&](const Vector& w) { return greedy_value_ctx(ctx, w); };
  obj.gradient = [&](const Vector& w) { return greedy_grad_ctx(ctx, w); };

  QuasiNewtonConfig inner = cfg;
  inner.max_iter = std::min(cfg.max_iter, 25);
  Eigen::VectorXd w = w0;
  double best = obj.value(w);
  // The objective is scale invariant, so renormalize between BFGS passes to
  // keep the iterates off the flat ray through the origin.
  for (int pass = 0; pass < 4; ++pass) {
    QuasiNewtonResult res = quasi_newton_minimize(obj, w, inner);
    if (res.x.norm() < 1e-14) break;
    Eigen::VectorXd cand = res.x.normalized();
    const double val = obj.value(cand);
    if (val < best - 1e-12 * (1.0 + std::abs(best))) {
      best = val;
      w = cand;
    } else {
      if (val <= best) w = cand;
      break;
    }
  }
  if (obj.value(w) > obj.value(w0)) return w0;  // optimizer stall fallback
  return w;
}

}  // namespace

double alpha_hat_user(const Eigen::VectorXd& w, int u, const FactorModel& model,
                      const RatingSet& data) {
  return alpha_hat_ctx(user_context(u, model, data), w);
}

double alpha_hat_item(const Eigen::VectorXd& w, int i, const FactorModel& model,
                      const RatingSet& data) {
  return alpha_hat_ctx(item_context(i, model, data), w);
}

Eigen::VectorXd greedy_direction_user(int u, const FactorModel& model,
                                      const RatingSet& data,
                                      const QuasiNewtonConfig& cfg) {
  return greedy_direction_ctx(user_context(u, model, data), model.rank(), cfg);
}

Eigen::VectorXd greedy_direction_item(int i, const FactorModel& model,
                                      const RatingSet& data,
                                      const QuasiNewtonConfig& cfg) {
  return greedy_direction_ctx(item_context(i, model, data), model.rank(), cfg);
}

DirectionSet greedy_directions(const std::vector<int>& users,
                               const std::vector<int>& items,
                               const FactorModel& model, const RatingSet& data,
                               const QuasiNewtonConfig& cfg) {
  DirectionSet dirs;
  dirs.users = users;
  dirs.items = items;
  dirs.provenance = DirectionSet::Provenance::greedy;
  for (int u : users) dirs.w_users.push_back(greedy_direction_user(u, model, data, cfg));
  for (int i : items) dirs.w_items.push_back(greedy_direction_item(i, model, data, cfg));
  return dirs;
}

namespace {

FactorModel shifted_model(const FactorModel& model, const DirectionSet& dirs,
                          const Vector& x) {
  const size_t nu = dirs.users.size();
  FactorModel sm = model;
  for (size_t t = 0; t < nu; ++t)
    sm.P.row(dirs.users[t]) += x(t) * dirs.w_users[t].transpose();
  for (size_t t = 0; t < dirs.items.size(); ++t)
    sm.Q.row(dirs.items[t]) += x(nu + t) * dirs.w_items[t].transpose();
  return sm;
}

}  // namespace

Objective joint_search_objective(const FactorModel& model, const RatingSet& data,
                                 const DirectionSet& dirs) {
  struct State {
    FactorModel model;
    const RatingSet* data;
    const DirectionSet* dirs;
  };
  auto st = std::make_shared<State>(State{model, &data, &dirs});

  Objective obj;
  obj.value = [st](const Vector& x) {
    return mf_loss(shifted_model(st->model, *st->dirs, x), *st->data);
  };
  obj.gradient = [st](const Vector& x) {
    const DirectionSet& dirs = *st->dirs;
    const size_t nu = dirs.users.size();
    const size_t ni = dirs.items.size();
    FactorModel sm = shifted_model(st->model, dirs, x);
    // Accumulate d(loss)/dP and d(loss)/dQ, then project on the directions.
    Eigen::MatrixXd gp = 2.0 * sm.lambda * sm.P;
    Eigen::MatrixXd gq = 2.0 * sm.lambda * sm.eta * sm.Q;
    for (const Rating& r : st->data->triples()) {
      const double e = r.value - sm.P.row(r.user).dot(sm.Q.row(r.item));
      gp.row(r.user).noalias() -= 2.0 * e * sm.Q.row(r.item);
      gq.row(r.item).noalias() -= 2.0 * e * sm.P.row(r.user);
    }
    Vector g(nu + ni);
    for (size_t t = 0; t < nu; ++t) g(t) = gp.row(dirs.users[t]).dot(dirs.w_users[t]);
    for (size_t t = 0; t < ni; ++t) g(nu + t) = gq.row(dirs.items[t]).dot(dirs.w_items[t]);
    return g;
  };
  return obj;
}

Objective greedy_row_objective(int index, const FactorModel& model,
                               const RatingSet& data, bool user_row) {
  auto ctx = std::make_shared<RowContext>(user_row ? user_context(index, model, data)
                                                   : item_context(index, model, data));
  Objective obj;
  obj.value = [ctx](const Vector& w) { return greedy_value_ctx(*ctx, w); };
  obj.gradient = [ctx](const Vector& w) { return greedy_grad_ctx(*ctx, w); };
  return obj;
}

FactorModel joint_escape(FactorModel model, const RatingSet& data,
                         const DirectionSet& dirs, const QuasiNewtonConfig& cfg) {
  const size_t nu = dirs.users.size();
  const size_t ni = dirs.items.size();
  if (nu + ni == 0) return model;
  if (dirs.w_users.size() != nu || dirs.w_items.size() != ni)
    throw std::invalid_argument("joint_escape: direction/index size mismatch");

  Objective obj = joint_search_objective(model, data, dirs);
  const Vector x0 = Vector::Zero(nu + ni);
  const double before = obj.value(x0);
  QuasiNewtonResult res = quasi_newton_minimize(obj, x0, cfg);
  if (res.value > before) return model;
  return shifted_model(model, dirs, res.x);
}

double mae(const FactorModel& model, const RatingSet& testset,
           std::optional<std::pair<double, double>> clamp) {
  if (testset.triples().empty()) throw std::invalid_argument("mae: empty test set");
  double sum = 0.0;
  for (const Rating& r : testset.triples()) {
    double pred = model.P.row(r.user).dot(model.Q.row(r.item));
    if (clamp) pred = std::clamp(pred, clamp->first, clamp->second);
    sum += std::abs(pred - r.value);
  }
  return sum / static_cast<double>(testset.triples().size());
}

FitResult fit(const RatingSet& train, int K, double lambda, Method method,
              const FitConfig& cfg) {
  FactorModel model = FactorModel::init(train.n(), train.m(), K, lambda, cfg.seed);
  const Eigen::Index np = model.P.size();
  const Eigen::Index nq = model.Q.size();

  auto pack = [&](const FactorModel& mdl) {
    Vector x(np + nq);
    Eigen::Map<Eigen::MatrixXd>(x.data(), mdl.P.rows(), mdl.P.cols()) = mdl.P;
    Eigen::Map<Eigen::MatrixXd>(x.data() + np, mdl.Q.rows(), mdl.Q.cols()) = mdl.Q;
    return x;
  };
  auto unpack = [&](const Vector& x) {
    FactorModel mdl = model;
    mdl.P = Eigen::Map<const Eigen::MatrixXd>(x.data(), model.P.rows(), model.P.cols());
    mdl.Q = Eigen::Map<const Eigen::MatrixXd>(x.data() + np, model.Q.rows(), model.Q.cols());
    return mdl;
  };

  auto loss = [&](const Vector& x) { return mf_loss(unpack(x), train); };

  PhaseStep ao = [&](const Vector& x) {
    AoResult r = run_ao(unpack(x), train, cfg.escape.ao_tol, cfg.max_sweeps);
    return PhaseResult{pack(r.model), r.sweeps};
  };

  int round = 0;
  PhaseStep escape = [&](const Vector& x) {
    ++round;
    FactorModel cur = unpack(x);
    switch (method) {
      case Method::baseline:
        return PhaseResult{x, 0};
      case Method::scaling: {
        ScalingEscapeResult r = scaling_escape(std::move(cur), train, cfg.qn);
        return PhaseResult{pack(r.model), 1};
      }
      case Method::random_subspace:
      case Method::greedy_subspace: {
        const std::uint64_t round_seed =
            cfg.seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(round);
        auto [users, items] = sample_participants(train.n(), train.m(), cfg.s, round_seed);
        DirectionSet dirs =
            method == Method::random_subspace
                ? random_directions(users, items, K, round_seed ^ 0x5bf03635ULL)
                : greedy_directions(users, items, cur, train, cfg.qn);
        FactorModel next = joint_escape(std::move(cur), train, dirs, cfg.qn);
        return PhaseResult{pack(next), 1};
      }
    }
    return PhaseResult{x, 0};
  };

  auto [x, report] = escape_loop(loss, ao, escape, pack(model), cfg.escape);
  return FitResult{unpack(x), std::move(report)};
}

CvResult cross_validate_lambda(const std::vector<double>& lambda_grid, int K,
                               const RatingSet& data, Method method, int folds,
                               std::uint64_t seed, const FitConfig& cfg) {
  if (lambda_grid.empty()) throw std::invalid_argument("cross_validate_lambda: empty grid");
  if (folds < 2) throw std::invalid_argument("cross_validate_lambda: folds must be >= 2");

  const int total = static_cast<int>(data.triples().size());
  std::vector<int> order(total);
  for (int t = 0; t < total; ++t) order[t] = t;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> fold_of(total);
  for (int t = 0; t < total; ++t) fold_of[order[t]] = t % folds;

  CvResult out;
  double best_mae = std::numeric_limits<double>::infinity();
  for (double lam : lambda_grid) {
    double sum = 0.0;
    int counted = 0;
    for (int f = 0; f < folds; ++f) {
      std::vector<Rating> tr, va;
      for (int t = 0; t < total; ++t)
        (fold_of[t] == f ? va : tr).push_back(data.triples()[t]);
      if (va.empty() || tr.empty()) continue;
      RatingSet train(std::move(tr), data.n(), data.m());
      RatingSet valid(std::move(va), data.n(), data.m());
      FitConfig fold_cfg = cfg;
      fold_cfg.seed = cfg.seed + static_cast<std::uint64_t>(f);
      FitResult fit_res = fit(train, K, lam, method, fold_cfg);
      sum += mae(fit_res.model, valid, train.value_range());
      ++counted;
    }
    const double mean = counted > 0 ? sum / counted : std::numeric_limits<double>::infinity();
    out.table.emplace_back(lam, mean);
    // ties broken toward the larger lambda
    if (mean < best_mae || (mean == best_mae && lam > out.best_lambda)) {
      best_mae = mean;
      out.best_lambda = lam;
    }
  }
  return out;
}

void save_model(const FactorModel& model, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("save_model: cannot open " + path);
  std::fprintf(f, "aoescape-model %ld %ld %d %.17g %.17g\n",
               static_cast<long>(model.P.rows()), static_cast<long>(model.Q.rows()),
               model.rank(), model.lambda, model.eta);
  auto dump = [&](const Eigen::MatrixXd& mat) {
    for (Eigen::Index r = 0; r < mat.rows(); ++r) {
      for (Eigen::Index c = 0; c < mat.cols(); ++c)
        std::fprintf(f, c ? " %.17g" : "%.17g", mat(r, c));
      std::fprintf(f, "\n");
    }
  };
  dump(model.P);
  dump(model.Q);
  std::fclose(f);
}

FactorModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_model: cannot open " + path);
  std::string tag;
  long n, m;
  int K;
  FactorModel model;
  if (!(in >> tag >> n >> m >> K >> model.lambda >> model.eta) || tag != "aoescape-model")
    throw std::runtime_error("load_model: bad header in " + path);
  model.P.resize(n, K);
  model.Q.resize(m, K);
  for (long r = 0; r < n; ++r)
    for (int c = 0; c < K; ++c)
      if (!(in >> model.P(r, c))) throw std::runtime_error("load_model: truncated P");
  for (long r = 0; r < m; ++r)
    for (int c = 0; c < K; ++c)
      if (!(in >> model.Q(r, c))) throw std::runtime_error("load_model: truncated Q");
  return model;
}

}  // namespace aoescape::mf
