#pragma once

#include "aoescape/core.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace aoescape::mf {

struct Rating {
  int user;
  int item;
  double value;
};

// Sparse observed ratings with per-user and per-item indices into the triple
// list. Duplicate (user, item) pairs and out-of-range indices are rejected.
class RatingSet {
 public:
  RatingSet(std::vector<Rating> triples, int n_users, int n_items);

  int n() const { return n_; }
  int m() const { return m_; }
  const std::vector<Rating>& triples() const { return triples_; }
  const std::vector<int>& by_user(int u) const { return by_user_[u]; }
  const std::vector<int>& by_item(int i) const { return by_item_[i]; }

  // Observed rating range; undefined for an empty set.
  std::pair<double, double> value_range() const;

 private:
  std::vector<Rating> triples_;
  int n_;
  int m_;
  std::vector<std::vector<int>> by_user_;
  std::vector<std::vector<int>> by_item_;
};

struct FactorModel {
  Eigen::MatrixXd P;  // n x K, rows p_u
  Eigen::MatrixXd Q;  // m x K, rows q_i
  double lambda = 0.0;
  double eta = 1.0;   // n / m, recomputed on construction

  int rank() const { return static_cast<int>(P.cols()); }

  // N(0, 0.1^2) entries, deterministic per seed.
  static FactorModel init(int n, int m, int K, double lambda, std::uint64_t seed);
};

double mf_loss(const FactorModel& model, const RatingSet& data);

// Closed-form ridge solution of the per-row subproblem. Throws when the
// system is singular and lambda == 0.
Eigen::VectorXd als_update_user(int u, const FactorModel& model, const RatingSet& data);
Eigen::VectorXd als_update_item(int i, const FactorModel& model, const RatingSet& data);

struct AoResult {
  FactorModel model;
  std::vector<double> loss_trace;  // loss after each full sweep
  long sweeps = 0;
};

// Full user sweep then full item sweep until the relative loss change drops
// below tol (sweep cap 500).
AoResult run_ao(FactorModel model, const RatingSet& data, double tol = 1e-8,
                int max_sweeps = 500);

struct ScalingEscapeResult {
  FactorModel model;
  double v = 1.0;  // scaling applied to Q during the (P, v) phase
  double u = 1.0;  // scaling applied to P during the (Q, u) phase
};

// Perspective-variable escape: minimize over (P, v) with vQ, apply Q <- vQ,
// then the symmetric (Q, u) problem. Never increases the loss.
ScalingEscapeResult scaling_escape(FactorModel model, const RatingSet& data,
                                   const QuasiNewtonConfig& cfg = {});

struct DirectionSet {
  enum class Provenance { random, greedy };
  std::vector<int> users;
  std::vector<int> items;
  std::vector<Eigen::VectorXd> w_users;  // parallel to users
  std::vector<Eigen::VectorXd> w_items;  // parallel to items
  Provenance provenance = Provenance::random;
};

// Each user kept independently with probability min(s/n, 1), items with
// min(s/m, 1).
std::pair<std::vector<int>, std::vector<int>> sample_participants(
    int n, int m, int s, std::uint64_t seed);

DirectionSet random_directions(const std::vector<int>& users,
                               const std::vector<int>& items, int K,
                               std::uint64_t seed);

// Optimal step length along w for user u's row, everything else fixed.
double alpha_hat_user(const Eigen::VectorXd& w, int u, const FactorModel& model,
                      const RatingSet& data);
double alpha_hat_item(const Eigen::VectorXd& w, int i, const FactorModel& model,
                      const RatingSet& data);

// Direction minimizing the per-row loss at its optimal step, found by BFGS on
// the scale-invariant objective with renormalization between passes. Returns
// a unit vector.
Eigen::VectorXd greedy_direction_user(int u, const FactorModel& model,
                                      const RatingSet& data,
                                      const QuasiNewtonConfig& cfg = {});
Eigen::VectorXd greedy_direction_item(int i, const FactorModel& model,
                                      const RatingSet& data,
                                      const QuasiNewtonConfig& cfg = {});

DirectionSet greedy_directions(const std::vector<int>& users,
                               const std::vector<int>& items,
                               const FactorModel& model, const RatingSet& data,
                               const QuasiNewtonConfig& cfg = {});

// Restricted joint search over the step coefficients of the chosen rows.
// Never increases the loss.
FactorModel joint_escape(FactorModel model, const RatingSet& data,
                         const DirectionSet& dirs,
                         const QuasiNewtonConfig& cfg = {});

// Gradient-checkable objective views of the escape searches: the (block, v)
// scaling problem over (P, v) or (Q, u), the restricted joint search over the
// step coefficients, and the per-row greedy objective L(alpha_hat(w)). The
// handles copy the model state; `data` (and `dirs`) must outlive them.
Objective scaling_phase_objective(const FactorModel& model, const RatingSet& data,
                                  bool user_block);
Objective joint_search_objective(const FactorModel& model, const RatingSet& data,
                                 const DirectionSet& dirs);
Objective greedy_row_objective(int index, const FactorModel& model,
                               const RatingSet& data, bool user_row);

// Mean absolute error on a held-out set; predictions optionally clamped to
// the training rating range.
double mae(const FactorModel& model, const RatingSet& testset,
           std::optional<std::pair<double, double>> clamp = std::nullopt);

enum class Method { baseline, scaling, random_subspace, greedy_subspace };

struct FitConfig {
  int s = 50;                 // expected participants per escape round
  std::uint64_t seed = 0;     // init + participant sampling
  EscapeConfig escape;
  QuasiNewtonConfig qn;
  int max_sweeps = 500;
};

struct FitResult {
  FactorModel model;
  EscapeReport report;
};

FitResult fit(const RatingSet& train, int K, double lambda, Method method,
              const FitConfig& cfg = {});

struct CvResult {
  double best_lambda = 0.0;
  std::vector<std::pair<double, double>> table;  // (lambda, mean held-out MAE)
};

// K-fold CV over the lambda grid; ties broken toward the larger lambda.
CvResult cross_validate_lambda(const std::vector<double>& lambda_grid, int K,
                               const RatingSet& data, Method method, int folds,
                               std::uint64_t seed, const FitConfig& cfg = {});

// Text checkpoint: header (n, m, K, lambda, eta) then row-major P and Q,
// written with enough digits for an exact round trip.
void save_model(const FactorModel& model, const std::string& path);
FactorModel load_model(const std::string& path);

}  // namespace aoescape::mf
