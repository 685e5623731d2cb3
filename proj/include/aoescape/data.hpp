#pragma once

#include "aoescape/matfac.hpp"
#include "aoescape/mcp.hpp"

#include <cstdint>
#include <string>
#include <utility>

namespace aoescape::data {

// Ratings CSV: header `user_id,item_id,rating`, UTF-8, comma-delimited.
// Ids map to dense 0-based indices in first-seen order; duplicates and
// malformed rows are errors naming the offending line.
mf::RatingSet load_ratings_csv(const std::string& path);
void save_ratings_csv(const mf::RatingSet& data, const std::string& path);

// Alternately drops users with fewer than min_user ratings and items with
// fewer than min_item until a fixed point; surviving indices are re-densified
// in first-seen order.
mf::RatingSet dense_subset_filter(const mf::RatingSet& data, int min_user, int min_item);

struct SplitSpec {
  std::uint64_t seed = 0;
  double fraction = 0.5;  // fraction assigned to the first (train) half
};

std::pair<mf::RatingSet, mf::RatingSet> split_half(const mf::RatingSet& data,
                                                   const SplitSpec& spec);

// Center y and every column to mean zero and unit Euclidean norm. Throws on
// a constant column (naming it) or a constant response.
mcp::RegressionProblem standardize(const Eigen::VectorXd& y, const Eigen::MatrixXd& X);

// Regression CSV: header, first column the response, remaining columns the
// predictors; standardization applied on load.
mcp::RegressionProblem load_regression_csv(const std::string& path);

// Low-rank planted ratings: r_ui = p_u'q_i + noise, entries observed i.i.d.
// with the given density; factors N(0,1).
mf::RatingSet synth_lowrank_ratings(int n, int m, int K_true, double noise_sd,
                                    double density, std::uint64_t seed);

}  // namespace aoescape::data
