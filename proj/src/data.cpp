#include "aoescape/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace aoescape::data {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_number(const std::string& s, const std::string& path, long line_no) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(path + ":" + std::to_string(line_no) +
                             ": cannot parse number '" + s + "'");
  }
}

}  // namespace

mf::RatingSet load_ratings_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_ratings_csv: cannot open " + path);

  std::string line;
  long line_no = 0;
  if (!std::getline(in, line))
    throw std::runtime_error(path + ": empty file, expected a header");
  ++line_no;

  std::unordered_map<std::string, int> user_ids, item_ids;
  std::vector<mf::Rating> triples;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto fields = split_csv_line(line);
    if (fields.size() != 3)
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected 3 fields, got " + std::to_string(fields.size()));
    const double rating = parse_number(fields[2], path, line_no);
    if (!std::isfinite(rating))
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": non-finite rating");
    const int u = user_ids.emplace(fields[0], static_cast<int>(user_ids.size())).first->second;
    const int i = item_ids.emplace(fields[1], static_cast<int>(item_ids.size())).first->second;
    triples.push_back({u, i, rating});
  }
  try {
    return mf::RatingSet(std::move(triples), static_cast<int>(user_ids.size()),
                         static_cast<int>(item_ids.size()));
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

void save_ratings_csv(const mf::RatingSet& data, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("save_ratings_csv: cannot open " + path);
  std::fprintf(f, "user_id,item_id,rating\n");
  for (const mf::Rating& r : data.triples())
    std::fprintf(f, "u%d,i%d,%.17g\n", r.user, r.item, r.value);
  std::fclose(f);
}

mf::RatingSet dense_subset_filter(const mf::RatingSet& data, int min_user, int min_item) {
  if (min_user < 0 || min_item < 0)
    throw std::invalid_argument("dense_subset_filter: negative thresholds");

  std::vector<mf::Rating> triples = data.triples();
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<int> user_count(data.n(), 0), item_count(data.m(), 0);
    for (const mf::Rating& r : triples) {
      ++user_count[r.user];
      ++item_count[r.item];
    }
    std::vector<mf::Rating> next;
    next.reserve(triples.size());
    for (const mf::Rating& r : triples) {
      if (user_count[r.user] >= min_user && item_count[r.item] >= min_item)
        next.push_back(r);
      else
        changed = true;
    }
    triples = std::move(next);
  }

  // Re-densify surviving indices in first-seen order.
  std::vector<int> user_map(data.n(), -1), item_map(data.m(), -1);
  int nu = 0, ni = 0;
  for (mf::Rating& r : triples) {
    if (user_map[r.user] < 0) user_map[r.user] = nu++;
    if (item_map[r.item] < 0) item_map[r.item] = ni++;
    r.user = user_map[r.user];
    r.item = item_map[r.item];
  }
  return mf::RatingSet(std::move(triples), nu, ni);
}

std::pair<mf::RatingSet, mf::RatingSet> split_half(const mf::RatingSet& data,
                                                   const SplitSpec& spec) {
  if (!(spec.fraction > 0.0 && spec.fraction < 1.0))
    throw std::invalid_argument("split_half: fraction must be in (0, 1)");
  const int total = static_cast<int>(data.triples().size());
  std::vector<int> order(total);
  for (int t = 0; t < total; ++t) order[t] = t;
  std::mt19937_64 rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);
  const long n_train = std::lround(spec.fraction * total);
  std::vector<mf::Rating> train, test;
  for (int t = 0; t < total; ++t)
    (t < n_train ? train : test).push_back(data.triples()[order[t]]);
  return {mf::RatingSet(std::move(train), data.n(), data.m()),
          mf::RatingSet(std::move(test), data.n(), data.m())};
}

mcp::RegressionProblem standardize(const Eigen::VectorXd& y, const Eigen::MatrixXd& X) {
  if (y.size() != X.rows()) throw std::invalid_argument("standardize: y/X row mismatch");
  if (y.size() < 2) throw std::invalid_argument("standardize: need at least 2 rows");

  mcp::RegressionProblem prob;
  auto scale = [&](Eigen::VectorXd v, const std::string& name) {
    v.array() -= v.mean();
    const double norm = v.norm();
    if (norm < 1e-12) throw std::runtime_error("standardize: constant " + name);
    return Eigen::VectorXd(v / norm);
  };
  prob.y = scale(y, "response");
  prob.X.resize(X.rows(), X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    prob.X.col(j) = scale(X.col(j), "column " + std::to_string(j));
  prob.standardized = true;
  return prob;
}

mcp::RegressionProblem load_regression_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_regression_csv: cannot open " + path);
  std::string line;
  long line_no = 0;
  if (!std::getline(in, line))
    throw std::runtime_error(path + ": empty file, expected a header");
  ++line_no;
  const size_t n_fields = split_csv_line(line).size();
  if (n_fields < 2)
    throw std::runtime_error(path + ": need a response and at least one predictor");

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.back() == '\r') line.pop_back();
    const auto fields = split_csv_line(line);
    if (fields.size() != n_fields)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": ragged row");
    std::vector<double> row;
    row.reserve(n_fields);
    for (const auto& f : fields) row.push_back(parse_number(f, path, line_no));
    rows.push_back(std::move(row));
  }
  const int n = static_cast<int>(rows.size());
  const int d = static_cast<int>(n_fields) - 1;
  Eigen::VectorXd y(n);
  Eigen::MatrixXd X(n, d);
  for (int i = 0; i < n; ++i) {
    y(i) = rows[i][0];
    for (int j = 0; j < d; ++j) X(i, j) = rows[i][j + 1];
  }
  return standardize(y, X);
}

mf::RatingSet synth_lowrank_ratings(int n, int m, int K_true, double noise_sd,
                                    double density, std::uint64_t seed) {
  if (!(density > 0.0 && density <= 1.0))
    throw std::invalid_argument("synth_lowrank_ratings: density must be in (0, 1]");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd P(n, K_true), Q(m, K_true);
  for (int u = 0; u < n; ++u)
    for (int k = 0; k < K_true; ++k) P(u, k) = gauss(rng);
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < K_true; ++k) Q(i, k) = gauss(rng);

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<mf::Rating> triples;
  for (int u = 0; u < n; ++u) {
    for (int i = 0; i < m; ++i) {
      if (density < 1.0 && unif(rng) >= density) continue;
      double value = P.row(u).dot(Q.row(i));
      if (noise_sd > 0) value += noise_sd * gauss(rng);
      triples.push_back({u, i, value});
    }
  }
  return mf::RatingSet(std::move(triples), n, m);
}

}  // namespace aoescape::data
