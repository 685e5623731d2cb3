#include "aoescape/data.hpp"
#include "aoescape/matfac.hpp"
#include "aoescape/mcp.hpp"
#include "aoescape/toy_demo.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace aoescape;

namespace {

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stod(tok));
  }
  return out;
}

struct CsvWriter {
  std::FILE* f = nullptr;
  explicit CsvWriter(const fs::path& path) {
    f = std::fopen(path.string().c_str(), "w");
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  ~CsvWriter() {
    if (f) std::fclose(f);
  }
  void row(const std::string& line) { std::fprintf(f, "%s\n", line.c_str()); }
};

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// toy

struct ToyOpts {
  double x0 = 0.0, y0 = 0.0, box = 10.0;
  int max_rounds = 20;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_toy(const ToyOpts& o) {
  EscapeConfig cfg;
  cfg.max_rounds = o.max_rounds;
  cfg.epsilon = o.epsilon;
  ToyDemoResult res = run_toy_demo(o.x0, o.y0, o.box, cfg);

  json rounds = json::array();
  for (const auto& r : res.report.rounds)
    rounds.push_back({{"loss_after_ao", r.loss_after_ao},
                      {"loss_after_escape", r.loss_after_escape}});
  json j{
      {"config",
       {{"x0", o.x0}, {"y0", o.y0}, {"box", o.box}, {"max_rounds", o.max_rounds},
        {"epsilon", o.epsilon}, {"seed", o.seed}}},
      {"ao_stuck_value", res.ao_value},
      {"escaped", {{"x", res.point(0)}, {"y", res.point(1)}, {"objective", res.value}}},
      {"report",
       {{"rounds", rounds},
        {"total_ao_iterations", res.report.total_ao_iterations},
        {"total_escape_iterations", res.report.total_escape_iterations},
        {"terminated_by",
         res.report.terminated_by == EscapeTermination::round_cap
             ? "round_cap"
             : "improvement_below_epsilon"}}},
  };
  std::cout << j.dump(2) << "\n";
  if (!o.out.empty()) write_json(j, o.out);
  return 0;
}

// ---------------------------------------------------------------------------
// matfac

struct MatfacOpts {
  std::string data_path;
  int n = 300, m = 300, k_true = 5;
  double density = 0.2, noise_sd = 0.5;
  int k = 5;
  std::string method = "baseline";
  std::string lambda_grid = "0.5,1,5,10";
  int s = 50;
  std::uint64_t seed = 0;
  int runs = 1;
  int folds = 5;
  int max_rounds = 20;
  double ao_tol = 1e-8;
  int min_user = 0, min_item = 0;
  std::string out;
};

mf::Method parse_method(const std::string& name) {
  if (name == "baseline") return mf::Method::baseline;
  if (name == "scaling") return mf::Method::scaling;
  if (name == "random") return mf::Method::random_subspace;
  if (name == "greedy") return mf::Method::greedy_subspace;
  throw CLI::ValidationError("--method", "unknown method '" + name + "'");
}

int cmd_matfac(const MatfacOpts& o) {
  const mf::Method method = parse_method(o.method);
  const std::vector<double> grid = parse_double_list(o.lambda_grid);
  if (grid.empty()) throw CLI::ValidationError("--lambda-grid", "empty grid");
  fs::create_directories(o.out);

  CsvWriter mae_csv(fs::path(o.out) / "mae.csv");
  mae_csv.row("run,method,k,lambda_star,test_mae,train_loss,escape_rounds");
  CsvWriter cv_csv(fs::path(o.out) / "cv.csv");
  cv_csv.row("run,lambda,mean_cv_mae");
  CsvWriter trace_csv(fs::path(o.out) / "trace.csv");
  trace_csv.row("run,round,loss_after_ao,loss_after_escape");

  double mae_sum = 0.0, mae_sq = 0.0;
  for (int run = 0; run < o.runs; ++run) {
    const std::uint64_t run_seed = o.seed + static_cast<std::uint64_t>(run);
    mf::RatingSet full = o.data_path.empty()
                             ? data::synth_lowrank_ratings(o.n, o.m, o.k_true,
                                                           o.noise_sd, o.density, run_seed)
                             : data::load_ratings_csv(o.data_path);
    if (o.min_user > 0 || o.min_item > 0)
      full = data::dense_subset_filter(full, o.min_user, o.min_item);
    auto [train, test] = data::split_half(full, {run_seed, 0.5});

    mf::FitConfig cfg;
    cfg.s = o.s;
    cfg.seed = run_seed;
    cfg.escape.max_rounds = o.max_rounds;
    cfg.escape.ao_tol = o.ao_tol;

    mf::CvResult cv =
        mf::cross_validate_lambda(grid, o.k, train, method, o.folds, run_seed, cfg);
    for (const auto& [lam, err] : cv.table)
      cv_csv.row(std::to_string(run) + "," + num(lam) + "," + num(err));

    mf::FitResult fitted = mf::fit(train, o.k, cv.best_lambda, method, cfg);
    const double test_mae = mf::mae(fitted.model, test, train.value_range());
    const double train_loss = mf::mf_loss(fitted.model, train);
    mae_csv.row(std::to_string(run) + "," + o.method + "," + std::to_string(o.k) + "," +
                num(cv.best_lambda) + "," + num(test_mae) + "," + num(train_loss) + "," +
                std::to_string(fitted.report.rounds.size()));
    for (size_t rd = 0; rd < fitted.report.rounds.size(); ++rd)
      trace_csv.row(std::to_string(run) + "," + std::to_string(rd) + "," +
                    num(fitted.report.rounds[rd].loss_after_ao) + "," +
                    num(fitted.report.rounds[rd].loss_after_escape));
    mae_sum += test_mae;
    mae_sq += test_mae * test_mae;
  }

  const double mean = mae_sum / o.runs;
  const double var = o.runs > 1 ? (mae_sq - o.runs * mean * mean) / (o.runs - 1) : 0.0;
  json j{{"config",
          {{"data", o.data_path.empty() ? "synthetic" : o.data_path},
           {"n", o.n}, {"m", o.m}, {"k_true", o.k_true}, {"density", o.density},
           {"noise_sd", o.noise_sd}, {"k", o.k}, {"method", o.method},
           {"lambda_grid", grid}, {"s", o.s}, {"seed", o.seed}, {"runs", o.runs},
           {"folds", o.folds}, {"max_rounds", o.max_rounds}, {"ao_tol", o.ao_tol}}},
         {"mean_test_mae", mean},
         {"sd_test_mae", std::sqrt(std::max(0.0, var))}};
  write_json(j, fs::path(o.out) / "summary.json");
  return 0;
}

// ---------------------------------------------------------------------------
// mcp

struct McpOpts {
  std::string data_path;
  int n = 100, d = 200;
  double rho_min = 0.3;
  int n_lambda = 50, n_gamma = 8;
  double gamma_lo = 1.000001, gamma_hi = 150.0, lambda_frac = 0.01;
  std::uint64_t seed = 0;
  bool no_escape = false;
  int escape_rounds = 5;
  std::string out;
};

struct McpAggregate {
  long points = 0;
  long dl_near_zero = 0;   // -0.005 <= %dL < 0
  long dl_improved = 0;    // %dL < -0.005
  double dl_improved_sum = 0.0;
  long de_points = 0;      // points with a defined %de
  long de_zero = 0;
  double de_nonzero_sum = 0.0;
  long de_nonzero = 0;

  json to_json() const {
    json j;
    j["points"] = points;
    j["fraction_dL_near_zero"] = points ? static_cast<double>(dl_near_zero) / points : 0.0;
    j["fraction_dL_improved"] = points ? static_cast<double>(dl_improved) / points : 0.0;
    j["avg_dL_given_improved"] = dl_improved ? dl_improved_sum / dl_improved : 0.0;
    j["fraction_de_zero"] = de_points ? static_cast<double>(de_zero) / de_points : 0.0;
    j["avg_de_given_nonzero"] = de_nonzero ? de_nonzero_sum / de_nonzero : 0.0;
    return j;
  }
};

int cmd_mcp(const McpOpts& o) {
  mcp::RegressionProblem prob;
  Eigen::VectorXd beta_true;
  bool have_truth = false;
  if (o.data_path.empty()) {
    std::tie(prob, beta_true) = mcp::simulate_M1(o.n, o.d, o.seed);
    have_truth = true;
  } else {
    prob = data::load_regression_csv(o.data_path);
  }

  mcp::GridConfig grid_cfg;
  grid_cfg.n_lambda = o.n_lambda;
  grid_cfg.n_gamma = o.n_gamma;
  grid_cfg.gamma_lo = o.gamma_lo;
  grid_cfg.gamma_hi = o.gamma_hi;
  grid_cfg.lambda_frac = o.lambda_frac;
  auto [lambdas, gammas] = mcp::make_grid(prob, grid_cfg);

  mcp::SurfaceConfig surf_cfg;
  surf_cfg.escape_rounds = o.no_escape ? 0 : o.escape_rounds;
  mcp::SurfaceSet surf = mcp::fit_surfaces(prob, lambdas, gammas, o.rho_min, surf_cfg);

  const int G = static_cast<int>(gammas.size());
  const int small_cut = (G + 1) / 2;  // lower ceil(G/2) gammas are the "small" half
  if (G % 2 != 0)
    std::cerr << "warning: odd gamma grid; small half = lower " << small_cut
              << ", large half = upper " << G - small_cut << "\n";

  fs::create_directories(o.out);
  CsvWriter surface_csv(fs::path(o.out) / "surface.csv");
  surface_csv.row("lambda,gamma,surface,objective,nonzero,pct_delta_L_vs_A,var_sel_error");

  auto nonzero_count = [](const Eigen::VectorXd& b) {
    long c = 0;
    for (Eigen::Index j = 0; j < b.size(); ++j)
      if (std::abs(b(j)) >= 1e-10) ++c;
    return c;
  };

  McpAggregate all, small_g, large_g;
  for (size_t li = 0; li < lambdas.size(); ++li) {
    for (int gi = 0; gi < G; ++gi) {
      const double obj_a = surf.A[li][gi].objective;
      auto emit = [&](const char* name, const mcp::SurfacePoint& pt) {
        const double dl = mcp::pct_delta_L(obj_a, pt.objective);
        std::string vs = have_truth ? num(mcp::var_sel_error(pt.beta, beta_true)) : "";
        surface_csv.row(num(lambdas[li]) + "," + num(gammas[gi]) + "," + name + "," +
                        num(pt.objective) + "," + std::to_string(nonzero_count(pt.beta)) +
                        "," + num(dl) + "," + vs);
      };
      emit("A", surf.A[li][gi]);
      emit("B", surf.B[li][gi]);
      emit("C", surf.C[li][gi]);
      const mcp::SurfacePoint& kept = surf.kept_point(li, gi);
      emit("kept", kept);

      const double dl = mcp::pct_delta_L(obj_a, kept.objective);
      auto tally = [&](McpAggregate& agg) {
        ++agg.points;
        if (dl < -0.005) {
          ++agg.dl_improved;
          agg.dl_improved_sum += dl;
        } else if (dl < 0) {
          ++agg.dl_near_zero;
        }
        if (have_truth) {
          const double e_old = mcp::var_sel_error(surf.A[li][gi].beta, beta_true);
          const double e_new = mcp::var_sel_error(kept.beta, beta_true);
          if (e_old > 0) {
            ++agg.de_points;
            const double de = (e_new - e_old) / e_old;
            if (de == 0) {
              ++agg.de_zero;
            } else {
              ++agg.de_nonzero;
              agg.de_nonzero_sum += de;
            }
          } else if (e_new == 0) {
            ++agg.de_points;
            ++agg.de_zero;
          }
        }
      };
      tally(all);
      tally(gi < small_cut ? small_g : large_g);
    }
  }

  json j{{"config",
          {{"data", o.data_path.empty() ? "simulate_M1" : o.data_path},
           {"n", o.n}, {"d", o.d}, {"rho_min", o.rho_min}, {"n_lambda", o.n_lambda},
           {"n_gamma", o.n_gamma}, {"gamma_lo", o.gamma_lo}, {"gamma_hi", o.gamma_hi},
           {"lambda_frac", o.lambda_frac}, {"seed", o.seed},
           {"escape_rounds", surf_cfg.escape_rounds}}},
         {"lambda_max", lambdas.front()},
         {"all_gammas", all.to_json()},
         {"small_gammas", small_g.to_json()},
         {"large_gammas", large_g.to_json()}};
  write_json(j, fs::path(o.out) / "summary.json");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Escape-augmented alternating optimization: saddle-escape demos, "
               "matrix factorization, and MC+ regression surfaces"};
  app.set_config("--config", "", "key=value file overriding defaults (flags win)");
  app.require_subcommand(1);

  ToyOpts toy;
  CLI::App* toy_cmd = app.add_subcommand("toy", "escape demo on the saddle of "
                                                "(x-y)^2 - x^2 y^2");
  toy_cmd->add_option("--x0", toy.x0, "start x");
  toy_cmd->add_option("--y0", toy.y0, "start y");
  toy_cmd->add_option("--box", toy.box, "search box half-width");
  toy_cmd->add_option("--max-rounds", toy.max_rounds, "escape round cap");
  toy_cmd->add_option("--epsilon", toy.epsilon, "improvement threshold (0 = auto)");
  toy_cmd->add_option("--seed", toy.seed, "echoed into the report");
  toy_cmd->add_option("--out", toy.out, "also write the JSON report here");

  MatfacOpts mfo;
  CLI::App* mf_cmd = app.add_subcommand("matfac", "regularized matrix factorization "
                                                  "with escape rounds");
  mf_cmd->add_option("--data", mfo.data_path, "ratings CSV (user_id,item_id,rating)");
  mf_cmd->add_option("--n", mfo.n, "synthetic users");
  mf_cmd->add_option("--m", mfo.m, "synthetic items");
  mf_cmd->add_option("--k-true", mfo.k_true, "synthetic planted rank");
  mf_cmd->add_option("--density", mfo.density, "synthetic observation density");
  mf_cmd->add_option("--noise-sd", mfo.noise_sd, "synthetic noise sd");
  mf_cmd->add_option("--k", mfo.k, "model rank");
  mf_cmd->add_option("--method", mfo.method, "baseline|scaling|random|greedy");
  mf_cmd->add_option("--lambda-grid", mfo.lambda_grid, "comma-separated CV grid");
  mf_cmd->add_option("--s", mfo.s, "expected escape participants per round");
  mf_cmd->add_option("--seed", mfo.seed, "base seed");
  mf_cmd->add_option("--runs", mfo.runs, "independent runs");
  mf_cmd->add_option("--folds", mfo.folds, "CV folds");
  mf_cmd->add_option("--max-rounds", mfo.max_rounds, "escape round cap");
  mf_cmd->add_option("--ao-tol", mfo.ao_tol, "AO convergence tolerance");
  mf_cmd->add_option("--min-user", mfo.min_user, "dense-subset user threshold");
  mf_cmd->add_option("--min-item", mfo.min_item, "dense-subset item threshold");
  mf_cmd->add_option("--out", mfo.out, "output directory")->required();

  McpOpts mco;
  CLI::App* mcp_cmd = app.add_subcommand("mcp", "MC+ regularization surfaces with "
                                                "selective-scaling escapes");
  mcp_cmd->add_option("--data", mco.data_path, "regression CSV (response first)");
  mcp_cmd->add_option("--n", mco.n, "simulated sample size");
  mcp_cmd->add_option("--d", mco.d, "simulated predictors");
  mcp_cmd->add_option("--rho-min", mco.rho_min, "correlation threshold for E_j");
  mcp_cmd->add_option("--n-lambda", mco.n_lambda, "lambda grid size");
  mcp_cmd->add_option("--n-gamma", mco.n_gamma, "gamma grid size");
  mcp_cmd->add_option("--gamma-lo", mco.gamma_lo, "smallest gamma");
  mcp_cmd->add_option("--gamma-hi", mco.gamma_hi, "largest gamma");
  mcp_cmd->add_option("--lambda-frac", mco.lambda_frac, "smallest lambda as a "
                                                        "fraction of lambda_max");
  mcp_cmd->add_option("--seed", mco.seed, "simulation seed");
  mcp_cmd->add_flag("--no-escape", mco.no_escape, "disable the escape phase");
  mcp_cmd->add_option("--escape-rounds", mco.escape_rounds, "rounds per grid point");
  mcp_cmd->add_option("--out", mco.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (toy_cmd->parsed()) return cmd_toy(toy);
    if (mf_cmd->parsed()) return cmd_matfac(mfo);
    if (mcp_cmd->parsed()) return cmd_mcp(mco);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
