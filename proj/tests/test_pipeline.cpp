#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dropep/error.hpp"
#include "dropep/pipeline.hpp"
#include "dropep/risk.hpp"

using namespace dropep;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config(const std::string& out) {
  ExperimentConfig c;
  c.name = "unit";
  c.distribution.family = Family::kMpQuadratic;
  c.distribution.mp = {0.0, 1.0, 30, 100};
  c.distribution.seed = 3;
  c.algorithms = {Method::kGD};
  c.mu = 0.0;
  c.L = 1.0;
  c.metric = Metric::kFgap;
  c.initial = {InitialKind::kDist, 1.0};
  c.N_train = 6;
  c.N_holdout = 40;
  c.pool_size = 18;
  c.K_list = {1, 2, 3, 4};
  c.epsilon_grid = log_grid(1e-2, 1e1, 4);
  c.resample_count = 3;
  c.cv_search = CvSearch::kBisect;
  c.coverage_per_K = false;
  c.sweep_K = {2};
  c.output_dir = out;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config parsing, defaults and validation") {
  const ExperimentConfig c = parse_config(R"({
    "distribution": {"family": "logistic", "seed": 5, "params": {"n": 100, "d": 5}},
    "algorithms": ["gd", "fgm-strcvx"],
    "class": {"mu": "auto", "L": "auto"},
    "K_list": [1, 3, 5],
    "epsilon_grid": {"count": 4, "min": 0.1, "max": 10}
  })");
  CHECK(c.distribution.family == Family::kLogistic);
  CHECK(c.distribution.logistic.n == 100);
  CHECK(c.distribution.logistic.p == 0.3);
  CHECK_FALSE(c.mu.has_value());
  CHECK(c.grid().size() == 4);
  CHECK(c.grid()[1] == doctest::Approx(std::pow(10.0, -1.0 + 2.0 / 3.0)));
  CHECK(c.pool() == 5 * c.N_train);
  CHECK(c.beta == 0.05);
  CHECK(c.alpha == 0.1);

  const ExperimentConfig d = parse_config("{}");
  CHECK(d.grid() == log_grid(1e-2, 1e1, 10));

  // Round trip through the serialized form.
  const ExperimentConfig back = parse_config(config_to_json(c));
  CHECK(back.grid() == c.grid());
  CHECK(back.algorithms == c.algorithms);
  CHECK(back.distribution.logistic.d == 5);

  CHECK_THROWS_AS(parse_config(R"({"beta": 1.0})"), ParameterError);
  CHECK_THROWS_AS(parse_config(R"({"alpha": 0})"), ParameterError);
  CHECK_THROWS_AS(parse_config(R"({"K_list": [3, 2]})"), ParameterError);
  CHECK_THROWS_AS(parse_config(R"({"epsilon_grid": [1, 1]})"), ParameterError);
  CHECK_THROWS_AS(parse_config(R"({"unknown_key": 1})"), ParameterError);
  CHECK_THROWS_AS(parse_config(R"({"algorithms": ["fista"]})"), ParameterError);
  CHECK_THROWS_AS(parse_config(R"({"initial": {"kind": "fgap", "r": 1}})"), ParameterError);
  CHECK_THROWS_AS(parse_config(R"({"sweep_K": [7]})"), ParameterError);
  CHECK_THROWS_AS(parse_config("{not json"), ParameterError);
}

TEST_CASE("seed streams and resampling") {
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 100; ++i) {
    seen.insert(train_seed(1, i));
    seen.insert(holdout_seed(1, i));
    seen.insert(resample_seed(1, i));
  }
  CHECK(seen.size() == 300);
  CHECK(train_seed(1, 0) != train_seed(2, 0));

  const auto a = resample_indices(50, 20, 9), b = resample_indices(50, 20, 9);
  CHECK(a == b);
  CHECK(a.size() == 20);
  CHECK(std::set<int>(a.begin(), a.end()).size() == 20);
  CHECK(std::is_sorted(a.begin(), a.end()));
  CHECK(a.front() >= 0);
  CHECK(a.back() < 50);
  const auto all = resample_indices(7, 7, 1);
  CHECK(all == std::vector<int>{0, 1, 2, 3, 4, 5, 6});
  CHECK_THROWS_AS(resample_indices(5, 6, 1), ParameterError);
}

TEST_CASE("initial points lie at distance r") {
  const Eigen::VectorXd xs = Eigen::VectorXd::LinSpaced(7, -1, 1);
  for (std::uint64_t s = 0; s < 20; ++s)
    CHECK((initial_point(X0Mode::kSphere, xs, 2.5, s) - xs).norm() == doctest::Approx(2.5));
  const Eigen::VectorXd ax = initial_point(X0Mode::kAxis, xs, 3.0, 0) - xs;
  CHECK(ax(0) == 3.0);
  CHECK(ax.tail(6).isZero());
}

TEST_CASE("number formatting keeps 12 significant digits") {
  CHECK(format_number(1.0 / 3.0) == "0.333333333333");
  CHECK(format_number(2.0) == "2");
  CHECK(format_number(1.23456789012345e-7) == "1.23456789012e-07");
  CHECK(format_number(std::nan("")) == "nan");
}

TEST_CASE("results CSV round trip and ordering checks") {
  std::vector<ResultRow> rows{{1, 0.5, 0.2, 0.3, 0.1, 0.15, 0.2, 0.01, 0.02, 1.5},
                              {2, 0.25, 0.1, 0.12, 0.05, 0.07, 0.09, 0.01, 0.02, 2.0}};
  std::stringstream ss;
  write_results_csv(ss, rows);
  CHECK(ss.str().rfind("K,wc_bound,dro_expect,dro_cvar,emp_mean,emp_cvar,emp_max,eps_expect,eps_cvar,solve_time_s\n", 0) == 0);
  const auto back = read_results_csv(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[1].K == 2);
  CHECK(back[1].emp_max == 0.09);
  CHECK(ordering_violations(rows).empty());

  rows[0].dro_expect = 0.05;  // below emp_mean
  rows[1].emp_max = 0.3;      // above wc_bound
  const auto v = ordering_violations(rows);
  CHECK(v.size() == 2);

  std::stringstream bad("K,foo\n1,2\n");
  CHECK_THROWS_AS(read_results_csv(bad), ParameterError);
}

TEST_CASE("cross-validation on a degenerate distribution picks the smallest radius") {
  const auto spec = make_spec(Method::kGD, 1.0, 3);
  const PepForms forms = build_pep_forms(spec, FunctionClass{0.0, 1.0}, Metric::kFgap, {InitialKind::kDist, 1.0});
  const Instance inst = sample_mp_quadratic({0.0, 1.0, 20, 100}, 4);
  const Trajectory t = run(spec, inst, sphere_point(20, 1.0, 5));
  const std::vector<LiftedSample> pool(12, lift(t));
  const std::vector<double> holdout(30, direct_metric(t, Metric::kFgap));
  for (RiskForm form : {RiskForm::kExpectation, RiskForm::kCvar}) {
    CrossValOptions o;
    o.form = form;
    o.alpha = 0.2;
    o.N = 4;
    o.resample_count = 3;
    const CrossValResult cv = crossvalidate_epsilon(pool, holdout, forms, log_grid(1e-2, 1e1, 5), o);
    CHECK(cv.index == 0);
    CHECK_FALSE(cv.warning);
    CHECK(cv.coverage.front() == 1.0);
    CHECK(cv.failures == 0);
  }
}

TEST_CASE("grid and bisection cross-validation agree and coverage is monotone") {
  ExperimentConfig c = small_config("unused");
  const ExperimentData data = generate_data(c);
  const PepForms forms = experiment_forms(c, data.cls, Method::kGD, 4);
  const auto grid = log_grid(1e-3, 1e1, 6);
  CrossValOptions o;
  o.N = c.N_train;
  o.resample_count = 4;
  o.seed = 11;
  o.search = CvSearch::kGrid;
  const CrossValResult g = crossvalidate_epsilon(data.pool[0][3], data.holdout[0][3], forms, grid, o);
  o.search = CvSearch::kBisect;
  const CrossValResult b = crossvalidate_epsilon(data.pool[0][3], data.holdout[0][3], forms, grid, o);
  CHECK(g.coverage == b.coverage);
  CHECK(g.epsilon == b.epsilon);
  for (std::size_t k = 1; k < g.coverage.size(); ++k) CHECK(g.coverage[k] >= g.coverage[k - 1]);
  CHECK(g.target == doctest::Approx(empirical_mean(data.holdout[0][3])));
  CHECK(coverage_at(data.pool[0][3], g.target, forms, grid.back(), o) == g.coverage.back());
}

TEST_CASE("generated data is consistent with direct simulation") {
  const ExperimentConfig c = small_config("unused");
  const ExperimentData data = generate_data(c);
  REQUIRE(data.pool.size() == 1);
  REQUIRE(data.pool[0].size() == 4);
  CHECK(data.pool[0][0].size() == 18);
  CHECK(data.holdout[0][2].size() == 40);
  // Recompute holdout sample 5 at K = 3.
  const std::uint64_t seed = holdout_seed(c.distribution.seed, 5);
  const Instance inst = sample_mp_quadratic(c.distribution.mp, seed);
  const Reference ref = reference_solution(inst);
  const Trajectory t = run(algorithm_spec(c, data.cls, Method::kGD, 3), inst,
                           initial_point(X0Mode::kSphere, ref.x_star, 1.0, x0_seed(seed)), ref);
  CHECK(data.holdout[0][2][5] == direct_metric(t, Metric::kFgap));
  // Training samples respect every interpolation form.
  const PepForms forms = experiment_forms(c, data.cls, Method::kGD, 3);
  for (const auto& s : data.pool[0][2])
    for (const auto& f : forms.interpolation) CHECK(f.evaluate(s.G, s.F) <= 1e-9);
}

TEST_CASE("logistic class resolution covers every sampled instance") {
  ExperimentConfig c;
  c.distribution.family = Family::kLogistic;
  c.distribution.logistic = {60, 4, 0.5, 4.0, 3.0, 1e-2};
  c.distribution.seed = 2;
  c.N_train = 3;
  c.pool_size = 5;
  c.N_holdout = 7;
  const FunctionClass cls = resolve_class(c);
  CHECK(cls.mu == 1e-2);
  for (int i = 0; i < 5; ++i) CHECK(sample_logistic(c.distribution.logistic, train_seed(2, i)).L <= cls.L);
  for (int i = 0; i < 7; ++i) CHECK(sample_logistic(c.distribution.logistic, holdout_seed(2, i)).L <= cls.L);
}

TEST_CASE("run_experiment writes reproducible reports") {
  const fs::path base = fs::temp_directory_path() / "dropep_test_pipeline";
  fs::remove_all(base);
  const ExperimentConfig c1 = small_config((base / "a").string());
  const ExperimentConfig c2 = small_config((base / "b").string());
  const ExperimentReport r1 = run_experiment(c1);
  const ExperimentReport r2 = run_experiment(c2);
  REQUIRE(r1.algorithms.size() == 1);
  const auto& rows = r1.algorithms[0].rows;
  REQUIRE(rows.size() == 4);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const ResultRow& a = rows[k];
    const ResultRow& b = r2.algorithms[0].rows[k];
    CHECK(a.wc_bound == doctest::Approx(1.0 / (2 * (2 * a.K + 1))).epsilon(1e-5));
    CHECK(format_number(a.dro_expect) == format_number(b.dro_expect));
    CHECK(format_number(a.dro_cvar) == format_number(b.dro_cvar));
    CHECK(a.emp_mean == b.emp_mean);
    CHECK(a.eps_expect == b.eps_expect);
  }
  CHECK(slurp(base / "a" / "eps_sweep_gd.csv") == slurp(base / "b" / "eps_sweep_gd.csv"));
  for (const char* f : {"results_gd.csv", "rates_gd.json", "eps_sweep_gd.csv", "manifest.json"})
    CHECK(fs::exists(base / "a" / f));
  const auto m = nlohmann::json::parse(slurp(base / "a" / "manifest.json"));
  CHECK(m["status"] == "complete");
  CHECK(m["solver"]["backend"] == "clarabel");
  CHECK(m["seeds"]["master"] == 3);

  std::ifstream in(base / "a" / "results_gd.csv");
  const auto back = read_results_csv(in);
  CHECK(back.size() == 4);
  const auto rates = nlohmann::json::parse(slurp(base / "a" / "rates_gd.json"));
  for (const auto& r : rates)
    for (const char* k : {"series", "C", "rho", "gamma", "omega", "residual"}) CHECK(r.contains(k));
  fs::remove_all(base);
}

TEST_CASE("a failing stage leaves a failed manifest") {
  const fs::path base = fs::temp_directory_path() / "dropep_test_pipeline_fail";
  fs::remove_all(base);
  ExperimentConfig c = small_config(base.string());
  c.L = 0.5;  // instances have curvature up to 1, so the step is inadmissible
  CHECK_THROWS(run_experiment(c));
  const auto m = nlohmann::json::parse(slurp(base / "manifest.json"));
  CHECK(m["status"] == "failed");
  CHECK(m["error"].get<std::string>().size() > 0);
  fs::remove_all(base);
}

TEST_CASE("rate fits from result rows") {
  std::vector<ResultRow> rows;
  for (int K = 1; K <= 10; ++K) {
    const double v = std::pow(K + 1.0, -1.5);
    rows.push_back({K, 2 * v, v, 1.5 * v, 0.5 * v, 0.7 * v, 0.9 * v, 0.1, 0.1, 0.0});
  }
  const auto fits = fit_series(rows, {true, std::nullopt, false, 1}, 1.0);
  REQUIRE(fits.size() == 6);
  for (const auto& f : fits) {
    REQUIRE(f.fit.has_value());
    CHECK(f.fit->gamma == doctest::Approx(1.5).epsilon(1e-6));
  }
  std::stringstream ss;
  write_rates_json(ss, fits);
  const auto j = nlohmann::json::parse(ss.str());
  CHECK(j.size() == 6);
  CHECK(j[1]["series"] == "dro_expect");
  CHECK(j[1]["C"].get<double>() == doctest::Approx(1.0).epsilon(1e-6));
}
