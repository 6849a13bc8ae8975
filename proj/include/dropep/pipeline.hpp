#pragma once

// Experiment orchestration: sampling and lifting of training and held-out
// trajectories, worst-case and DRO bounds over K, cross-validation of the
// Wasserstein radius, rate fitting and report files.

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dropep/algorithms.hpp"
#include "dropep/conic.hpp"
#include "dropep/dro.hpp"
#include "dropep/instances.hpp"
#include "dropep/lifting.hpp"
#include "dropep/pep.hpp"
#include "dropep/rate_fit.hpp"

namespace dropep {

enum class Family { kMpQuadratic, kLogistic, kLasso };
enum class X0Mode { kSphere, kAxis };
enum class CvSearch { kGrid, kBisect };

const char* to_string(Family family);
Family parse_family(const std::string& name);

struct DistributionConfig {
  Family family = Family::kMpQuadratic;
  MpParams mp;
  LogisticParams logistic;
  LassoParams lasso;
  std::uint64_t seed = 0;
};

struct FitConfig {
  bool fix_rho_one = false;
  std::optional<double> fix_gamma;
  bool with_loglog = false;
  int min_K = 1;
};

struct ExperimentConfig {
  std::string name = "experiment";
  DistributionConfig distribution;
  std::vector<Method> algorithms{Method::kGD};
  double step_scale = 1.0;  // eta = step_scale / L
  std::optional<double> mu;  // unset: smallest strong convexity over sampled instances
  std::optional<double> L;   // unset: largest smoothness over sampled instances
  Metric metric = Metric::kFgap;
  InitialCondition initial;
  X0Mode x0 = X0Mode::kSphere;
  int N_train = 50;
  int N_holdout = 1000;
  int pool_size = 0;  // 0 selects 5 N_train
  std::vector<int> K_list{1, 2, 3, 4, 5};
  std::vector<double> epsilon_grid;  // empty selects 10 log-spaced values in [1e-2, 1e1]
  double alpha = 0.1;
  double beta = 0.05;
  int resample_count = 50;
  CvSearch cv_search = CvSearch::kGrid;
  bool coverage_per_K = true;
  std::vector<RiskForm> forms{RiskForm::kExpectation, RiskForm::kCvar};
  bool identity_preconditioner = false;
  FitConfig fit;
  std::vector<int> sweep_K;  // K values of the epsilon sweep, empty for none
  conic::SolveOptions solver;
  std::string output_dir = "out";

  // Throws ParameterError.
  void validate() const;
  int pool() const { return pool_size > 0 ? pool_size : 5 * N_train; }
  std::vector<double> grid() const;
  bool has_form(RiskForm form) const;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& config);

std::vector<double> log_grid(double lo, double hi, int count);

// Seed derivation. Every stream is a pure function of the master seed and
// an index, so results do not depend on evaluation order or thread count.
std::uint64_t train_seed(std::uint64_t master, int i);
std::uint64_t holdout_seed(std::uint64_t master, int i);
std::uint64_t resample_seed(std::uint64_t master, int b);
std::uint64_t dictionary_seed(std::uint64_t master);
std::uint64_t x0_seed(std::uint64_t instance_seed);

// Uniform point on the sphere of radius r.
Eigen::VectorXd sphere_point(int d, double r, std::uint64_t seed);

// Initial point at distance r from x_star.
Eigen::VectorXd initial_point(X0Mode mode, const Eigen::VectorXd& x_star, double r,
                              std::uint64_t seed);

// Function class of the experiment. Unset mu / L are resolved over the
// training pool and the held-out instances so that every sampled instance
// belongs to the class.
FunctionClass resolve_class(const ExperimentConfig& config);

AlgorithmSpec algorithm_spec(const ExperimentConfig& config, const FunctionClass& cls,
                             Method method, int K);
PepForms experiment_forms(const ExperimentConfig& config, const FunctionClass& cls,
                          Method method, int K);

struct ExperimentData {
  FunctionClass cls;
  // pool[a][k]: lifted training-pool samples of algorithms[a] at K_list[k].
  // The first N_train entries form the training set.
  std::vector<std::vector<std::vector<LiftedSample>>> pool;
  // holdout[a][k]: metric values on the held-out instances.
  std::vector<std::vector<std::vector<double>>> holdout;
};

ExperimentData generate_data(const ExperimentConfig& config);
ExperimentData generate_data(const ExperimentConfig& config, const FunctionClass& cls);

// Risk functional estimated from values: mean or empirical CVaR_alpha.
double empirical_risk(const std::vector<double>& values, RiskForm form, double alpha);

struct CrossValOptions {
  RiskForm form = RiskForm::kExpectation;
  double alpha = 1.0;
  double beta = 0.05;
  int N = 0;
  int resample_count = 50;
  std::uint64_t seed = 0;
  bool identity_preconditioner = false;
  CvSearch search = CvSearch::kGrid;
  conic::SolveOptions solver;
};

struct CrossValResult {
  double epsilon = 0.0;
  int index = -1;
  bool warning = false;  // no grid point reached 1 - beta coverage
  double target = 0.0;   // held-out estimate of the risk functional
  std::vector<double> grid;
  std::vector<double> coverage;
  int failures = 0;
  std::vector<std::string> log;
};

// Indices of the training subsets used by resample b.
std::vector<int> resample_indices(int pool_size, int N, std::uint64_t seed);

// Bound of the DRO program built on a subset of the pool.
DroSolution solve_subset(const std::vector<LiftedSample>& pool, const std::vector<int>& indices,
                         const PepForms& forms, double epsilon, RiskForm form, double alpha,
                         bool identity_preconditioner, const conic::SolveOptions& solver);

CrossValResult crossvalidate_epsilon(const std::vector<LiftedSample>& train_pool,
                                     const std::vector<double>& holdout_values,
                                     const PepForms& forms, const std::vector<double>& grid,
                                     const CrossValOptions& options);

// Fraction of resampled training sets whose bound at epsilon covers target.
double coverage_at(const std::vector<LiftedSample>& train_pool, double target,
                   const PepForms& forms, double epsilon, const CrossValOptions& options,
                   int* failures = nullptr);

struct ResultRow {
  int K = 0;
  double wc_bound = 0.0;
  double dro_expect = 0.0;
  double dro_cvar = 0.0;
  double emp_mean = 0.0;
  double emp_cvar = 0.0;
  double emp_max = 0.0;
  double eps_expect = 0.0;
  double eps_cvar = 0.0;
  double solve_time_s = 0.0;
};

struct SweepRow {
  double epsilon = 0.0;
  int K = 0;
  double dro_value = 0.0;
  double wc_bound = 0.0;
  double in_sample = 0.0;
};

// 12 significant digits; nan for missing values.
std::string format_number(double value);

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_results_csv(std::istream& in);
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

// Violations of emp_mean <= emp_cvar <= emp_max <= wc_bound + 1e-5,
// dro_expect >= emp_mean - 1e-6 and dro_cvar >= emp_cvar - 1e-6.
std::vector<std::string> ordering_violations(const std::vector<ResultRow>& rows);

struct SeriesFit {
  std::string series;
  std::optional<RateFit> fit;
  std::string error;
};

// Fits every bound column of the rows with K >= fit.min_K.
std::vector<SeriesFit> fit_series(const std::vector<ResultRow>& rows, const FitConfig& fit,
                                  double phi0, const conic::SolveOptions& solver = {});
void write_rates_json(std::ostream& out, const std::vector<SeriesFit>& fits);

struct AlgorithmReport {
  Method method = Method::kGD;
  std::vector<ResultRow> rows;
  std::vector<SweepRow> sweep;
  std::vector<SeriesFit> fits;
  double phi0 = 0.0;
  std::optional<CrossValResult> cv_expect;
  std::optional<CrossValResult> cv_cvar;
  // Coverage at the chosen radius per K (expectation, CVaR).
  std::vector<double> coverage_expect;
  std::vector<double> coverage_cvar;
  std::vector<std::string> violations;
};

struct ExperimentReport {
  ExperimentConfig config;
  FunctionClass cls;
  std::vector<AlgorithmReport> algorithms;
  double sampling_time_s = 0.0;
  double total_time_s = 0.0;
};

// Runs the whole experiment. When write_files is set, writes
//   <out>/results_<alg>.csv, <out>/rates_<alg>.json, <out>/eps_sweep_<alg>.csv
//   (when sweep_K is set) and <out>/manifest.json.
// On failure a manifest with status "failed" and the completed stages is
// written before the exception propagates.
ExperimentReport run_experiment(const ExperimentConfig& config, bool write_files = true);

}  // namespace dropep
