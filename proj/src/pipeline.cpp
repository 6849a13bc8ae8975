#include "dropep/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "dropep/error.hpp"
#include "dropep/risk.hpp"
#include "dropep/seed.hpp"

namespace dropep {

using nlohmann::json;

namespace {

constexpr std::uint64_t kHoldoutTag = 0x686f6c646f7574ULL;
constexpr std::uint64_t kResampleTag = 0x726573616d706c65ULL;
constexpr std::uint64_t kDictionaryTag = 0x64696374ULL;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Runs f(0..n-1) over OpenMP threads and rethrows the lowest-index failure.
template <class Fn>
void parallel_for(int n, Fn&& fn) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    try {
      fn(i);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

const char* x0_name(X0Mode m) { return m == X0Mode::kSphere ? "sphere" : "axis"; }
const char* search_name(CvSearch s) { return s == CvSearch::kGrid ? "grid" : "bisect"; }

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ParameterError(where + ": expected an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw ParameterError(where + ": unknown key '" + key + "'");
}

std::optional<double> auto_or_number(const json& j, const char* key) {
  if (!j.contains(key)) return std::nullopt;
  const json& v = j.at(key);
  if (v.is_string()) {
    if (v.get<std::string>() != "auto") throw ParameterError(std::string("class.") + key + ": expected a number or \"auto\"");
    return std::nullopt;
  }
  return v.get<double>();
}

std::shared_ptr<const Eigen::MatrixXd> dictionary(const DistributionConfig& dist) {
  if (dist.family != Family::kLasso) return nullptr;
  const LassoParams& p = dist.lasso;
  return std::make_shared<const Eigen::MatrixXd>(
      sample_lasso_dictionary(p.n, p.d, p.density, dictionary_seed(dist.seed)));
}

Instance sample_instance(const DistributionConfig& dist, const std::shared_ptr<const Eigen::MatrixXd>& A,
                         std::uint64_t seed) {
  switch (dist.family) {
    case Family::kMpQuadratic: return sample_mp_quadratic(dist.mp, seed);
    case Family::kLogistic: return sample_logistic(dist.logistic, seed);
    case Family::kLasso: return sample_lasso(A, dist.lasso, seed);
  }
  throw ParameterError("unknown family");
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

json number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return std::stod(format_number(v));
}

json cv_json(const CrossValResult& cv, RiskForm form) {
  json j;
  j["form"] = to_string(form);
  j["epsilon"] = number(cv.epsilon);
  j["index"] = cv.index;
  j["warning"] = cv.warning;
  j["target"] = number(cv.target);
  j["grid"] = json::array();
  for (double e : cv.grid) j["grid"].push_back(number(e));
  j["coverage"] = cv.coverage;
  j["failures"] = cv.failures;
  j["log"] = cv.log;
  return j;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace

const char* to_string(Family family) {
  switch (family) {
    case Family::kMpQuadratic: return "mp_quadratic";
    case Family::kLogistic: return "logistic";
    case Family::kLasso: return "lasso";
  }
  return "?";
}

Family parse_family(const std::string& name) {
  if (name == "mp_quadratic") return Family::kMpQuadratic;
  if (name == "logistic") return Family::kLogistic;
  if (name == "lasso") return Family::kLasso;
  throw ParameterError("unknown distribution family '" + name + "'");
}

std::vector<double> log_grid(double lo, double hi, int count) {
  if (!(lo > 0.0 && hi >= lo) || count < 1) throw ParameterError("log_grid: need 0 < lo <= hi and count >= 1");
  if (count == 1) return {lo};
  std::vector<double> g(static_cast<std::size_t>(count));
  const double a = std::log10(lo), b = std::log10(hi);
  for (int k = 0; k < count; ++k) g[static_cast<std::size_t>(k)] = std::pow(10.0, a + (b - a) * k / (count - 1));
  g.front() = lo;
  g.back() = hi;
  return g;
}

std::vector<double> ExperimentConfig::grid() const {
  return epsilon_grid.empty() ? log_grid(1e-2, 1e1, 10) : epsilon_grid;
}

bool ExperimentConfig::has_form(RiskForm form) const {
  return std::find(forms.begin(), forms.end(), form) != forms.end();
}

void ExperimentConfig::validate() const {
  if (!(beta > 0.0 && beta < 1.0)) throw ParameterError("beta must lie in (0, 1)");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ParameterError("alpha must lie in (0, 1]");
  const auto g = grid();
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!(g[k] > 0.0) || !std::isfinite(g[k])) throw ParameterError("epsilon grid must be positive and finite");
    if (k > 0 && !(g[k] > g[k - 1])) throw ParameterError("epsilon grid must be strictly increasing");
  }
  if (!(solver.tol > 0.0) || solver.max_iter < 1 || solver.relax_steps < 0)
    throw ParameterError("solver needs tol > 0, max_iter >= 1 and relax_steps >= 0");
  if (K_list.empty()) throw ParameterError("K_list must not be empty");
  for (std::size_t k = 0; k < K_list.size(); ++k) {
    if (K_list[k] < 0) throw ParameterError("K_list entries must be nonnegative");
    if (k > 0 && K_list[k] <= K_list[k - 1]) throw ParameterError("K_list must be strictly increasing");
  }
  if (N_train < 1) throw ParameterError("N_train must be positive");
  if (N_holdout < 1) throw ParameterError("N_holdout must be positive");
  if (pool() < N_train) throw ParameterError("pool_size must be at least N_train");
  if (resample_count < 1) throw ParameterError("resample_count must be positive");
  if (algorithms.empty()) throw ParameterError("no algorithms configured");
  if (forms.empty()) throw ParameterError("no risk forms configured");
  if (!(step_scale > 0.0) || !std::isfinite(step_scale)) throw ParameterError("step_scale must be positive");
  if (initial.kind != InitialKind::kDist)
    throw ParameterError("experiments sample x0 on a sphere and need a dist initial condition");
  if (!(initial.r > 0.0)) throw ParameterError("initial radius must be positive");
  if (mu && !(*mu >= 0.0)) throw ParameterError("class mu must be nonnegative");
  if (L && !(*L > 0.0 && std::isfinite(*L))) throw ParameterError("class L must be positive and finite");
  if (mu && L && !(*mu < *L)) throw ParameterError("class needs mu < L");
  const bool lasso = distribution.family == Family::kLasso;
  for (Method m : algorithms) {
    if (is_composite_method(m) != lasso)
      throw ParameterError(std::string(to_string(m)) + " does not match the " + to_string(distribution.family) +
                           " family");
    if (is_composite_method(m) && K_list.front() < 1) throw ParameterError("composite methods need K >= 1");
  }
  if (lasso && metric == Metric::kGradnorm) throw ParameterError("gradnorm metric is not supported for the lasso");
  for (int K : sweep_K)
    if (std::find(K_list.begin(), K_list.end(), K) == K_list.end())
      throw ParameterError("sweep_K entries must appear in K_list");
  if (fit.min_K < 0) throw ParameterError("fit.min_K must be nonnegative");
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ParameterError(std::string("config: ") + e.what());
  }
  ExperimentConfig c;
  try {
    check_keys(j,
               {"name", "distribution", "algorithms", "step_scale", "class", "metric", "initial", "x0", "N_train",
                "N_holdout", "pool_size", "K_list", "epsilon_grid", "alpha", "beta", "resample_count", "cv_search",
                "coverage_per_K", "forms", "preconditioner", "fit", "sweep_K", "solver", "output_dir"},
               "config");
    c.name = j.value("name", c.name);
    if (j.contains("distribution")) {
      const json& d = j.at("distribution");
      check_keys(d, {"family", "seed", "params"}, "distribution");
      c.distribution.family = parse_family(d.at("family").get<std::string>());
      c.distribution.seed = d.value("seed", std::uint64_t{0});
      const json p = d.value("params", json::object());
      switch (c.distribution.family) {
        case Family::kMpQuadratic: {
          check_keys(p, {"mu", "L", "d", "max_retries"}, "distribution.params");
          MpParams& m = c.distribution.mp;
          m.mu = p.value("mu", m.mu);
          m.L = p.value("L", m.L);
          m.d = p.value("d", m.d);
          m.max_retries = p.value("max_retries", m.max_retries);
          break;
        }
        case Family::kLogistic: {
          check_keys(p, {"n", "d", "p", "sigma_A", "xtilde_max", "lambda"}, "distribution.params");
          LogisticParams& l = c.distribution.logistic;
          l.n = p.value("n", l.n);
          l.d = p.value("d", l.d);
          l.p = p.value("p", l.p);
          l.sigma_A = p.value("sigma_A", l.sigma_A);
          l.xtilde_max = p.value("xtilde_max", l.xtilde_max);
          l.lambda_reg = p.value("lambda", l.lambda_reg);
          break;
        }
        case Family::kLasso: {
          check_keys(p, {"n", "d", "density", "p", "sigma_eps", "lambda"}, "distribution.params");
          LassoParams& l = c.distribution.lasso;
          l.n = p.value("n", l.n);
          l.d = p.value("d", l.d);
          l.density = p.value("density", l.density);
          l.p = p.value("p", l.p);
          l.sigma_eps = p.value("sigma_eps", l.sigma_eps);
          l.lambda_reg = p.value("lambda", l.lambda_reg);
          break;
        }
      }
    }
    if (j.contains("algorithms")) {
      c.algorithms.clear();
      for (const auto& a : j.at("algorithms")) c.algorithms.push_back(parse_method(a.get<std::string>()));
    }
    c.step_scale = j.value("step_scale", c.step_scale);
    if (j.contains("class")) {
      const json& cl = j.at("class");
      check_keys(cl, {"mu", "L"}, "class");
      c.mu = auto_or_number(cl, "mu");
      c.L = auto_or_number(cl, "L");
    }
    if (j.contains("metric")) c.metric = parse_metric(j.at("metric").get<std::string>());
    if (j.contains("initial")) {
      const json& in = j.at("initial");
      check_keys(in, {"kind", "r"}, "initial");
      if (in.contains("kind")) c.initial.kind = parse_initial(in.at("kind").get<std::string>());
      c.initial.r = in.value("r", c.initial.r);
    }
    if (j.contains("x0")) {
      const std::string m = j.at("x0").get<std::string>();
      if (m == "sphere") c.x0 = X0Mode::kSphere;
      else if (m == "axis") c.x0 = X0Mode::kAxis;
      else throw ParameterError("x0 must be \"sphere\" or \"axis\"");
    }
    c.N_train = j.value("N_train", c.N_train);
    c.N_holdout = j.value("N_holdout", c.N_holdout);
    c.pool_size = j.value("pool_size", c.pool_size);
    if (j.contains("K_list")) c.K_list = j.at("K_list").get<std::vector<int>>();
    if (j.contains("epsilon_grid")) {
      const json& g = j.at("epsilon_grid");
      if (g.is_array()) {
        c.epsilon_grid = g.get<std::vector<double>>();
      } else {
        check_keys(g, {"count", "min", "max"}, "epsilon_grid");
        c.epsilon_grid = log_grid(g.value("min", 1e-2), g.value("max", 1e1), g.value("count", 10));
      }
    }
    c.alpha = j.value("alpha", c.alpha);
    c.beta = j.value("beta", c.beta);
    c.resample_count = j.value("resample_count", c.resample_count);
    if (j.contains("cv_search")) {
      const std::string s = j.at("cv_search").get<std::string>();
      if (s == "grid") c.cv_search = CvSearch::kGrid;
      else if (s == "bisect") c.cv_search = CvSearch::kBisect;
      else throw ParameterError("cv_search must be \"grid\" or \"bisect\"");
    }
    c.coverage_per_K = j.value("coverage_per_K", c.coverage_per_K);
    if (j.contains("forms")) {
      c.forms.clear();
      for (const auto& f : j.at("forms")) c.forms.push_back(parse_risk_form(f.get<std::string>()));
    }
    if (j.contains("preconditioner")) {
      const std::string p = j.at("preconditioner").get<std::string>();
      if (p == "identity") c.identity_preconditioner = true;
      else if (p == "data") c.identity_preconditioner = false;
      else throw ParameterError("preconditioner must be \"data\" or \"identity\"");
    }
    if (j.contains("fit")) {
      const json& f = j.at("fit");
      check_keys(f, {"fix_rho_one", "fix_gamma", "with_loglog", "min_K"}, "fit");
      c.fit.fix_rho_one = f.value("fix_rho_one", false);
      c.fit.with_loglog = f.value("with_loglog", false);
      c.fit.min_K = f.value("min_K", 1);
      if (f.contains("fix_gamma") && !f.at("fix_gamma").is_null()) c.fit.fix_gamma = f.at("fix_gamma").get<double>();
    }
    if (j.contains("sweep_K")) c.sweep_K = j.at("sweep_K").get<std::vector<int>>();
    if (j.contains("solver")) {
      const json& s = j.at("solver");
      check_keys(s, {"tol", "max_iter", "relax_steps", "verbose"}, "solver");
      c.solver.tol = s.value("tol", c.solver.tol);
      c.solver.max_iter = s.value("max_iter", c.solver.max_iter);
      c.solver.relax_steps = s.value("relax_steps", c.solver.relax_steps);
      c.solver.verbose = s.value("verbose", c.solver.verbose);
    }
    c.output_dir = j.value("output_dir", c.output_dir);
  } catch (const json::exception& e) {
    throw ParameterError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  json d;
  d["family"] = to_string(c.distribution.family);
  d["seed"] = c.distribution.seed;
  switch (c.distribution.family) {
    case Family::kMpQuadratic: {
      const MpParams& m = c.distribution.mp;
      d["params"] = {{"mu", m.mu}, {"L", m.L}, {"d", m.d}, {"max_retries", m.max_retries}};
      break;
    }
    case Family::kLogistic: {
      const LogisticParams& l = c.distribution.logistic;
      d["params"] = {{"n", l.n}, {"d", l.d}, {"p", l.p}, {"sigma_A", l.sigma_A},
                     {"xtilde_max", l.xtilde_max}, {"lambda", l.lambda_reg}};
      break;
    }
    case Family::kLasso: {
      const LassoParams& l = c.distribution.lasso;
      d["params"] = {{"n", l.n}, {"d", l.d}, {"density", l.density}, {"p", l.p},
                     {"sigma_eps", l.sigma_eps}, {"lambda", l.lambda_reg}};
      break;
    }
  }
  j["distribution"] = d;
  j["algorithms"] = json::array();
  for (Method m : c.algorithms) j["algorithms"].push_back(to_string(m));
  j["step_scale"] = c.step_scale;
  j["class"] = {{"mu", c.mu ? json(*c.mu) : json("auto")}, {"L", c.L ? json(*c.L) : json("auto")}};
  j["metric"] = to_string(c.metric);
  j["initial"] = {{"kind", to_string(c.initial.kind)}, {"r", c.initial.r}};
  j["x0"] = x0_name(c.x0);
  j["N_train"] = c.N_train;
  j["N_holdout"] = c.N_holdout;
  j["pool_size"] = c.pool();
  j["K_list"] = c.K_list;
  j["epsilon_grid"] = c.grid();
  j["alpha"] = c.alpha;
  j["beta"] = c.beta;
  j["resample_count"] = c.resample_count;
  j["cv_search"] = search_name(c.cv_search);
  j["coverage_per_K"] = c.coverage_per_K;
  j["forms"] = json::array();
  for (RiskForm f : c.forms) j["forms"].push_back(to_string(f));
  j["preconditioner"] = c.identity_preconditioner ? "identity" : "data";
  j["fit"] = {{"fix_rho_one", c.fit.fix_rho_one},
              {"fix_gamma", c.fit.fix_gamma ? json(*c.fit.fix_gamma) : json(nullptr)},
              {"with_loglog", c.fit.with_loglog},
              {"min_K", c.fit.min_K}};
  j["sweep_K"] = c.sweep_K;
  j["solver"] = {{"tol", c.solver.tol}, {"max_iter", c.solver.max_iter}, {"relax_steps", c.solver.relax_steps}};
  j["output_dir"] = c.output_dir;
  return j.dump(2);
}

std::uint64_t train_seed(std::uint64_t master, int i) { return hash64(master, static_cast<std::uint64_t>(i)); }
std::uint64_t holdout_seed(std::uint64_t master, int i) {
  return hash64(hash64(master, kHoldoutTag), static_cast<std::uint64_t>(i));
}
std::uint64_t resample_seed(std::uint64_t master, int b) {
  return hash64(hash64(master, kResampleTag), static_cast<std::uint64_t>(b));
}
std::uint64_t dictionary_seed(std::uint64_t master) { return hash64(master, kDictionaryTag); }
std::uint64_t x0_seed(std::uint64_t instance_seed) { return hash64(instance_seed, 1); }

Eigen::VectorXd sphere_point(int d, double r, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> nd;
  Eigen::VectorXd u(d);
  double n2 = 0.0;
  while (!(n2 > 0.0)) {
    for (int i = 0; i < d; ++i) u(i) = nd(rng);
    n2 = u.squaredNorm();
  }
  return r * u / std::sqrt(n2);
}

Eigen::VectorXd initial_point(X0Mode mode, const Eigen::VectorXd& x_star, double r, std::uint64_t seed) {
  const int d = static_cast<int>(x_star.size());
  if (mode == X0Mode::kAxis) {
    Eigen::VectorXd x0 = x_star;
    x0(0) += r;
    return x0;
  }
  return x_star + sphere_point(d, r, seed);
}

FunctionClass resolve_class(const ExperimentConfig& config) {
  const DistributionConfig& dist = config.distribution;
  FunctionClass cls;
  if (config.mu && config.L) {
    cls = {*config.mu, *config.L};
    cls.validate();
    return cls;
  }
  double mu = 0.0, L = 0.0;
  switch (dist.family) {
    case Family::kMpQuadratic:
      mu = dist.mp.mu;
      L = dist.mp.L;
      break;
    case Family::kLasso:
      mu = 0.0;
      L = lasso_smoothness(*dictionary(dist));
      break;
    case Family::kLogistic: {
      const int P = config.pool(), H = config.N_holdout;
      std::vector<double> Ls(static_cast<std::size_t>(P + H)), mus(Ls.size());
      parallel_for(P + H, [&](int i) {
        const std::uint64_t seed = i < P ? train_seed(dist.seed, i) : holdout_seed(dist.seed, i - P);
        const LogisticInstance inst = sample_logistic(dist.logistic, seed);
        Ls[static_cast<std::size_t>(i)] = inst.L;
        mus[static_cast<std::size_t>(i)] = inst.mu;
      });
      L = *std::max_element(Ls.begin(), Ls.end());
      mu = *std::min_element(mus.begin(), mus.end());
      break;
    }
  }
  cls = {config.mu.value_or(mu), config.L.value_or(L)};
  cls.validate();
  return cls;
}

AlgorithmSpec algorithm_spec(const ExperimentConfig& config, const FunctionClass& cls, Method method, int K) {
  return make_spec(method, config.step_scale / cls.L, K, cls.mu / cls.L);
}

PepForms experiment_forms(const ExperimentConfig& config, const FunctionClass& cls, Method method, int K) {
  return build_pep_forms(algorithm_spec(config, cls, method, K), cls, config.metric, config.initial);
}

ExperimentData generate_data(const ExperimentConfig& config) {
  return generate_data(config, resolve_class(config));
}

ExperimentData generate_data(const ExperimentConfig& config, const FunctionClass& cls) {
  config.validate();
  const DistributionConfig& dist = config.distribution;
  const auto A = dictionary(dist);
  const int P = config.pool(), H = config.N_holdout;
  const std::size_t nA = config.algorithms.size(), nK = config.K_list.size();

  ExperimentData data;
  data.cls = cls;
  data.pool.assign(nA, std::vector<std::vector<LiftedSample>>(nK, std::vector<LiftedSample>(static_cast<std::size_t>(P))));
  data.holdout.assign(nA, std::vector<std::vector<double>>(nK, std::vector<double>(static_cast<std::size_t>(H))));

  std::vector<std::vector<AlgorithmSpec>> specs(nA);
  for (std::size_t a = 0; a < nA; ++a)
    for (int K : config.K_list) specs[a].push_back(algorithm_spec(config, cls, config.algorithms[a], K));

  parallel_for(P + H, [&](int i) {
    const bool train = i < P;
    const std::uint64_t seed = train ? train_seed(dist.seed, i) : holdout_seed(dist.seed, i - P);
    const Instance inst = sample_instance(dist, A, seed);
    const Reference ref = reference_solution(inst);
    const Eigen::VectorXd x0 = initial_point(config.x0, ref.x_star, config.initial.r, x0_seed(seed));
    for (std::size_t a = 0; a < nA; ++a)
      for (std::size_t k = 0; k < nK; ++k) {
        const Trajectory traj = run(specs[a][k], inst, x0, ref);
        if (train) data.pool[a][k][static_cast<std::size_t>(i)] = lift(traj, seed);
        else data.holdout[a][k][static_cast<std::size_t>(i - P)] = direct_metric(traj, config.metric);
      }
  });
  return data;
}

double empirical_risk(const std::vector<double>& values, RiskForm form, double alpha) {
  return form == RiskForm::kExpectation ? empirical_mean(values) : empirical_cvar(values, alpha);
}

std::vector<int> resample_indices(int pool_size, int N, std::uint64_t seed) {
  if (N < 1 || N > pool_size) throw ParameterError("resample_indices: need 1 <= N <= pool size");
  std::vector<int> idx(static_cast<std::size_t>(pool_size));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  // Partial Fisher-Yates.
  for (int k = 0; k < N; ++k) {
    std::uniform_int_distribution<int> u(k, pool_size - 1);
    std::swap(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(u(rng))]);
  }
  idx.resize(static_cast<std::size_t>(N));
  std::sort(idx.begin(), idx.end());
  return idx;
}

DroSolution solve_subset(const std::vector<LiftedSample>& pool, const std::vector<int>& indices,
                         const PepForms& forms, double epsilon, RiskForm form, double alpha,
                         bool identity_preconditioner, const conic::SolveOptions& solver) {
  DroSpec spec;
  spec.samples.reserve(indices.size());
  for (int i : indices) spec.samples.push_back(pool.at(static_cast<std::size_t>(i)));
  spec.epsilon = epsilon;
  spec.form = form;
  spec.alpha = form == RiskForm::kExpectation ? 1.0 : alpha;
  spec.forms = forms;
  spec.D = identity_preconditioner ? Preconditioner::identity(forms.layout) : preconditioner(spec.samples);
  return solve_dro(spec, solver);
}

namespace {

bool covers(const DroSolution& sol, double target) {
  return sol.optimal() && sol.objective >= target - 1e-6 * std::abs(target) - 1e-12;
}

std::string failure_text(double eps, int b, const DroSolution& sol) {
  std::ostringstream os;
  os << "eps=" << format_number(eps) << " resample=" << b << ": " << conic::to_string(sol.status) << " ("
     << sol.backend_status << ")";
  return os.str();
}

}  // namespace

CrossValResult crossvalidate_epsilon(const std::vector<LiftedSample>& train_pool,
                                     const std::vector<double>& holdout_values, const PepForms& forms,
                                     const std::vector<double>& grid, const CrossValOptions& options) {
  if (grid.empty()) throw ParameterError("crossvalidate_epsilon: empty grid");
  if (!(options.beta > 0.0 && options.beta < 1.0)) throw ParameterError("crossvalidate_epsilon: beta must lie in (0, 1)");
  if (options.resample_count < 1) throw ParameterError("crossvalidate_epsilon: resample_count must be positive");
  const int G = static_cast<int>(grid.size()), R = options.resample_count;
  const int P = static_cast<int>(train_pool.size());

  CrossValResult res;
  res.grid = grid;
  res.target = empirical_risk(holdout_values, options.form, options.alpha);

  std::vector<std::vector<int>> subsets(static_cast<std::size_t>(R));
  for (int b = 0; b < R; ++b) subsets[static_cast<std::size_t>(b)] = resample_indices(P, options.N, resample_seed(options.seed, b));

  // covered[g * R + b]; failures are logged per (g, b) and merged in order.
  std::vector<char> covered(static_cast<std::size_t>(G * R), 0);
  std::vector<std::string> fail_text(static_cast<std::size_t>(G * R));
  auto evaluate = [&](int g, int b) {
    const DroSolution sol = solve_subset(train_pool, subsets[static_cast<std::size_t>(b)], forms,
                                         grid[static_cast<std::size_t>(g)], options.form, options.alpha,
                                         options.identity_preconditioner, options.solver);
    if (!sol.optimal()) fail_text[static_cast<std::size_t>(g * R + b)] = failure_text(grid[static_cast<std::size_t>(g)], b, sol);
    return covers(sol, res.target);
  };

  if (options.search == CvSearch::kGrid) {
    parallel_for(G * R, [&](int t) { covered[static_cast<std::size_t>(t)] = evaluate(t / R, t % R); });
  } else {
    // Smallest covering grid index per resample, using monotonicity in eps.
    parallel_for(R, [&](int b) {
      int lo = 0, hi = G;
      if (evaluate(0, b)) hi = 0;
      else lo = 1;
      while (lo < hi) {
        const int mid = (lo + hi) / 2;
        if (evaluate(mid, b)) hi = mid;
        else lo = mid + 1;
      }
      for (int g = lo; g < G; ++g) covered[static_cast<std::size_t>(g * R + b)] = 1;
    });
  }

  res.coverage.assign(static_cast<std::size_t>(G), 0.0);
  for (int g = 0; g < G; ++g) {
    int c = 0;
    for (int b = 0; b < R; ++b) c += covered[static_cast<std::size_t>(g * R + b)];
    res.coverage[static_cast<std::size_t>(g)] = static_cast<double>(c) / R;
  }
  for (const auto& t : fail_text)
    if (!t.empty()) {
      ++res.failures;
      res.log.push_back(t);
    }
  for (int g = 0; g < G; ++g)
    if (res.coverage[static_cast<std::size_t>(g)] >= 1.0 - options.beta - 1e-12) {
      res.index = g;
      break;
    }
  if (res.index < 0) {
    res.index = G - 1;
    res.warning = true;
    res.log.push_back("no grid radius reaches coverage 1 - beta; using the largest");
  }
  res.epsilon = grid[static_cast<std::size_t>(res.index)];
  return res;
}

double coverage_at(const std::vector<LiftedSample>& train_pool, double target, const PepForms& forms,
                   double epsilon, const CrossValOptions& options, int* failures) {
  const int R = options.resample_count, P = static_cast<int>(train_pool.size());
  std::vector<char> covered(static_cast<std::size_t>(R), 0), failed(static_cast<std::size_t>(R), 0);
  parallel_for(R, [&](int b) {
    const DroSolution sol = solve_subset(train_pool, resample_indices(P, options.N, resample_seed(options.seed, b)),
                                         forms, epsilon, options.form, options.alpha,
                                         options.identity_preconditioner, options.solver);
    failed[static_cast<std::size_t>(b)] = !sol.optimal();
    covered[static_cast<std::size_t>(b)] = covers(sol, target);
  });
  if (failures) *failures = static_cast<int>(std::count(failed.begin(), failed.end(), 1));
  return static_cast<double>(std::count(covered.begin(), covered.end(), 1)) / R;
}

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", value);
  return buf;
}

namespace {

const char* kResultHeader =
    "K,wc_bound,dro_expect,dro_cvar,emp_mean,emp_cvar,emp_max,eps_expect,eps_cvar,solve_time_s";

}  // namespace

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << kResultHeader << '\n';
  for (const auto& r : rows)
    out << r.K << ',' << format_number(r.wc_bound) << ',' << format_number(r.dro_expect) << ','
        << format_number(r.dro_cvar) << ',' << format_number(r.emp_mean) << ',' << format_number(r.emp_cvar) << ','
        << format_number(r.emp_max) << ',' << format_number(r.eps_expect) << ',' << format_number(r.eps_cvar) << ','
        << format_number(r.solve_time_s) << '\n';
}

std::vector<ResultRow> read_results_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParameterError("results csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kResultHeader) throw ParameterError(std::string("results csv: expected header ") + kResultHeader);
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<double> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(std::strtod(cell.c_str(), nullptr));
    if (f.size() != 10) throw ParameterError("results csv: expected 10 columns in '" + line + "'");
    rows.push_back({static_cast<int>(f[0]), f[1], f[2], f[3], f[4], f[5], f[6], f[7], f[8], f[9]});
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "epsilon,K,dro_value,wc_bound,in_sample\n";
  for (const auto& r : rows)
    out << format_number(r.epsilon) << ',' << r.K << ',' << format_number(r.dro_value) << ','
        << format_number(r.wc_bound) << ',' << format_number(r.in_sample) << '\n';
}

std::vector<std::string> ordering_violations(const std::vector<ResultRow>& rows) {
  std::vector<std::string> out;
  auto check = [&](int K, bool ok, const char* what, double lhs, double rhs) {
    if (std::isnan(lhs) || std::isnan(rhs) || ok) return;
    out.push_back("K=" + std::to_string(K) + ": " + what + " (" + format_number(lhs) + " vs " +
                  format_number(rhs) + ")");
  };
  for (const auto& r : rows) {
    check(r.K, r.emp_mean <= r.emp_cvar + 1e-12 * std::abs(r.emp_cvar), "emp_mean <= emp_cvar", r.emp_mean, r.emp_cvar);
    check(r.K, r.emp_cvar <= r.emp_max + 1e-12 * std::abs(r.emp_max), "emp_cvar <= emp_max", r.emp_cvar, r.emp_max);
    check(r.K, r.emp_max <= r.wc_bound + 1e-5, "emp_max <= wc_bound + 1e-5", r.emp_max, r.wc_bound);
    check(r.K, r.dro_expect >= r.emp_mean - 1e-6, "dro_expect >= emp_mean - 1e-6", r.dro_expect, r.emp_mean);
    check(r.K, r.dro_cvar >= r.emp_cvar - 1e-6, "dro_cvar >= emp_cvar - 1e-6", r.dro_cvar, r.emp_cvar);
  }
  return out;
}

std::vector<SeriesFit> fit_series(const std::vector<ResultRow>& rows, const FitConfig& fit, double phi0,
                                  const conic::SolveOptions& solver) {
  const std::pair<const char*, double ResultRow::*> columns[] = {
      {"wc_bound", &ResultRow::wc_bound}, {"dro_expect", &ResultRow::dro_expect}, {"dro_cvar", &ResultRow::dro_cvar},
      {"emp_mean", &ResultRow::emp_mean}, {"emp_cvar", &ResultRow::emp_cvar},     {"emp_max", &ResultRow::emp_max}};
  std::vector<SeriesFit> out;
  for (const auto& [name, member] : columns) {
    SeriesFit sf;
    sf.series = name;
    std::vector<RatePoint> pts;
    bool missing = false;
    for (const auto& r : rows) {
      if (r.K < fit.min_K) continue;
      const double v = r.*member;
      if (std::isnan(v)) missing = true;
      else if (v > 0.0) pts.push_back({r.K, v});
    }
    if (missing) continue;  // column not computed in this run
    if (pts.size() < 3) {
      sf.error = "fewer than 3 positive points";
    } else {
      RateFitOptions opt;
      opt.fix_rho_one = fit.fix_rho_one;
      opt.fix_gamma = fit.fix_gamma;
      opt.with_loglog = fit.with_loglog;
      opt.phi0 = phi0;
      opt.solver = solver;
      try {
        sf.fit = fit_rate(pts, opt);
      } catch (const Error& e) {
        sf.error = e.what();
      }
    }
    out.push_back(std::move(sf));
  }
  return out;
}

void write_rates_json(std::ostream& out, const std::vector<SeriesFit>& fits) {
  json arr = json::array();
  for (const auto& sf : fits) {
    json j;
    j["series"] = sf.series;
    if (sf.fit) {
      j["C"] = number(sf.fit->C);
      j["rho"] = number(sf.fit->rho);
      j["gamma"] = number(sf.fit->gamma);
      j["omega"] = number(sf.fit->omega);
      j["residual"] = number(sf.fit->residual);
      j["active"] = sf.fit->active;
      j["rho_clipped"] = sf.fit->rho_clipped;
    } else {
      for (const char* k : {"C", "rho", "gamma", "omega", "residual"}) j[k] = nullptr;
      j["error"] = sf.error;
    }
    arr.push_back(j);
  }
  out << arr.dump(2) << '\n';
}

ExperimentReport run_experiment(const ExperimentConfig& config, bool write_files) {
  const auto t_start = std::chrono::steady_clock::now();
  config.validate();
  namespace fs = std::filesystem;
  const fs::path out_dir(config.output_dir);

  ExperimentReport report;
  report.config = config;

  json manifest;
  manifest["name"] = config.name;
  manifest["status"] = "running";
  manifest["config"] = json::parse(config_to_json(config));
  manifest["seeds"] = {
      {"master", config.distribution.seed},
      {"train_instance", "hash64(master, i)"},
      {"holdout_instance", "hash64(hash64(master, 0x686f6c646f7574), i)"},
      {"x0", "hash64(instance_seed, 1)"},
      {"resample", "hash64(hash64(master, 0x726573616d706c65), b)"},
      {"dictionary", "hash64(master, 0x64696374)"}};
  const conic::Backend& backend = conic::default_backend();
  manifest["solver"] = {{"backend", backend.name()}, {"version", backend.version()},
                        {"tol", config.solver.tol}, {"max_iter", config.solver.max_iter},
                        {"relax_steps", config.solver.relax_steps}};
  manifest["stages"] = json::array();
  manifest["algorithms"] = json::array();
  manifest["files"] = json::array();

  auto flush_manifest = [&]() {
    if (!write_files) return;
    fs::create_directories(out_dir);
    write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  };
  auto stage = [&](const std::string& name, double seconds) {
    manifest["stages"].push_back({{"stage", name}, {"wall_time_s", number(seconds)}});
  };

  try {
    auto t0 = std::chrono::steady_clock::now();
    const FunctionClass cls = resolve_class(config);
    report.cls = cls;
    manifest["class"] = {{"mu", number(cls.mu)}, {"L", number(cls.L)}};
    const ExperimentData data = generate_data(config, cls);
    report.sampling_time_s = seconds_since(t0);
    stage("sampling", report.sampling_time_s);

    const std::vector<double> grid = config.grid();
    const std::size_t nK = config.K_list.size();
    const std::size_t kcv = nK - 1;

    for (std::size_t a = 0; a < config.algorithms.size(); ++a) {
      const Method method = config.algorithms[a];
      const std::string alg = to_string(method);
      AlgorithmReport ar;
      ar.method = method;
      json aj;
      aj["method"] = alg;
      aj["step_size"] = number(config.step_scale / cls.L);

      t0 = std::chrono::steady_clock::now();
      std::vector<PepForms> forms(nK);
      std::vector<double> wc(nK);
      for (std::size_t k = 0; k < nK; ++k) {
        forms[k] = experiment_forms(config, cls, method, config.K_list[k]);
        const WorstCaseResult w = worst_case_pep(forms[k], config.solver);
        if (!w.optimal())
          throw SolverError("worst-case PEP for " + alg + " at K=" + std::to_string(config.K_list[k]) + ": " +
                            w.backend_status);
        wc[k] = w.value;
      }
      if (!is_composite_method(method)) {
        const WorstCaseResult w0 = worst_case_pep(experiment_forms(config, cls, method, 0), config.solver);
        if (!w0.optimal()) throw SolverError("worst-case PEP for " + alg + " at K=0: " + w0.backend_status);
        ar.phi0 = w0.value;
      }
      stage(alg + ": worst-case PEP", seconds_since(t0));

      // Cross-validate the radius at the largest K and reuse it for every K.
      t0 = std::chrono::steady_clock::now();
      CrossValOptions cvo;
      cvo.alpha = config.alpha;
      cvo.beta = config.beta;
      cvo.N = config.N_train;
      cvo.resample_count = config.resample_count;
      cvo.seed = config.distribution.seed;
      cvo.identity_preconditioner = config.identity_preconditioner;
      cvo.search = config.cv_search;
      cvo.solver = config.solver;
      aj["crossval"] = json::array();
      for (RiskForm form : config.forms) {
        cvo.form = form;
        CrossValResult cv = crossvalidate_epsilon(data.pool[a][kcv], data.holdout[a][kcv], forms[kcv], grid, cvo);
        aj["crossval"].push_back(cv_json(cv, form));
        (form == RiskForm::kExpectation ? ar.cv_expect : ar.cv_cvar) = std::move(cv);
      }
      stage(alg + ": cross-validation", seconds_since(t0));

      // Bounds on the training set.
      t0 = std::chrono::steady_clock::now();
      std::vector<int> train(static_cast<std::size_t>(config.N_train));
      std::iota(train.begin(), train.end(), 0);
      for (std::size_t k = 0; k < nK; ++k) {
        ResultRow row;
        row.K = config.K_list[k];
        row.wc_bound = wc[k];
        const auto& hv = data.holdout[a][k];
        row.emp_mean = empirical_mean(hv);
        row.emp_cvar = empirical_cvar(hv, config.alpha);
        row.emp_max = empirical_max(hv);
        row.dro_expect = row.dro_cvar = row.eps_expect = row.eps_cvar = nan();
        for (RiskForm form : config.forms) {
          const double eps = (form == RiskForm::kExpectation ? ar.cv_expect : ar.cv_cvar)->epsilon;
          const DroSolution sol = solve_subset(data.pool[a][k], train, forms[k], eps, form, config.alpha,
                                               config.identity_preconditioner, config.solver);
          if (!sol.optimal())
            throw SolverError("DRO " + std::string(to_string(form)) + " for " + alg + " at K=" +
                              std::to_string(row.K) + ": " + sol.backend_status);
          row.solve_time_s += sol.solve_time;
          if (form == RiskForm::kExpectation) {
            row.dro_expect = sol.objective;
            row.eps_expect = eps;
          } else {
            row.dro_cvar = sol.objective;
            row.eps_cvar = eps;
          }
        }
        ar.rows.push_back(row);
      }
      stage(alg + ": DRO bounds", seconds_since(t0));

      if (config.coverage_per_K) {
        t0 = std::chrono::steady_clock::now();
        json cov = json::array();
        for (std::size_t k = 0; k < nK; ++k) {
          json ck;
          ck["K"] = config.K_list[k];
          for (RiskForm form : config.forms) {
            cvo.form = form;
            const auto& cv = form == RiskForm::kExpectation ? ar.cv_expect : ar.cv_cvar;
            int fails = 0;
            const double c = coverage_at(data.pool[a][k], empirical_risk(data.holdout[a][k], form, config.alpha),
                                         forms[k], cv->epsilon, cvo, &fails);
            (form == RiskForm::kExpectation ? ar.coverage_expect : ar.coverage_cvar).push_back(c);
            ck[to_string(form)] = {{"coverage", c}, {"failures", fails}};
          }
          cov.push_back(ck);
        }
        aj["coverage_per_K"] = cov;
        stage(alg + ": coverage per K", seconds_since(t0));
      }

      if (!config.sweep_K.empty()) {
        t0 = std::chrono::steady_clock::now();
        const RiskForm form = config.forms.front();
        for (int K : config.sweep_K) {
          const std::size_t k = static_cast<std::size_t>(
              std::find(config.K_list.begin(), config.K_list.end(), K) - config.K_list.begin());
          const Eigen::VectorXd ins = in_sample_metric(
              {data.pool[a][k].begin(), data.pool[a][k].begin() + config.N_train}, forms[k]);
          const double in_sample = empirical_risk({ins.data(), ins.data() + ins.size()}, form, config.alpha);
          for (double eps : grid) {
            const DroSolution sol = solve_subset(data.pool[a][k], train, forms[k], eps, form, config.alpha,
                                                 config.identity_preconditioner, config.solver);
            if (!sol.optimal())
              throw SolverError("epsilon sweep for " + alg + " at K=" + std::to_string(K) + ": " + sol.backend_status);
            ar.sweep.push_back({eps, K, sol.objective, wc[k], in_sample});
          }
        }
        stage(alg + ": epsilon sweep", seconds_since(t0));
      }

      ar.fits = fit_series(ar.rows, config.fit, ar.phi0, config.solver);
      aj["phi0"] = number(ar.phi0);
      ar.violations = ordering_violations(ar.rows);
      aj["ordering_violations"] = ar.violations;

      if (write_files) {
        fs::create_directories(out_dir);
        std::ostringstream csv, rates;
        write_results_csv(csv, ar.rows);
        write_file(out_dir / ("results_" + alg + ".csv"), csv.str());
        write_rates_json(rates, ar.fits);
        write_file(out_dir / ("rates_" + alg + ".json"), rates.str());
        manifest["files"].push_back("results_" + alg + ".csv");
        manifest["files"].push_back("rates_" + alg + ".json");
        if (!ar.sweep.empty()) {
          std::ostringstream sw;
          write_sweep_csv(sw, ar.sweep);
          write_file(out_dir / ("eps_sweep_" + alg + ".csv"), sw.str());
          manifest["files"].push_back("eps_sweep_" + alg + ".csv");
        }
      }
      manifest["algorithms"].push_back(aj);
      report.algorithms.push_back(std::move(ar));
      flush_manifest();
    }
  } catch (const std::exception& e) {
    manifest["status"] = "failed";
    manifest["error"] = e.what();
    manifest["total_time_s"] = number(seconds_since(t_start));
    flush_manifest();
    throw;
  }
  report.total_time_s = seconds_since(t_start);
  manifest["status"] = "complete";
  manifest["total_time_s"] = number(report.total_time_s);
  flush_manifest();
  return report;
}

}  // namespace dropep
