// dropep: command-line front end of the experiment pipeline.

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>

#include "dropep/error.hpp"
#include "dropep/pipeline.hpp"
#include "dropep/risk.hpp"

namespace fs = std::filesystem;
using namespace dropep;

namespace {

struct Common {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::string form;
  std::optional<double> alpha;
};

void add_common(CLI::App* app, Common& c, bool config_required = true) {
  auto* opt = app->add_option("--config", c.config_path, "experiment config (JSON)");
  if (config_required) opt->required()->check(CLI::ExistingFile);
  app->add_option("--out", c.out, "output directory (overrides output_dir)");
  app->add_option("--seed", c.seed, "master seed (overrides distribution.seed)");
  app->add_option("--threads", c.threads, "OpenMP threads (0 keeps the default)");
  app->add_option("--form", c.form, "risk form")->check(CLI::IsMember({"expectation", "cvar"}));
  app->add_option("--alpha", c.alpha, "CVaR level in (0, 1]");
}

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = load_config(c.config_path);
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (c.seed) cfg.distribution.seed = *c.seed;
  if (!c.form.empty()) cfg.forms = {parse_risk_form(c.form)};
  if (c.alpha) cfg.alpha = *c.alpha;
  if (c.threads > 0) omp_set_num_threads(c.threads);
  cfg.validate();
  return cfg;
}

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

int cmd_sample(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const ExperimentData data = generate_data(cfg);
  for (std::size_t a = 0; a < cfg.algorithms.size(); ++a)
    for (std::size_t k = 0; k < cfg.K_list.size(); ++k) {
      const fs::path p = fs::path(cfg.output_dir) / ("samples_" + std::string(to_string(cfg.algorithms[a])) + "_K" +
                                                     std::to_string(cfg.K_list[k]) + ".jsonl");
      auto out = open_out(p);
      const auto& pool = data.pool[a][k];
      write_samples_jsonl(out, {pool.begin(), pool.begin() + cfg.N_train});
      std::cout << p.string() << '\n';
    }
  return 0;
}

int cmd_pep(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const FunctionClass cls = resolve_class(cfg);
  const fs::path p = fs::path(cfg.output_dir) / "pep.csv";
  auto out = open_out(p);
  out << "algorithm,K,wc_bound,solve_time_s\n";
  std::cout << "algorithm,K,wc_bound,solve_time_s\n";
  for (Method m : cfg.algorithms)
    for (int K : cfg.K_list) {
      const WorstCaseResult w = worst_case_pep(experiment_forms(cfg, cls, m, K), cfg.solver);
      if (!w.optimal()) throw SolverError("worst-case PEP at K=" + std::to_string(K) + ": " + w.backend_status);
      const std::string line = std::string(to_string(m)) + "," + std::to_string(K) + "," + format_number(w.value) +
                               "," + format_number(w.solve_time);
      out << line << '\n';
      std::cout << line << '\n';
    }
  return 0;
}

int cmd_dro(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const ExperimentData data = generate_data(cfg);
  const RiskForm form = cfg.forms.front();
  std::vector<int> train(static_cast<std::size_t>(cfg.N_train));
  std::iota(train.begin(), train.end(), 0);
  for (std::size_t a = 0; a < cfg.algorithms.size(); ++a) {
    std::vector<SweepRow> rows;
    for (std::size_t k = 0; k < cfg.K_list.size(); ++k) {
      const PepForms forms = experiment_forms(cfg, data.cls, cfg.algorithms[a], cfg.K_list[k]);
      const WorstCaseResult w = worst_case_pep(forms, cfg.solver);
      if (!w.optimal()) throw SolverError("worst-case PEP: " + w.backend_status);
      const auto& pool = data.pool[a][k];
      const Eigen::VectorXd ins = in_sample_metric({pool.begin(), pool.begin() + cfg.N_train}, forms);
      const double in_sample = empirical_risk({ins.data(), ins.data() + ins.size()}, form, cfg.alpha);
      for (double eps : cfg.grid()) {
        const DroSolution sol =
            solve_subset(pool, train, forms, eps, form, cfg.alpha, cfg.identity_preconditioner, cfg.solver);
        if (!sol.optimal()) throw SolverError("DRO at eps=" + format_number(eps) + ": " + sol.backend_status);
        rows.push_back({eps, cfg.K_list[k], sol.objective, w.value, in_sample});
      }
    }
    const fs::path p = fs::path(cfg.output_dir) / ("dro_" + std::string(to_string(cfg.algorithms[a])) + "_" +
                                                   to_string(form) + ".csv");
    auto out = open_out(p);
    write_sweep_csv(out, rows);
    std::cout << p.string() << '\n';
  }
  return 0;
}

int cmd_crossval(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const ExperimentData data = generate_data(cfg);
  const std::size_t k = cfg.K_list.size() - 1;
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t a = 0; a < cfg.algorithms.size(); ++a) {
    const PepForms forms = experiment_forms(cfg, data.cls, cfg.algorithms[a], cfg.K_list[k]);
    for (RiskForm form : cfg.forms) {
      CrossValOptions o;
      o.form = form;
      o.alpha = cfg.alpha;
      o.beta = cfg.beta;
      o.N = cfg.N_train;
      o.resample_count = cfg.resample_count;
      o.seed = cfg.distribution.seed;
      o.identity_preconditioner = cfg.identity_preconditioner;
      o.search = cfg.cv_search;
      o.solver = cfg.solver;
      const CrossValResult cv = crossvalidate_epsilon(data.pool[a][k], data.holdout[a][k], forms, cfg.grid(), o);
      std::cout << to_string(cfg.algorithms[a]) << ' ' << to_string(form) << ": eps=" << format_number(cv.epsilon)
                << (cv.warning ? " (warning: coverage target not reached)" : "") << '\n';
      out.push_back({{"algorithm", to_string(cfg.algorithms[a])},
                     {"form", to_string(form)},
                     {"K", cfg.K_list[k]},
                     {"epsilon", cv.epsilon},
                     {"warning", cv.warning},
                     {"target", cv.target},
                     {"grid", cv.grid},
                     {"coverage", cv.coverage},
                     {"failures", cv.failures},
                     {"log", cv.log}});
    }
  }
  auto f = open_out(fs::path(cfg.output_dir) / "crossval.json");
  f << out.dump(2) << '\n';
  return 0;
}

struct FitArgs {
  std::string csv;
  std::string out;
  std::string config_path;
  double phi0 = 0.0;
  bool loglog = false;
  bool fix_rho_one = false;
  int min_K = -1;
};

int cmd_fit(const FitArgs& f) {
  FitConfig fit;
  if (!f.config_path.empty()) fit = load_config(f.config_path).fit;
  if (f.loglog) fit.with_loglog = true;
  if (f.fix_rho_one) fit.fix_rho_one = true;
  if (f.min_K >= 0) fit.min_K = f.min_K;
  std::ifstream in(f.csv);
  if (!in) throw ParameterError("cannot open " + f.csv);
  const auto fits = fit_series(read_results_csv(in), fit, f.phi0);
  if (f.out.empty()) {
    write_rates_json(std::cout, fits);
  } else {
    auto out = open_out(f.out);
    write_rates_json(out, fits);
  }
  return 0;
}

int cmd_run(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const ExperimentReport rep = run_experiment(cfg);
  for (const auto& a : rep.algorithms) {
    std::cout << to_string(a.method) << ": " << a.rows.size() << " rows";
    if (!a.violations.empty()) std::cout << ", " << a.violations.size() << " ordering violations";
    std::cout << '\n';
  }
  std::cout << "wrote " << cfg.output_dir << " in " << format_number(rep.total_time_s) << " s\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data-driven performance estimation of first-order methods"};
  app.require_subcommand(1);

  Common sample_c, pep_c, dro_c, cv_c, run_c;
  FitArgs fit_a;
  auto* sample = app.add_subcommand("sample", "write lifted training samples as JSONL");
  add_common(sample, sample_c);
  auto* pep = app.add_subcommand("pep", "worst-case bound table");
  add_common(pep, pep_c);
  auto* dro = app.add_subcommand("dro", "DRO bounds over the epsilon grid");
  add_common(dro, dro_c);
  auto* cv = app.add_subcommand("crossval", "cross-validate epsilon at the largest K");
  add_common(cv, cv_c);
  auto* fit = app.add_subcommand("fit", "fit convergence rates to a results CSV");
  fit->add_option("--csv", fit_a.csv, "results CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--out", fit_a.out, "output JSON file (stdout if omitted)");
  fit->add_option("--config", fit_a.config_path, "take fit options from a config")->check(CLI::ExistingFile);
  fit->add_option("--phi0", fit_a.phi0, "initial value for the weights (<= 0: largest value)");
  fit->add_flag("--loglog", fit_a.loglog, "add the log log(K+1) term");
  fit->add_flag("--fix-rho-one", fit_a.fix_rho_one, "fix rho = 1");
  fit->add_option("--min-K", fit_a.min_K, "smallest K used in the fit");
  auto* run = app.add_subcommand("run", "full experiment");
  add_common(run, run_c);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sample) return cmd_sample(sample_c);
    if (*pep) return cmd_pep(pep_c);
    if (*dro) return cmd_dro(dro_c);
    if (*cv) return cmd_crossval(cv_c);
    if (*fit) return cmd_fit(fit_a);
    if (*run) return cmd_run(run_c);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
