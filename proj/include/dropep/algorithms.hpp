#pragma once

// First-order methods and their numeric execution. A Trajectory records
// exactly the oracle information the symbolic trace in pep.hpp expects:
// one smooth oracle call per evaluation point (K + 1 in total, the last one
// at the final iterate) and, for composite methods, one prox step per
// iteration.

#include <Eigen/Core>

#include <string>
#include <vector>

#include "dropep/instances.hpp"

namespace dropep {

enum class Method {
  kGD,            // x+ = x - eta grad f(x)
  kFgmStrongCvx,  // Nesterov FGM, strongly convex momentum rule
  kFgmKOverK3,    // Nesterov FGM, beta_k = k / (k + 3)
  kIsta,          // x+ = S(x - eta grad h(x))
  kFista,         // FISTA momentum on ISTA
};

const char* to_string(Method method);
// Accepts "gd", "fgm", "fgm-strcvx", "fgm-k3", "ista", "fista".
Method parse_method(const std::string& name);
bool is_composite_method(Method method);
bool has_momentum(Method method);

struct AlgorithmSpec {
  Method method = Method::kGD;
  double step_size = 1.0;
  int K = 1;
  bool composite = false;
  double momentum_q = 0.0;  // mu / L, used by kFgmStrongCvx only

  // Throws ParameterError when the fields disagree.
  void validate() const;
};

// Convenience constructor filling `composite` from the method.
AlgorithmSpec make_spec(Method method, double step_size, int K, double momentum_q = 0.0);

// beta_0 .. beta_{k_max-1} of the strongly convex FGM rule with q = mu / L.
std::vector<double> fgm_momentum_strcvx(double q, int k_max);
// beta_k = k / (k + 3).
std::vector<double> fgm_momentum_k3(int k_max);
// beta_k = (alpha_k - 1) / alpha_{k+1}, alpha_0 = 1.
std::vector<double> fista_momentum(int k_max);
// Momentum sequence used by a method (empty for GD and ISTA).
std::vector<double> momentum(const AlgorithmSpec& spec);

double soft_threshold(double v, double delta);
Eigen::VectorXd soft_threshold(const Eigen::VectorXd& v, double delta);

// Smooth-part oracle call at an evaluation point.
struct OracleCall {
  Eigen::VectorXd x;
  Eigen::VectorXd g;
  double f = 0.0;
};

// Prox output x^{k+1} with its l1 subgradient s = (v - x^{k+1}) / (eta lambda)
// and the nonsmooth value lambda ||x^{k+1}||_1.
struct ProxStep {
  Eigen::VectorXd x;
  Eigen::VectorXd s;
  double psi = 0.0;
};

struct Trajectory {
  AlgorithmSpec spec;
  Eigen::VectorXd x0;
  std::vector<OracleCall> calls;  // K + 1 entries; calls.back().x == x_final
  std::vector<ProxStep> prox;     // K entries for composite methods
  Eigen::VectorXd x_final;
  Reference reference;
  double lambda_reg = 0.0;
};

// Runs spec.K iterations from x0. Throws DivergenceError on a non-finite
// iterate and ParameterError on a bad step size or dimension.
Trajectory run(const AlgorithmSpec& spec, const Instance& instance, const Eigen::VectorXd& x0,
               const Reference& reference);
Trajectory run(const AlgorithmSpec& spec, const Instance& instance, const Eigen::VectorXd& x0);

// Objective gap f(x_final) - f* of a trajectory.
double final_gap(const Trajectory& traj);

}  // namespace dropep
