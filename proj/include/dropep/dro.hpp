#pragma once

// Wasserstein DRO-PEP programs.
//
// For samples (G_i, F_i), i = 1..N, and blocks j = 1..J with objective data
// (a_j A_obj, a_j b_obj, c_j):
//
//   minimize   (1/N) sum_i s_i
//   s.t.       c_j t - c0 tau_ij - <X_ij, G_i> - <Y_ij, F_i> + lambda eps <= s_i
//              sum_m y_ijm A_m + tau_ij A_0 - a_j A_obj - X_ij  PSD
//              sum_m y_ijm b_m + tau_ij b_0 - a_j b_obj - Y_ij  = 0
//              ||(D_G^{-1/2} X_ij D_G^{-1/2}, D_F^{-1} Y_ij)|| <= lambda
//              tau_ij >= 0, y_ij >= 0
//
// Expectation: J = 1, a = 1, c = 0 (t unused).
// CVaR_alpha:  J = 2, (a, c) = (1/alpha, 1 - 1/alpha) and (0, 1).

#include <Eigen/Core>

#include <string>
#include <utility>
#include <vector>

#include "dropep/conic.hpp"
#include "dropep/lifting.hpp"
#include "dropep/pep.hpp"

namespace dropep {

enum class RiskForm { kExpectation, kCvar };

const char* to_string(RiskForm form);
RiskForm parse_risk_form(const std::string& name);

struct DroSpec {
  std::vector<LiftedSample> samples;
  double epsilon = 0.0;
  RiskForm form = RiskForm::kExpectation;
  double alpha = 1.0;
  Preconditioner D;
  PepForms forms;

  // Throws ParameterError / LayoutError on inconsistent data.
  void validate() const;
};

// S*(y) = -sum_m y_m (A_m, b_m).
std::pair<Eigen::MatrixXd, Eigen::VectorXd> adjoint_S(const Eigen::VectorXd& y,
                                                      const std::vector<AffineForm>& forms);

// <(A_obj, b_obj), (G_i, F_i)> for every sample.
Eigen::VectorXd in_sample_metric(const std::vector<LiftedSample>& samples, const PepForms& forms);

// Variable handles of a built program.
struct DroBlockVars {
  int tau = -1;
  int y = -1;
  int X = -1;
  int Y = -1;
};

struct DroProgram {
  conic::ConicProgram program;
  int lambda = -1;
  int t = -1;  // CVaR only
  int s = -1;
  int J = 1;
  std::vector<DroBlockVars> blocks;  // index i * J + j
};

enum class Assembly { kParallel, kSerial };

DroProgram build_dro(const DroSpec& spec, Assembly assembly = Assembly::kParallel);
DroProgram build_dro_expectation(const DroSpec& spec, Assembly assembly = Assembly::kParallel);
DroProgram build_dro_cvar(const DroSpec& spec, Assembly assembly = Assembly::kParallel);

// Values of the packed second-order-cone row for (lambda, X, Y): entry 0 is
// lambda, the remaining entries have Euclidean norm equal to the dual norm.
Eigen::VectorXd dual_norm_row(double lambda, const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                              const Preconditioner& D);

struct DroSolution {
  conic::SolveStatus status = conic::SolveStatus::kNumericalLimit;
  std::string backend_status;
  double objective = 0.0;
  double relative_gap = 0.0;
  double solve_time = 0.0;
  double lambda = 0.0;
  double t = 0.0;
  Eigen::VectorXd s;
  std::vector<double> tau;             // index i * J + j
  std::vector<Eigen::VectorXd> y;
  std::vector<Eigen::MatrixXd> X;
  std::vector<Eigen::VectorXd> Y;

  bool optimal() const { return status == conic::SolveStatus::kOptimal; }
};

DroSolution solve_dro(const DroSpec& spec, const conic::SolveOptions& options = {},
                      Assembly assembly = Assembly::kParallel);

}  // namespace dropep
