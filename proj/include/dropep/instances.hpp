#pragma once

// Problem families: Marchenko-Pastur quadratics, l2-regularized logistic
// regression and Lasso sparse coding. Sampling is a pure function of
// (parameters, seed); instances are immutable once built.

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <variant>

namespace dropep {

// f(x) = 1/2 x'Qx with spectrum inside [mu, L].
struct QuadraticInstance {
  Eigen::MatrixXd Q;
  double mu = 0.0;
  double L = 1.0;
};

// f(x) = mean logistic loss of (A x, b) + lambda/2 ||x||^2.
struct LogisticInstance {
  Eigen::MatrixXd A;  // n x d, last column all ones
  Eigen::VectorXd b;  // labels in {0, 1}
  double lambda_reg = 0.0;
  double L = 0.0;  // lambda_max(A'A) / (4n) + lambda_reg
  double mu = 0.0;  // lambda_reg
};

// f(x) = h(x) + psi(x), h = 1/2 ||A x - b||^2, psi = lambda ||x||_1.
// The dictionary A is shared by every instance of an experiment.
struct LassoInstance {
  std::shared_ptr<const Eigen::MatrixXd> A;
  Eigen::VectorXd b;
  double lambda_reg = 0.0;
  double L = 0.0;  // lambda_max(A'A)
};

using Instance = std::variant<QuadraticInstance, LogisticInstance, LassoInstance>;

// Optimal point and value. For composite instances the smooth part's value
// and gradient at x_star are kept separately because lifting needs them.
struct Reference {
  Eigen::VectorXd x_star;
  double f_star = 0.0;
  double residual = 0.0;
  double smooth_value = 0.0;        // h(x*)
  Eigen::VectorXd smooth_gradient;  // grad h(x*)
  double nonsmooth_value = 0.0;     // psi(x*)
};

struct MpParams {
  double mu = 0.0;
  double L = 1.0;
  int d = 100;
  int max_retries = 100;
};

struct LogisticParams {
  int n = 1000;
  int d = 50;
  double p = 0.3;
  double sigma_A = 4.0;
  double xtilde_max = 3.0;
  double lambda_reg = 1e-2;
};

struct LassoParams {
  int n = 200;
  int d = 300;
  double density = 0.4;  // fraction of nonzeros in the dictionary
  double p = 0.3;
  double sigma_eps = 1e-3;
  double lambda_reg = 0.1;
};

// Marchenko-Pastur helpers: aspect ratio n and entry scale sigma such that
// the limiting spectrum of (1/d) A'A is supported on [mu, L].
double mp_ratio(double mu, double L);
double mp_sigma(double mu, double L);
// Density of the limiting spectrum at lambda.
double mp_density(double lambda, double mu, double L);

QuadraticInstance sample_mp_quadratic(const MpParams& params, std::uint64_t seed);
LogisticInstance sample_logistic(const LogisticParams& params, std::uint64_t seed);

// Dictionary with i.i.d. N(0, 1/n) entries at the given density and
// unit-norm columns.
Eigen::MatrixXd sample_lasso_dictionary(int n, int d, double density, std::uint64_t seed);
LassoInstance sample_lasso(std::shared_ptr<const Eigen::MatrixXd> A_shared,
                           const LassoParams& params, std::uint64_t seed);
// lambda_max(A'A) of a dictionary.
double lasso_smoothness(const Eigen::MatrixXd& A);

// Evaluation. The smooth part is the whole objective for quadratics and
// logistic regression and h for the Lasso.
int dimension(const Instance& inst);
bool is_composite(const Instance& inst);
double smoothness(const Instance& inst);
double strong_convexity(const Instance& inst);
double smooth_value(const Instance& inst, const Eigen::VectorXd& x);
Eigen::VectorXd smooth_gradient(const Instance& inst, const Eigen::VectorXd& x);
// lambda ||x||_1 for the Lasso, zero otherwise.
double nonsmooth_value(const Instance& inst, const Eigen::VectorXd& x);
double nonsmooth_weight(const Instance& inst);
double objective(const Instance& inst, const Eigen::VectorXd& x);

struct ReferenceOptions {
  double tol = 0.0;  // <= 0 selects the family default
  int max_iter = 200000;
};

// High-accuracy minimizer. Throws ReferenceAccuracyError if the tolerance
// is not reached within max_iter.
Reference reference_solution(const Instance& inst, const ReferenceOptions& options = {});

// Default reference tolerances per family.
inline constexpr double kQuadraticReferenceTol = 1e-10;
inline constexpr double kLogisticReferenceTol = 1e-9;
inline constexpr double kLassoReferenceTol = 1e-9;

}  // namespace dropep
