#include "dropep/instances.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>
#include <string>

#include "dropep/error.hpp"
#include "dropep/seed.hpp"

namespace dropep {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require(bool cond, const std::string& what) {
  if (!cond) throw ParameterError(what);
}

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Eigen::VectorXd soft_threshold_vec(const Eigen::VectorXd& v, double delta) {
  Eigen::VectorXd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i)
    out(i) = std::min(v(i) + delta, std::max(v(i) - delta, 0.0));
  return out;
}

double max_eigenvalue(const Eigen::MatrixXd& sym) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

Reference logistic_reference(const LogisticInstance& inst, double tol, int max_iter) {
  const Instance wrapped = inst;
  const int d = static_cast<int>(inst.A.cols());
  const double eta = 1.0 / inst.L;
  const double sk = std::sqrt(inst.L / inst.mu);
  const double beta = (sk - 1.0) / (sk + 1.0);

  Eigen::VectorXd x = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd x_prev = x;
  Eigen::VectorXd gx = smooth_gradient(wrapped, x);
  for (int it = 0; it < max_iter; ++it) {
    if (gx.norm() <= tol) {
      Reference ref;
      ref.x_star = x;
      ref.f_star = smooth_value(wrapped, x);
      ref.residual = gx.norm();
      ref.smooth_value = ref.f_star;
      ref.smooth_gradient = gx;
      return ref;
    }
    const Eigen::VectorXd y = x + beta * (x - x_prev);
    const Eigen::VectorXd x_next = y - eta * smooth_gradient(wrapped, y);
    // Gradient-based adaptive restart.
    if ((y - x_next).dot(x_next - x) > 0.0) {
      x_prev = x;
      x = x - eta * gx;
    } else {
      x_prev = x;
      x = x_next;
    }
    gx = smooth_gradient(wrapped, x);
  }
  throw ReferenceAccuracyError("logistic reference: gradient norm " + std::to_string(gx.norm()) +
                               " above tolerance after " + std::to_string(max_iter) + " iterations");
}

Reference lasso_reference(const LassoInstance& inst, double tol, int max_iter) {
  const Instance wrapped = inst;
  const int d = static_cast<int>(inst.A->cols());
  const double eta = 1.0 / inst.L;
  const double delta = inst.lambda_reg * eta;

  auto residual_at = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& gx) {
    return (x - soft_threshold_vec(x - eta * gx, delta)).norm() / eta;
  };

  Eigen::VectorXd x = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd gx = smooth_gradient(wrapped, x);
  Eigen::VectorXd y = x;
  double t = 1.0;
  for (int it = 0; it <= max_iter; ++it) {
    const double res = residual_at(x, gx);
    if (res <= tol) {
      Reference ref;
      ref.x_star = x;
      ref.smooth_value = smooth_value(wrapped, x);
      ref.nonsmooth_value = nonsmooth_value(wrapped, x);
      ref.f_star = ref.smooth_value + ref.nonsmooth_value;
      ref.residual = res;
      ref.smooth_gradient = gx;
      return ref;
    }
    if (it == max_iter) break;
    const Eigen::VectorXd x_next = soft_threshold_vec(y - eta * smooth_gradient(wrapped, y), delta);
    if ((y - x_next).dot(x_next - x) > 0.0) {
      t = 1.0;
      y = x;
      continue;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = x_next + ((t - 1.0) / t_next) * (x_next - x);
    x = x_next;
    t = t_next;
    gx = smooth_gradient(wrapped, x);
  }
  throw ReferenceAccuracyError("lasso reference: prox-gradient residual above tolerance after " +
                               std::to_string(max_iter) + " iterations");
}

}  // namespace

double mp_ratio(double mu, double L) {
  const double a = std::sqrt(L) - std::sqrt(mu);
  const double b = std::sqrt(L) + std::sqrt(mu);
  return (a * a) / (b * b);
}

double mp_sigma(double mu, double L) { return 0.5 * (std::sqrt(L) + std::sqrt(mu)); }

double mp_density(double lambda, double mu, double L) {
  if (lambda <= mu || lambda >= L || lambda <= 0.0) return 0.0;
  const double n = mp_ratio(mu, L);
  const double s = mp_sigma(mu, L);
  return std::sqrt((L - lambda) * (lambda - mu)) / (2.0 * M_PI * n * s * s * lambda);
}

QuadraticInstance sample_mp_quadratic(const MpParams& params, std::uint64_t seed) {
  require(params.mu >= 0.0 && params.mu < params.L, "sample_mp_quadratic: need 0 <= mu < L");
  require(params.d >= 1, "sample_mp_quadratic: need d >= 1");
  require(params.max_retries >= 1, "sample_mp_quadratic: need max_retries >= 1");

  const double ratio = mp_ratio(params.mu, params.L);
  const double sigma = mp_sigma(params.mu, params.L);
  const int cols = std::max(1, static_cast<int>(std::ceil(ratio * params.d - 1e-9)));
  const double slack = 1e-12 * params.L;

  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, sigma);
  for (int attempt = 0; attempt < params.max_retries; ++attempt) {
    Eigen::MatrixXd A(params.d, cols);
    for (int j = 0; j < cols; ++j)
      for (int i = 0; i < params.d; ++i) A(i, j) = normal(rng);
    Eigen::MatrixXd Q = (A.transpose() * A) / static_cast<double>(params.d);
    Q = 0.5 * (Q + Q.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Q, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    if (ev.minCoeff() >= params.mu - slack && ev.maxCoeff() <= params.L + slack)
      return {std::move(Q), params.mu, params.L};
  }
  throw SamplingError("sample_mp_quadratic: rejection budget of " +
                      std::to_string(params.max_retries) + " draws exhausted");
}

LogisticInstance sample_logistic(const LogisticParams& params, std::uint64_t seed) {
  require(params.n >= 1 && params.d >= 1, "sample_logistic: need n, d >= 1");
  require(params.p >= 0.0 && params.p <= 1.0, "sample_logistic: need p in [0, 1]");
  require(params.sigma_A > 0.0 && params.xtilde_max > 0.0 && params.lambda_reg > 0.0,
          "sample_logistic: sigma_A, xtilde_max, lambda_reg must be positive");

  Rng rng(seed);
  std::normal_distribution<double> feature(0.0, params.sigma_A);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> coef(-params.xtilde_max, params.xtilde_max);

  LogisticInstance inst;
  inst.A.resize(params.n, params.d);
  for (int j = 0; j + 1 < params.d; ++j)
    for (int i = 0; i < params.n; ++i) inst.A(i, j) = feature(rng);
  inst.A.col(params.d - 1).setOnes();

  Eigen::VectorXd xtilde = Eigen::VectorXd::Zero(params.d);
  for (int i = 0; i < params.d; ++i) {
    const bool active = unit(rng) < params.p;
    const double value = coef(rng);
    if (active) xtilde(i) = value;
  }
  const Eigen::VectorXd z = inst.A * xtilde;
  inst.b.resize(params.n);
  for (int i = 0; i < params.n; ++i) inst.b(i) = (z(i) + noise(rng) > 0.0) ? 1.0 : 0.0;

  inst.lambda_reg = params.lambda_reg;
  inst.mu = params.lambda_reg;
  inst.L = max_eigenvalue(inst.A.transpose() * inst.A) / (4.0 * params.n) + params.lambda_reg;
  return inst;
}

Eigen::MatrixXd sample_lasso_dictionary(int n, int d, double density, std::uint64_t seed) {
  require(n >= 1 && d >= 1, "sample_lasso_dictionary: need n, d >= 1");
  require(density > 0.0 && density <= 1.0, "sample_lasso_dictionary: need density in (0, 1]");
  Rng rng(seed);
  std::normal_distribution<double> entry(0.0, 1.0 / std::sqrt(static_cast<double>(n)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXd A(n, d);
  for (int j = 0; j < d; ++j) {
    do {
      for (int i = 0; i < n; ++i) {
        const bool keep = unit(rng) < density;
        const double v = entry(rng);
        A(i, j) = keep ? v : 0.0;
      }
    } while (A.col(j).norm() == 0.0);
    A.col(j) /= A.col(j).norm();
  }
  return A;
}

double lasso_smoothness(const Eigen::MatrixXd& A) {
  return A.rows() <= A.cols() ? max_eigenvalue(A * A.transpose())
                              : max_eigenvalue(A.transpose() * A);
}

LassoInstance sample_lasso(std::shared_ptr<const Eigen::MatrixXd> A_shared,
                           const LassoParams& params, std::uint64_t seed) {
  require(A_shared != nullptr, "sample_lasso: missing dictionary");
  require(params.p >= 0.0 && params.p <= 1.0, "sample_lasso: need p in [0, 1]");
  require(params.sigma_eps >= 0.0 && params.lambda_reg > 0.0,
          "sample_lasso: need sigma_eps >= 0 and lambda_reg > 0");
  const Eigen::MatrixXd& A = *A_shared;
  for (Eigen::Index j = 0; j < A.cols(); ++j)
    require(std::abs(A.col(j).norm() - 1.0) <= 1e-12, "sample_lasso: dictionary columns must have unit norm");

  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd xtilde = Eigen::VectorXd::Zero(A.cols());
  for (Eigen::Index i = 0; i < A.cols(); ++i) {
    const bool active = unit(rng) < params.p;
    const double v = gauss(rng);
    if (active) xtilde(i) = v;
  }
  Eigen::VectorXd b = A * xtilde;
  for (Eigen::Index i = 0; i < b.size(); ++i) b(i) += params.sigma_eps * gauss(rng);

  LassoInstance inst;
  inst.L = lasso_smoothness(A);
  inst.A = std::move(A_shared);
  inst.b = std::move(b);
  inst.lambda_reg = params.lambda_reg;
  return inst;
}

int dimension(const Instance& inst) {
  return std::visit(Overloaded{
                        [](const QuadraticInstance& q) { return static_cast<int>(q.Q.rows()); },
                        [](const LogisticInstance& l) { return static_cast<int>(l.A.cols()); },
                        [](const LassoInstance& l) { return static_cast<int>(l.A->cols()); },
                    },
                    inst);
}

bool is_composite(const Instance& inst) { return std::holds_alternative<LassoInstance>(inst); }

double smoothness(const Instance& inst) {
  return std::visit([](const auto& i) { return i.L; }, inst);
}

double strong_convexity(const Instance& inst) {
  return std::visit(Overloaded{
                        [](const QuadraticInstance& q) { return q.mu; },
                        [](const LogisticInstance& l) { return l.mu; },
                        [](const LassoInstance&) { return 0.0; },
                    },
                    inst);
}

double smooth_value(const Instance& inst, const Eigen::VectorXd& x) {
  return std::visit(Overloaded{
                        [&](const QuadraticInstance& q) { return 0.5 * x.dot(q.Q * x); },
                        [&](const LogisticInstance& l) {
                          const Eigen::VectorXd z = l.A * x;
                          double acc = 0.0;
                          for (Eigen::Index i = 0; i < z.size(); ++i)
                            acc += softplus(z(i)) - l.b(i) * z(i);
                          return acc / static_cast<double>(z.size()) + 0.5 * l.lambda_reg * x.squaredNorm();
                        },
                        [&](const LassoInstance& l) { return 0.5 * (*l.A * x - l.b).squaredNorm(); },
                    },
                    inst);
}

Eigen::VectorXd smooth_gradient(const Instance& inst, const Eigen::VectorXd& x) {
  return std::visit(Overloaded{
                        [&](const QuadraticInstance& q) -> Eigen::VectorXd { return q.Q * x; },
                        [&](const LogisticInstance& l) -> Eigen::VectorXd {
                          Eigen::VectorXd r = l.A * x;
                          for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = sigmoid(r(i)) - l.b(i);
                          return (l.A.transpose() * r) / static_cast<double>(r.size()) + l.lambda_reg * x;
                        },
                        [&](const LassoInstance& l) -> Eigen::VectorXd {
                          return l.A->transpose() * (*l.A * x - l.b);
                        },
                    },
                    inst);
}

double nonsmooth_weight(const Instance& inst) {
  if (const auto* l = std::get_if<LassoInstance>(&inst)) return l->lambda_reg;
  return 0.0;
}

double nonsmooth_value(const Instance& inst, const Eigen::VectorXd& x) {
  const double w = nonsmooth_weight(inst);
  return w == 0.0 ? 0.0 : w * x.lpNorm<1>();
}

double objective(const Instance& inst, const Eigen::VectorXd& x) {
  return smooth_value(inst, x) + nonsmooth_value(inst, x);
}

Reference reference_solution(const Instance& inst, const ReferenceOptions& options) {
  require(options.max_iter >= 1, "reference_solution: need max_iter >= 1");
  return std::visit(
      Overloaded{
          [&](const QuadraticInstance& q) {
            Reference ref;
            ref.x_star = Eigen::VectorXd::Zero(q.Q.rows());
            ref.smooth_gradient = Eigen::VectorXd::Zero(q.Q.rows());
            return ref;
          },
          [&](const LogisticInstance& l) {
            const double tol = options.tol > 0.0 ? options.tol : kLogisticReferenceTol;
            return logistic_reference(l, tol, options.max_iter);
          },
          [&](const LassoInstance& l) {
            const double tol = options.tol > 0.0 ? options.tol : kLassoReferenceTol;
            return lasso_reference(l, tol, options.max_iter);
          },
      },
      inst);
}

}  // namespace dropep
