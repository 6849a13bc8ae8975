#include "dropep/algorithms.hpp"

#include <cmath>
#include <string>

#include "dropep/error.hpp"

namespace dropep {

const char* to_string(Method method) {
  switch (method) {
    case Method::kGD: return "gd";
    case Method::kFgmStrongCvx: return "fgm-strcvx";
    case Method::kFgmKOverK3: return "fgm-k3";
    case Method::kIsta: return "ista";
    case Method::kFista: return "fista";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  if (name == "gd") return Method::kGD;
  if (name == "fgm" || name == "fgm-strcvx") return Method::kFgmStrongCvx;
  if (name == "fgm-k3") return Method::kFgmKOverK3;
  if (name == "ista") return Method::kIsta;
  if (name == "fista") return Method::kFista;
  throw ParameterError("unknown method '" + name + "'");
}

bool is_composite_method(Method method) {
  return method == Method::kIsta || method == Method::kFista;
}

bool has_momentum(Method method) {
  return method == Method::kFgmStrongCvx || method == Method::kFgmKOverK3 ||
         method == Method::kFista;
}

void AlgorithmSpec::validate() const {
  if (!(step_size > 0.0) || !std::isfinite(step_size))
    throw ParameterError("step size must be positive and finite");
  if (K < 0) throw ParameterError("K must be nonnegative");
  if (composite != is_composite_method(method))
    throw ParameterError(std::string(to_string(method)) +
                         (composite ? " is not a composite method" : " requires composite = true"));
  if (is_composite_method(method) && K < 1)
    throw ParameterError("composite methods need K >= 1");
  if (method == Method::kFgmStrongCvx && !(momentum_q >= 0.0 && momentum_q < 1.0))
    throw ParameterError("momentum_q must lie in [0, 1)");
}

AlgorithmSpec make_spec(Method method, double step_size, int K, double momentum_q) {
  AlgorithmSpec spec{method, step_size, K, is_composite_method(method), momentum_q};
  spec.validate();
  return spec;
}

std::vector<double> fgm_momentum_strcvx(double q, int k_max) {
  if (!(q >= 0.0 && q < 1.0)) throw ParameterError("fgm_momentum_strcvx: need q in [0, 1)");
  if (k_max <= 0) return {};
  // alpha_{k+2} is the larger root of (1-q) a^2 - (2 alpha_{k+1} + 1) a + alpha_{k+1}^2 = 0.
  std::vector<double> alpha(static_cast<std::size_t>(k_max) + 2);
  alpha[0] = 0.0;
  alpha[1] = 1.0 / (1.0 - q);
  for (int k = 0; k < k_max; ++k) {
    const double a = alpha[k + 1];
    const double p = 2.0 * a + 1.0;
    alpha[k + 2] = (p + std::sqrt(p * p - 4.0 * (1.0 - q) * a * a)) / (2.0 * (1.0 - q));
  }
  std::vector<double> beta(static_cast<std::size_t>(k_max));
  for (int k = 0; k < k_max; ++k) {
    const double a0 = alpha[k], a1 = alpha[k + 1], a2 = alpha[k + 2];
    beta[k] = (a2 - a1) * (a1 * (1.0 - q) - a0 - 1.0) / (a2 * (2.0 * q * a1 + 1.0) - q * a1 * a1);
  }
  return beta;
}

std::vector<double> fgm_momentum_k3(int k_max) {
  std::vector<double> beta(static_cast<std::size_t>(std::max(k_max, 0)));
  for (int k = 0; k < k_max; ++k) beta[k] = static_cast<double>(k) / (k + 3.0);
  return beta;
}

std::vector<double> fista_momentum(int k_max) {
  if (k_max <= 0) return {};
  std::vector<double> beta(static_cast<std::size_t>(k_max));
  double a = 1.0;
  for (int k = 0; k < k_max; ++k) {
    const double next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * a * a));
    beta[k] = (a - 1.0) / next;
    a = next;
  }
  return beta;
}

std::vector<double> momentum(const AlgorithmSpec& spec) {
  switch (spec.method) {
    case Method::kFgmStrongCvx: return fgm_momentum_strcvx(spec.momentum_q, spec.K);
    case Method::kFgmKOverK3: return fgm_momentum_k3(spec.K);
    case Method::kFista: return fista_momentum(spec.K);
    default: return {};
  }
}

double soft_threshold(double v, double delta) { return std::min(v + delta, std::max(v - delta, 0.0)); }

Eigen::VectorXd soft_threshold(const Eigen::VectorXd& v, double delta) {
  Eigen::VectorXd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out(i) = soft_threshold(v(i), delta);
  return out;
}

namespace {

void check_finite(const Eigen::VectorXd& v, int iteration) {
  if (!v.allFinite())
    throw DivergenceError(iteration, "non-finite iterate at iteration " + std::to_string(iteration));
}

}  // namespace

Trajectory run(const AlgorithmSpec& spec, const Instance& instance, const Eigen::VectorXd& x0,
               const Reference& reference) {
  spec.validate();
  if (x0.size() != dimension(instance)) throw ParameterError("run: x0 dimension mismatch");
  if (spec.composite != is_composite(instance))
    throw ParameterError("run: method and instance disagree on composite structure");
  const double L = smoothness(instance);
  const double eta = spec.step_size;
  const double slack = 1.0 + 1e-12;
  if (spec.method == Method::kGD ? !(eta * L < 2.0) : !(eta * L <= slack))
    throw ParameterError("run: step size outside the admissible range for " +
                         std::string(to_string(spec.method)));

  Trajectory traj;
  traj.spec = spec;
  traj.x0 = x0;
  traj.reference = reference;
  traj.lambda_reg = nonsmooth_weight(instance);
  traj.calls.reserve(static_cast<std::size_t>(spec.K) + 1);

  auto call = [&](const Eigen::VectorXd& p) -> const OracleCall& {
    traj.calls.push_back({p, smooth_gradient(instance, p), smooth_value(instance, p)});
    return traj.calls.back();
  };

  const std::vector<double> beta = momentum(spec);
  const double lambda = traj.lambda_reg;
  const double delta = lambda * eta;

  Eigen::VectorXd x = x0;
  Eigen::VectorXd y = x0;
  for (int k = 0; k < spec.K; ++k) {
    const Eigen::VectorXd& point = has_momentum(spec.method) ? y : x;
    const OracleCall& c = call(point);
    const Eigen::VectorXd v = point - eta * c.g;
    Eigen::VectorXd x_next;
    if (spec.composite) {
      x_next = soft_threshold(v, delta);
      ProxStep step;
      step.s = (v - x_next) / (eta * lambda);
      step.psi = lambda * x_next.lpNorm<1>();
      step.x = x_next;
      traj.prox.push_back(std::move(step));
    } else {
      x_next = v;
    }
    check_finite(x_next, k + 1);
    if (has_momentum(spec.method)) {
      y = x_next + beta[static_cast<std::size_t>(k)] * (x_next - x);
      check_finite(y, k + 1);
    }
    x = std::move(x_next);
  }
  call(x);
  traj.x_final = x;
  return traj;
}

Trajectory run(const AlgorithmSpec& spec, const Instance& instance, const Eigen::VectorXd& x0) {
  return run(spec, instance, x0, reference_solution(instance));
}

double final_gap(const Trajectory& traj) {
  double f = traj.calls.back().f;
  if (!traj.prox.empty()) f += traj.prox.back().psi;
  return f - traj.reference.f_star;
}

}  // namespace dropep
