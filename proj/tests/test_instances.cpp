#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

#include "dropep/error.hpp"
#include "dropep/instances.hpp"
#include "dropep/seed.hpp"

using namespace dropep;

namespace {

Eigen::VectorXd eigenvalues(const Eigen::MatrixXd& Q) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(Q, Eigen::EigenvaluesOnly).eigenvalues();
}

// CDF of the limiting spectrum by composite Simpson integration of the density.
double mp_cdf(double x, double mu, double L) {
  if (x <= mu) return 0.0;
  if (x >= L) return 1.0;
  // Substitute lambda = mu + (L - mu) sin^2(theta) to remove the edge singularities.
  const double th_max = std::asin(std::sqrt((x - mu) / (L - mu)));
  const int n = 2000;
  const double h = th_max / n;
  auto g = [&](double th) {
    const double lam = mu + (L - mu) * std::sin(th) * std::sin(th);
    return mp_density(lam, mu, L) * (L - mu) * 2.0 * std::sin(th) * std::cos(th);
  };
  double acc = g(0.0) + g(th_max);
  for (int k = 1; k < n; ++k) acc += (k % 2 ? 4.0 : 2.0) * g(k * h);
  return acc * h / 3.0;
}

}  // namespace

TEST_CASE("MP helpers") {
  CHECK(mp_ratio(0.0, 1.0) == 1.0);
  CHECK(mp_sigma(0.0, 1.0) == 0.5);
  CHECK(mp_ratio(1.0, 25.0) == doctest::Approx(16.0 / 36.0));
  CHECK(mp_sigma(1.0, 25.0) == 3.0);
  CHECK(mp_cdf(25.0, 1.0, 25.0) == 1.0);
  CHECK(mp_cdf(24.999999, 1.0, 25.0) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("MP quadratic spectrum lies in [mu, L]") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const QuadraticInstance q = sample_mp_quadratic({1.0, 25.0, 300, 100}, hash64(11, s));
    CHECK(q.Q.rows() == static_cast<Eigen::Index>(std::ceil(16.0 / 36.0 * 300)));
    CHECK(q.Q == q.Q.transpose());
    const Eigen::VectorXd ev = eigenvalues(q.Q);
    CHECK(ev.minCoeff() >= 1.0 - 1e-9);
    CHECK(ev.maxCoeff() <= 25.0 + 1e-9);
  }
  const QuadraticInstance q0 = sample_mp_quadratic({0.0, 1.0, 50, 100}, 5);
  CHECK(q0.Q.rows() == 50);
  CHECK(eigenvalues(q0.Q).maxCoeff() <= 1.0 + 1e-9);
}

TEST_CASE("MP eigenvalue histogram matches the limiting law") {
  std::vector<double> ev;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const QuadraticInstance q = sample_mp_quadratic({0.0, 1.0, 200, 100}, hash64(99, s));
    const Eigen::VectorXd e = eigenvalues(q.Q);
    ev.insert(ev.end(), e.data(), e.data() + e.size());
  }
  std::sort(ev.begin(), ev.end());
  double ks = 0.0;
  const double n = static_cast<double>(ev.size());
  for (std::size_t k = 0; k < ev.size(); k += 7) {
    const double F = mp_cdf(ev[k], 0.0, 1.0);
    ks = std::max({ks, std::abs(F - k / n), std::abs(F - (k + 1) / n)});
  }
  CHECK(ks <= 0.05);
}

TEST_CASE("sampling is deterministic and validates parameters") {
  const auto a = sample_mp_quadratic({0.0, 1.0, 30, 100}, 77);
  const auto b = sample_mp_quadratic({0.0, 1.0, 30, 100}, 77);
  CHECK(a.Q == b.Q);
  const auto la = sample_logistic({100, 5, 0.3, 4.0, 3.0, 1e-2}, 5);
  const auto lb = sample_logistic({100, 5, 0.3, 4.0, 3.0, 1e-2}, 5);
  CHECK(la.A == lb.A);
  CHECK(la.b == lb.b);
  CHECK_THROWS_AS(sample_mp_quadratic({1.0, 1.0, 10, 100}, 1), ParameterError);
  CHECK_THROWS_AS(sample_mp_quadratic({0.0, 1.0, 0, 100}, 1), ParameterError);
  CHECK_THROWS_AS(sample_logistic({10, 5, 1.5, 4.0, 3.0, 1e-2}, 1), ParameterError);
  CHECK_THROWS_AS(sample_logistic({10, 5, 0.5, 4.0, 3.0, 0.0}, 1), ParameterError);
}

TEST_CASE("rejection budget exhaustion raises a sampling error") {
  // A tiny budget with a narrow spectrum window and d = 1 rarely succeeds.
  bool threw = false;
  for (std::uint64_t s = 0; s < 50 && !threw; ++s) {
    try {
      sample_mp_quadratic({0.9, 1.0, 1, 1}, s);
    } catch (const SamplingError&) {
      threw = true;
    }
  }
  CHECK(threw);
}

TEST_CASE("logistic instance at the default parameters") {
  const LogisticParams p;
  double Lmin = 1e300, Lmax = 0.0;
  for (std::uint64_t s = 0; s < 3; ++s) {
    const LogisticInstance inst = sample_logistic(p, hash64(3, s));
    CHECK(inst.mu == 0.01);
    CHECK(inst.A.col(p.d - 1).isOnes());
    for (Eigen::Index i = 0; i < inst.b.size(); ++i) CHECK((inst.b(i) == 0.0 || inst.b(i) == 1.0));
    CHECK(inst.L >= inst.mu);
    Lmin = std::min(Lmin, inst.L);
    Lmax = std::max(Lmax, inst.L);
  }
  CHECK(Lmin >= 6.3 * 0.85);
  CHECK(Lmax <= 6.3 * 1.15);

  LogisticParams zero = p;
  zero.p = 0.0;
  const LogisticInstance inst = sample_logistic(zero, 8);
  CHECK(inst.b.mean() == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("logistic smoothness and strong convexity on random pairs") {
  const Instance inst = sample_logistic({200, 10, 0.3, 4.0, 3.0, 1e-2}, 17);
  const double L = smoothness(inst), mu = strong_convexity(inst);
  Rng rng(4);
  std::normal_distribution<double> nd(0.0, 2.0);
  for (int t = 0; t < 1000; ++t) {
    Eigen::VectorXd x(10), y(10);
    for (int i = 0; i < 10; ++i) {
      x(i) = nd(rng);
      y(i) = nd(rng);
    }
    const Eigen::VectorXd dg = smooth_gradient(inst, x) - smooth_gradient(inst, y);
    CHECK(dg.norm() <= L * (x - y).norm() * (1 + 1e-12));
    CHECK(dg.dot(x - y) >= mu * (x - y).squaredNorm() * (1 - 1e-12));
  }
}

TEST_CASE("logistic gradient matches finite differences") {
  const Instance inst = sample_logistic({150, 6, 0.5, 4.0, 3.0, 1e-2}, 21);
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(6, -0.3, 0.4);
  const Eigen::VectorXd g = smooth_gradient(inst, x);
  for (int i = 0; i < 6; ++i) {
    const double h = 1e-6;
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    const double fd = (smooth_value(inst, xp) - smooth_value(inst, xm)) / (2 * h);
    CHECK(fd == doctest::Approx(g(i)).epsilon(1e-5));
  }
}

TEST_CASE("references") {
  const Instance q = sample_mp_quadratic({0.0, 1.0, 20, 100}, 1);
  const Reference rq = reference_solution(q);
  CHECK(rq.x_star.isZero());
  CHECK(rq.f_star == 0.0);
  CHECK(rq.residual == 0.0);

  const Instance lg = sample_logistic({1000, 50, 0.3, 4.0, 3.0, 1e-2}, 2);
  const Reference rl = reference_solution(lg);
  CHECK(rl.residual <= kLogisticReferenceTol);
  CHECK(smooth_gradient(lg, rl.x_star).norm() <= kLogisticReferenceTol);
  CHECK_THROWS_AS(reference_solution(lg, {1e-14, 3}), ReferenceAccuracyError);
}

TEST_CASE("lasso dictionary and instances") {
  const auto A = std::make_shared<const Eigen::MatrixXd>(sample_lasso_dictionary(200, 300, 0.4, 9));
  for (Eigen::Index j = 0; j < A->cols(); ++j) CHECK(std::abs(A->col(j).norm() - 1.0) <= 1e-12);
  const LassoInstance inst = sample_lasso(A, {}, 10);
  CHECK(inst.L == doctest::Approx(4.876).epsilon(0.15));

  LassoParams zero;
  zero.p = 0.0;
  zero.sigma_eps = 0.0;
  const Instance z = sample_lasso(A, zero, 11);
  CHECK(std::get<LassoInstance>(z).b.isZero());
  const Reference rz = reference_solution(z);
  CHECK(rz.x_star.isZero());
  CHECK(rz.f_star == 0.0);
  CHECK(rz.residual == 0.0);

  const Instance li = inst;
  const Reference r = reference_solution(li);
  CHECK(r.residual <= kLassoReferenceTol);
  CHECK(r.f_star == doctest::Approx(objective(li, r.x_star)));
  CHECK(is_composite(li));
  CHECK(nonsmooth_value(li, Eigen::VectorXd::Ones(300)) == doctest::Approx(30.0));
}
