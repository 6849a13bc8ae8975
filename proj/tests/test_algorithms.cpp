#include <doctest.h>

#include <cmath>

#include "dropep/algorithms.hpp"
#include "dropep/error.hpp"
#include "fixtures.hpp"

using namespace dropep;

namespace {

Instance quad(const Eigen::MatrixXd& Q, double mu, double L) { return QuadraticInstance{Q, mu, L}; }

}  // namespace

TEST_CASE("GD on f = x^2/2 with eta = 1 lands on the minimizer") {
  const Instance inst = quad(Eigen::MatrixXd::Ones(1, 1), 0.0, 1.0);
  const Trajectory t = run(make_spec(Method::kGD, 1.0, 1), inst, Eigen::VectorXd::Ones(1));
  REQUIRE(t.calls.size() == 2);
  CHECK(t.x_final(0) == 0.0);
  CHECK(t.calls[0].f == 0.5);
  CHECK(t.calls[1].f == 0.0);
}

TEST_CASE("GD on diag(1, 25) with eta = 1/25") {
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(2, 2);
  Q(0, 0) = 1;
  Q(1, 1) = 25;
  const Trajectory t = run(make_spec(Method::kGD, 1.0 / 25.0, 1), quad(Q, 1, 25), Eigen::Vector2d(1, 1));
  CHECK(t.x_final(0) == doctest::Approx(24.0 / 25.0));
  CHECK(std::abs(t.x_final(1)) <= 1e-15);
  CHECK(t.calls[1].f == doctest::Approx(0.5 * std::pow(24.0 / 25.0, 2)));
}

TEST_CASE("FISTA on zero data stays at zero") {
  const auto A = std::make_shared<const Eigen::MatrixXd>(sample_lasso_dictionary(20, 30, 0.4, 1));
  LassoParams p;
  p.p = 0.0;
  p.sigma_eps = 0.0;
  const Instance inst = sample_lasso(A, p, 2);
  const Trajectory t = run(make_spec(Method::kFista, 1.0 / smoothness(inst), 6), inst, Eigen::VectorXd::Zero(30));
  for (const auto& c : t.calls) {
    CHECK(c.x.isZero());
    CHECK(c.f == 0.0);
  }
  for (const auto& s : t.prox) CHECK(s.psi == 0.0);
}

TEST_CASE("strongly convex FGM momentum") {
  const auto b0 = fgm_momentum_strcvx(0.0, 3);
  CHECK(b0[0] == 0.0);
  const double a1 = 1.0, a2 = 1.0 + (1.0 + std::sqrt(5.0)) / 2.0;
  const double a3 = a2 + (1.0 + std::sqrt(1.0 + 4.0 * a2)) / 2.0;
  CHECK(b0[1] == doctest::Approx((a3 - a2) * (a2 - a1 - 1.0) / a3).epsilon(1e-14));
  const auto b = fgm_momentum_strcvx(0.04, 201);
  CHECK(b[200] == doctest::Approx(2.0 / 3.0).epsilon(1e-6));
  CHECK_THROWS_AS(fgm_momentum_strcvx(1.0, 3), ParameterError);
}

TEST_CASE("FISTA and k/(k+3) momentum") {
  const auto b = fista_momentum(1000);
  CHECK(b[0] == 0.0);
  const double a1 = (1 + std::sqrt(5.0)) / 2, a2 = (1 + std::sqrt(1 + 4 * a1 * a1)) / 2;
  CHECK(a2 == doctest::Approx(2.19353).epsilon(1e-5));
  CHECK(b[1] == doctest::Approx((a1 - 1) / a2).epsilon(1e-14));
  CHECK(b[1] == doctest::Approx(0.2817).epsilon(1e-3));
  for (std::size_t k = 1; k < b.size(); ++k) {
    CHECK(b[k] > b[k - 1]);
    CHECK(b[k] < 1.0);
  }
  const auto k3 = fgm_momentum_k3(50);
  for (int k = 0; k < 50; ++k) CHECK(k3[k] == static_cast<double>(k) / (k + 3.0));
}

TEST_CASE("soft threshold") {
  CHECK(soft_threshold(3.0, 1.0) == 2.0);
  CHECK(soft_threshold(-0.5, 1.0) == 0.0);
  CHECK(soft_threshold(-2.0, 1.0) == -1.0);
  CHECK(soft_threshold(Eigen::Vector3d(3, -0.5, -2), 1.0).isApprox(Eigen::Vector3d(2, 0, -1)));
}

TEST_CASE("spec validation") {
  CHECK_THROWS_AS(make_spec(Method::kIsta, 1.0, 0), ParameterError);
  CHECK_THROWS_AS(make_spec(Method::kGD, 0.0, 1), ParameterError);
  AlgorithmSpec s{Method::kGD, 1.0, 1, true, 0.0};
  CHECK_THROWS_AS(s.validate(), ParameterError);
  const Instance inst = quad(Eigen::MatrixXd::Identity(2, 2), 0, 1);
  CHECK_THROWS_AS(run(make_spec(Method::kGD, 2.0, 1), inst, Eigen::VectorXd::Ones(2)), ParameterError);
  CHECK_THROWS_AS(run(make_spec(Method::kFgmKOverK3, 1.5, 1), inst, Eigen::VectorXd::Ones(2)), ParameterError);
  CHECK_THROWS_AS(run(make_spec(Method::kGD, 1.0, 1), inst, Eigen::VectorXd::Ones(3)), ParameterError);
  CHECK(parse_method("fista") == Method::kFista);
  CHECK_THROWS_AS(parse_method("ogm"), ParameterError);
}

TEST_CASE("divergence is reported with the iteration index") {
  // Declared L is smaller than the true curvature, so the step is unstable.
  const Instance inst = quad(10.0 * Eigen::MatrixXd::Identity(1, 1), 0.0, 1.0);
  try {
    run(make_spec(Method::kGD, 1.9, 400), inst, Eigen::VectorXd::Constant(1, 1e300));
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.iteration() >= 1);
    CHECK(e.iteration() <= 400);
  }
}

TEST_CASE("trajectories follow their recursion and gradients match finite differences") {
  const Instance inst = sample_logistic({80, 5, 0.5, 4.0, 3.0, 1e-2}, 4);
  const Reference ref = reference_solution(inst);
  const double L = smoothness(inst);
  for (Method m : {Method::kGD, Method::kFgmStrongCvx, Method::kFgmKOverK3}) {
    const auto spec = make_spec(m, 1.0 / L, 8, strong_convexity(inst) / L);
    const Eigen::VectorXd x0 = ref.x_star + fixtures::sphere_point(5, 1.0, 3);
    const Trajectory t = run(spec, inst, x0, ref);
    REQUIRE(t.calls.size() == 9);
    // Re-simulate.
    const auto beta = momentum(spec);
    Eigen::VectorXd x = x0, y = x0;
    for (int k = 0; k < 8; ++k) {
      const Eigen::VectorXd& p = has_momentum(m) ? y : x;
      CHECK((t.calls[k].x - p).norm() <= 1e-12 * (1 + p.norm()));
      const Eigen::VectorXd xn = p - spec.step_size * smooth_gradient(inst, p);
      if (has_momentum(m)) y = xn + beta[k] * (xn - x);
      x = xn;
    }
    CHECK((t.x_final - x).norm() <= 1e-12 * (1 + x.norm()));
    for (const auto& c : t.calls)
      for (int i = 0; i < 5; ++i) {
        const double h = 1e-6;
        Eigen::VectorXd xp = c.x, xm = c.x;
        xp(i) += h;
        xm(i) -= h;
        const double fd = (smooth_value(inst, xp) - smooth_value(inst, xm)) / (2 * h);
        CHECK(std::abs(fd - c.g(i)) <= 1e-5 * std::max(1.0, std::abs(c.g(i))));
      }
  }
}

TEST_CASE("GD with eta <= 1/L never increases f") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Instance inst = sample_mp_quadratic({0.0, 1.0, 30, 100}, s);
    const Trajectory t = run(make_spec(Method::kGD, 1.0, 20), inst, fixtures::sphere_point(30, 1.0, s));
    for (std::size_t k = 1; k < t.calls.size(); ++k) CHECK(t.calls[k].f <= t.calls[k - 1].f + 1e-15);
  }
}

TEST_CASE("composite bookkeeping and the FISTA guarantee") {
  const auto A = std::make_shared<const Eigen::MatrixXd>(sample_lasso_dictionary(60, 90, 0.4, 5));
  for (std::uint64_t s = 0; s < 4; ++s) {
    const Instance inst = sample_lasso(A, {60, 90, 0.4, 0.3, 1e-3, 0.1}, s);
    const Reference ref = reference_solution(inst);
    const double L = smoothness(inst), eta = 1.0 / L, lam = nonsmooth_weight(inst);
    const double r = 2.0;
    const Eigen::VectorXd x0 = ref.x_star + fixtures::sphere_point(90, r, s + 100);
    for (Method m : {Method::kIsta, Method::kFista}) {
      const Trajectory t = run(make_spec(m, eta, 10), inst, x0, ref);
      REQUIRE(t.prox.size() == 10);
      for (int k = 0; k < 10; ++k) {
        const Eigen::VectorXd& p = t.calls[k].x;
        const Eigen::VectorXd v = p - eta * smooth_gradient(inst, p);
        const ProxStep& st = t.prox[k];
        CHECK((st.x - soft_threshold(v, lam * eta)).norm() <= 1e-14);
        CHECK((st.s - (v - st.x) / (eta * lam)).norm() <= 1e-9);
        for (Eigen::Index i = 0; i < st.x.size(); ++i) {
          if (st.x(i) > 0) CHECK(std::abs(st.s(i) - 1.0) <= 1e-9);
          else if (st.x(i) < 0) CHECK(std::abs(st.s(i) + 1.0) <= 1e-9);
          else CHECK(std::abs(st.s(i)) <= 1.0 + 1e-9);
        }
      }
      if (m == Method::kFista) CHECK(final_gap(t) <= 2.0 * L * r * r / (11.0 * 11.0));
    }
  }
}
