#include "dropep/rate_fit.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "dropep/error.hpp"

namespace dropep {

namespace {

enum Col { kConst = 0, kGamma = 1, kRho = 2, kOmega = 3 };

struct Problem {
  std::vector<Col> cols;
  Eigen::MatrixXd H;
  Eigen::VectorXd h;
  Eigen::VectorXd w;
};

double column_value(Col c, int K) {
  const double l = std::log(K + 1.0);
  switch (c) {
    case kConst: return 1.0;
    case kGamma: return -l;
    case kRho: return static_cast<double>(K);
    case kOmega: return std::log(l);
  }
  return 0.0;
}

Problem make_problem(const std::vector<RatePoint>& points, const RateFitOptions& opt, bool fix_rho) {
  Problem p;
  p.cols.push_back(kConst);
  if (!opt.fix_gamma) p.cols.push_back(kGamma);
  if (!fix_rho) p.cols.push_back(kRho);
  if (opt.with_loglog) p.cols.push_back(kOmega);
  const int n = static_cast<int>(points.size());
  double phi0 = opt.phi0;
  if (!(phi0 > 0.0))
    for (const RatePoint& pt : points) phi0 = std::max(phi0, pt.phi);
  p.H.resize(n, static_cast<Eigen::Index>(p.cols.size()));
  p.h.resize(n);
  p.w.resize(n);
  for (int k = 0; k < n; ++k) {
    const RatePoint& pt = points[static_cast<std::size_t>(k)];
    for (std::size_t c = 0; c < p.cols.size(); ++c) p.H(k, static_cast<Eigen::Index>(c)) = column_value(p.cols[c], pt.K);
    p.h(k) = std::log(pt.phi);
    // A fixed gamma moves its column to the right-hand side.
    if (opt.fix_gamma) p.h(k) += *opt.fix_gamma * std::log(pt.K + 1.0);
    p.w(k) = std::max(1.0, 1.0 + std::log(phi0 / pt.phi));
  }
  return p;
}

double objective(const Problem& p, const Eigen::VectorXd& x) {
  return (p.w.asDiagonal() * (p.H * x - p.h)).norm();
}

int index_of(const Problem& p, Col c) {
  for (std::size_t k = 0; k < p.cols.size(); ++k)
    if (p.cols[k] == c) return static_cast<int>(k);
  return -1;
}

Eigen::VectorXd solve_cone(const Problem& p, const conic::SolveOptions& options, std::string& status) {
  const int n = static_cast<int>(p.H.rows());
  const int q = static_cast<int>(p.H.cols());
  conic::ConicProgram prog;
  const int x = prog.add_vector("x", q);
  const int t = prog.add_scalar("t");
  prog.set_objective(conic::AffineExpr().add(prog.slot(t), 1.0));

  std::vector<conic::AffineExpr> soc{conic::AffineExpr().add(prog.slot(t), 1.0)};
  std::vector<conic::AffineExpr> ineq;
  for (int k = 0; k < n; ++k) {
    conic::AffineExpr r(-p.h(k));
    for (int c = 0; c < q; ++c) r.add(prog.slot(x, c), p.H(k, c));
    ineq.push_back(r);
    conic::AffineExpr wr(-p.w(k) * p.h(k));
    for (int c = 0; c < q; ++c) wr.add(prog.slot(x, c), p.w(k) * p.H(k, c));
    soc.push_back(std::move(wr));
  }
  for (Col c : {kGamma, kOmega}) {
    const int idx = index_of(p, c);
    if (idx >= 0) ineq.push_back(conic::AffineExpr().add(prog.slot(x, idx), 1.0));
  }
  prog.add_soc(std::move(soc));
  prog.add_nonneg(std::move(ineq));
  const conic::Solution sol = conic::solve(prog, options);
  status = sol.backend_status;
  if (sol.status != conic::SolveStatus::kOptimal && sol.status != conic::SolveStatus::kNumericalLimit)
    throw SolverError("rate fit: cone program failed (" + sol.backend_status + ")");
  if (sol.x.size() == 0 || !sol.x.allFinite()) throw SolverError("rate fit: no solution (" + sol.backend_status + ")");
  return sol.vector(prog, x);
}

// Re-solves on the active set exactly: equality-constrained weighted least
// squares through a null-space parametrization.
std::optional<Eigen::VectorXd> polish(const Problem& p, const Eigen::VectorXd& x0) {
  const int n = static_cast<int>(p.H.rows());
  const int q = static_cast<int>(p.H.cols());
  const Eigen::VectorXd slack = p.H * x0 - p.h;
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> rhs;
  for (int k = 0; k < n; ++k)
    if (slack(k) <= 1e-6 * (1.0 + std::abs(p.h(k)))) {
      rows.push_back(p.H.row(k).transpose());
      rhs.push_back(p.h(k));
    }
  for (Col c : {kGamma, kOmega}) {
    const int idx = index_of(p, c);
    if (idx >= 0 && x0(idx) <= 1e-7) {
      rows.push_back(Eigen::VectorXd::Unit(q, idx));
      rhs.push_back(0.0);
    }
  }

  Eigen::VectorXd xp = Eigen::VectorXd::Zero(q);
  Eigen::MatrixXd Z = Eigen::MatrixXd::Identity(q, q);
  if (!rows.empty()) {
    Eigen::MatrixXd E(static_cast<Eigen::Index>(rows.size()), q);
    Eigen::VectorXd e(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      E.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
      e(static_cast<Eigen::Index>(r)) = rhs[r];
    }
    xp = E.completeOrthogonalDecomposition().solve(e);
    if ((E * xp - e).norm() > 1e-8 * (1.0 + e.norm())) return std::nullopt;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(E);
    lu.setThreshold(1e-10);
    if (lu.rank() == q) {
      Z.resize(q, 0);
    } else {
      Z = lu.kernel();
    }
  }
  Eigen::VectorXd x = xp;
  if (Z.cols() > 0) {
    const Eigen::MatrixXd WHZ = p.w.asDiagonal() * p.H * Z;
    const Eigen::VectorXd r = p.w.asDiagonal() * (p.h - p.H * xp);
    x += Z * WHZ.completeOrthogonalDecomposition().solve(r);
  }
  const Eigen::VectorXd s = p.H * x - p.h;
  for (int k = 0; k < n; ++k)
    if (s(k) < -1e-9 * (1.0 + std::abs(p.h(k)))) return std::nullopt;
  for (Col c : {kGamma, kOmega}) {
    const int idx = index_of(p, c);
    if (idx >= 0 && x(idx) < -1e-12) return std::nullopt;
  }
  return x;
}

RateFit fit_once(const std::vector<RatePoint>& points, const RateFitOptions& opt, bool fix_rho) {
  const Problem p = make_problem(points, opt, fix_rho);
  RateFit fit;
  Eigen::VectorXd x = solve_cone(p, opt.solver, fit.status);
  if (auto polished = polish(p, x); polished && objective(p, *polished) <= objective(p, x) * (1.0 + 1e-6) + 1e-9)
    x = *polished;

  for (Col c : {kGamma, kOmega}) {
    const int idx = index_of(p, c);
    if (idx >= 0) x(idx) = std::max(x(idx), 0.0);
  }
  // Lift the constant so the curve upper-bounds every point.
  const double viol = (p.h - p.H * x).maxCoeff();
  if (viol > 0.0) x(index_of(p, kConst)) += viol;

  fit.C = std::exp(x(index_of(p, kConst)));
  fit.gamma = opt.fix_gamma ? *opt.fix_gamma : x(index_of(p, kGamma));
  fit.rho = fix_rho ? 1.0 : std::exp(x(index_of(p, kRho)));
  fit.omega = opt.with_loglog ? x(index_of(p, kOmega)) : 0.0;
  fit.residual = objective(p, x);
  const Eigen::VectorXd s = p.H * x - p.h;
  for (Eigen::Index k = 0; k < s.size(); ++k)
    if (s(k) <= 1e-9 * (1.0 + std::abs(p.h(k)))) fit.active.push_back(static_cast<int>(k));
  return fit;
}

}  // namespace

double RateFit::evaluate(int K) const {
  double v = C * std::pow(rho, K) * std::pow(K + 1.0, -gamma);
  if (omega != 0.0) v *= std::pow(std::log(K + 1.0), omega);
  return v;
}

RateFit fit_rate(const std::vector<RatePoint>& points, const RateFitOptions& options) {
  if (points.size() < 3) throw ParameterError("fit_rate: need at least 3 points");
  for (const RatePoint& pt : points) {
    if (!(pt.phi > 0.0) || !std::isfinite(pt.phi)) throw ParameterError("fit_rate: values must be positive");
    if (pt.K < 0 || (options.with_loglog && pt.K < 1))
      throw ParameterError("fit_rate: K must be >= 0 (>= 1 with the log-log term)");
  }
  RateFit fit = fit_once(points, options, options.fix_rho_one);
  if (!options.fix_rho_one && fit.rho > 1.0) {
    fit = fit_once(points, options, true);
    fit.rho_clipped = true;
  }
  return fit;
}

}  // namespace dropep
