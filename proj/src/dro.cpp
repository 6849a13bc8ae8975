#include "dropep/dro.hpp"

#include <cmath>
#include <string>

#include "dropep/error.hpp"

namespace dropep {

namespace {

using conic::AffineExpr;
using conic::packed_index;
using conic::packed_size;

constexpr double kSqrt2 = 1.41421356237309504880;

struct BlockData {
  double a = 1.0;  // metric scaling
  double c = 0.0;  // coefficient of t
};

std::vector<BlockData> block_data(const DroSpec& spec) {
  if (spec.form == RiskForm::kExpectation) return {{1.0, 0.0}};
  return {{1.0 / spec.alpha, 1.0 - 1.0 / spec.alpha}, {0.0, 1.0}};
}

struct BlockRows {
  AffineExpr scalar;
  std::vector<AffineExpr> psd;
  std::vector<AffineExpr> eq;
  std::vector<AffineExpr> soc;
};

struct SharedForms {
  std::vector<SparseForm> interp;
  SparseForm initial;
  SparseForm metric;
  double c0 = 0.0;
};

BlockRows make_block(const DroSpec& spec, const SharedForms& sf, const DroProgram& dp, int i, int j,
                     const BlockData& bd) {
  const conic::ConicProgram& prog = dp.program;
  const DroBlockVars& v = dp.blocks[static_cast<std::size_t>(i * dp.J + j)];
  const LiftedSample& sample = spec.samples[static_cast<std::size_t>(i)];
  const int n = spec.forms.layout.n_basis;
  const int m = spec.forms.layout.m_vals;
  const int M = static_cast<int>(sf.interp.size());

  BlockRows rows;
  // s_i - c t + c0 tau + <X, G_i> + <Y, F_i> - eps lambda >= 0
  AffineExpr& sc = rows.scalar;
  sc.add(prog.slot(dp.s, i), 1.0);
  if (bd.c != 0.0) sc.add(prog.slot(dp.t), -bd.c);
  sc.add(prog.slot(v.tau), sf.c0);
  for (int col = 0; col < n; ++col)
    for (int r = col; r < n; ++r)
      sc.add(prog.sym_slot(v.X, r, col), (r == col ? 1.0 : 2.0) * sample.G(r, col));
  for (int k = 0; k < m; ++k) sc.add(prog.slot(v.Y, k), sample.F(k));
  sc.add(prog.slot(dp.lambda), -spec.epsilon);

  rows.psd.resize(static_cast<std::size_t>(packed_size(n)));
  rows.eq.resize(static_cast<std::size_t>(m));
  auto add_form = [&](const SparseForm& f, int slot, double coeff) {
    if (coeff == 0.0) return;
    for (const auto& [idx, val] : f.A_lower) {
      if (slot >= 0) rows.psd[idx].add(slot, coeff * val);
      else rows.psd[idx].add_constant(coeff * val);
    }
    for (const auto& [idx, val] : f.b) {
      if (slot >= 0) rows.eq[idx].add(slot, coeff * val);
      else rows.eq[idx].add_constant(coeff * val);
    }
  };
  for (int k = 0; k < M; ++k) add_form(sf.interp[static_cast<std::size_t>(k)], prog.slot(v.y, k), 1.0);
  add_form(sf.initial, prog.slot(v.tau), 1.0);
  add_form(sf.metric, -1, -bd.a);
  for (int col = 0; col < n; ++col)
    for (int r = col; r < n; ++r) rows.psd[packed_index(r, col, n)].add(prog.sym_slot(v.X, r, col), -1.0);
  for (int k = 0; k < m; ++k) rows.eq[k].add(prog.slot(v.Y, k), -1.0);

  // (lambda, scaled X entries, scaled Y entries) in the second-order cone.
  const Eigen::VectorXd& dG = spec.D.gram_diag;
  const Eigen::VectorXd& dF = spec.D.value_diag;
  rows.soc.reserve(static_cast<std::size_t>(1 + packed_size(n) + m));
  rows.soc.push_back(AffineExpr().add(prog.slot(dp.lambda), 1.0));
  for (int col = 0; col < n; ++col)
    for (int r = col; r < n; ++r) {
      const double w = (r == col ? 1.0 : kSqrt2) / std::sqrt(dG(r) * dG(col));
      rows.soc.push_back(AffineExpr().add(prog.sym_slot(v.X, r, col), w));
    }
  for (int k = 0; k < m; ++k) rows.soc.push_back(AffineExpr().add(prog.slot(v.Y, k), 1.0 / dF(k)));
  return rows;
}

}  // namespace

const char* to_string(RiskForm form) {
  return form == RiskForm::kExpectation ? "expectation" : "cvar";
}

RiskForm parse_risk_form(const std::string& name) {
  if (name == "expectation") return RiskForm::kExpectation;
  if (name == "cvar") return RiskForm::kCvar;
  throw ParameterError("unknown risk form '" + name + "'");
}

void DroSpec::validate() const {
  if (samples.empty()) throw ParameterError("DRO: need at least one sample");
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ParameterError("DRO: epsilon must be >= 0");
  if (form == RiskForm::kCvar && !(alpha > 0.0 && alpha <= 1.0))
    throw ParameterError("DRO: alpha must lie in (0, 1]");
  const GramLayout& layout = forms.layout;
  for (const LiftedSample& s : samples)
    if (s.G.rows() != layout.n_basis || s.G.cols() != layout.n_basis || s.F.size() != layout.m_vals)
      throw LayoutError("DRO: sample dimensions do not match the PEP layout");
  if (D.gram_diag.size() != layout.n_basis || D.value_diag.size() != layout.m_vals)
    throw LayoutError("DRO: preconditioner dimensions do not match the PEP layout");
  if (!((D.gram_diag.array() > 0.0).all() && (D.value_diag.array() > 0.0).all() && D.gram_diag.allFinite() &&
        D.value_diag.allFinite()))
    throw ParameterError("DRO: preconditioner must be positive and finite");
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> adjoint_S(const Eigen::VectorXd& y,
                                                      const std::vector<AffineForm>& forms) {
  if (y.size() != static_cast<Eigen::Index>(forms.size()))
    throw LayoutError("adjoint_S: y has " + std::to_string(y.size()) + " entries for " +
                      std::to_string(forms.size()) + " forms");
  if (forms.empty()) return {Eigen::MatrixXd(), Eigen::VectorXd()};
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(forms[0].A.rows(), forms[0].A.cols());
  Eigen::VectorXd Y = Eigen::VectorXd::Zero(forms[0].b.size());
  for (std::size_t k = 0; k < forms.size(); ++k) {
    X -= y(static_cast<Eigen::Index>(k)) * forms[k].A;
    Y -= y(static_cast<Eigen::Index>(k)) * forms[k].b;
  }
  return {X, Y};
}

Eigen::VectorXd in_sample_metric(const std::vector<LiftedSample>& samples, const PepForms& forms) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = forms.metric.evaluate(samples[i].G, samples[i].F);
  return v;
}

DroProgram build_dro(const DroSpec& spec, Assembly assembly) {
  spec.validate();
  const int N = static_cast<int>(spec.samples.size());
  const int n = spec.forms.layout.n_basis;
  const int m = spec.forms.layout.m_vals;
  const int M = static_cast<int>(spec.forms.interpolation.size());
  const std::vector<BlockData> bdata = block_data(spec);

  DroProgram dp;
  dp.J = static_cast<int>(bdata.size());
  auto& prog = dp.program;
  dp.lambda = prog.add_scalar("lambda");
  if (spec.form == RiskForm::kCvar) dp.t = prog.add_scalar("t");
  dp.s = prog.add_vector("s", N);
  dp.blocks.resize(static_cast<std::size_t>(N * dp.J));
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < dp.J; ++j) {
      DroBlockVars& v = dp.blocks[static_cast<std::size_t>(i * dp.J + j)];
      const std::string tag = "[" + std::to_string(i) + "," + std::to_string(j) + "]";
      v.tau = prog.add_scalar("tau" + tag);
      v.y = prog.add_vector("y" + tag, M);
      v.X = prog.add_symmetric("X" + tag, n);
      v.Y = prog.add_vector("Y" + tag, m);
    }

  AffineExpr obj;
  for (int i = 0; i < N; ++i) obj.add(prog.slot(dp.s, i), 1.0 / N);
  prog.set_objective(std::move(obj));

  SharedForms sf;
  sf.interp.reserve(static_cast<std::size_t>(M));
  for (const AffineForm& f : spec.forms.interpolation) sf.interp.push_back(sparsify(f));
  sf.initial = sparsify(spec.forms.initial);
  sf.metric = sparsify(spec.forms.metric);
  sf.c0 = spec.forms.initial.c;

  const int nblocks = N * dp.J;
  std::vector<BlockRows> rows(static_cast<std::size_t>(nblocks));
  if (assembly == Assembly::kParallel) {
#pragma omp parallel for schedule(static)
    for (int b = 0; b < nblocks; ++b)
      rows[static_cast<std::size_t>(b)] = make_block(spec, sf, dp, b / dp.J, b % dp.J, bdata[b % dp.J]);
  } else {
    for (int b = 0; b < nblocks; ++b)
      rows[static_cast<std::size_t>(b)] = make_block(spec, sf, dp, b / dp.J, b % dp.J, bdata[b % dp.J]);
  }

  prog.add_nonneg_variable(dp.lambda);
  for (int b = 0; b < nblocks; ++b) {
    BlockRows& r = rows[static_cast<std::size_t>(b)];
    const DroBlockVars& v = dp.blocks[static_cast<std::size_t>(b)];
    prog.add_nonneg({std::move(r.scalar)});
    prog.add_psd(n, std::move(r.psd));
    prog.add_zero(std::move(r.eq));
    prog.add_soc(std::move(r.soc));
    prog.add_nonneg_variable(v.tau);
    if (M > 0) prog.add_nonneg_variable(v.y);
  }
  return dp;
}

DroProgram build_dro_expectation(const DroSpec& spec, Assembly assembly) {
  if (spec.form != RiskForm::kExpectation) throw ParameterError("build_dro_expectation: form must be expectation");
  return build_dro(spec, assembly);
}

DroProgram build_dro_cvar(const DroSpec& spec, Assembly assembly) {
  if (spec.form != RiskForm::kCvar) throw ParameterError("build_dro_cvar: form must be cvar");
  return build_dro(spec, assembly);
}

Eigen::VectorXd dual_norm_row(double lambda, const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                              const Preconditioner& D) {
  const int n = static_cast<int>(X.rows());
  const int m = static_cast<int>(Y.size());
  Eigen::VectorXd row(1 + packed_size(n) + m);
  row(0) = lambda;
  int k = 1;
  for (int col = 0; col < n; ++col)
    for (int r = col; r < n; ++r)
      row(k++) = (r == col ? 1.0 : kSqrt2) * X(r, col) / std::sqrt(D.gram_diag(r) * D.gram_diag(col));
  for (int q = 0; q < m; ++q) row(k++) = Y(q) / D.value_diag(q);
  return row;
}

DroSolution solve_dro(const DroSpec& spec, const conic::SolveOptions& options, Assembly assembly) {
  const DroProgram dp = build_dro(spec, assembly);
  const conic::Solution sol = conic::solve(dp.program, options);
  DroSolution out;
  out.status = sol.status;
  out.backend_status = sol.backend_status;
  out.objective = sol.objective;
  out.relative_gap = sol.relative_gap();
  out.solve_time = sol.solve_time;
  if (sol.x.size() == 0) return out;
  out.lambda = sol.value(dp.program, dp.lambda);
  if (dp.t >= 0) out.t = sol.value(dp.program, dp.t);
  out.s = sol.vector(dp.program, dp.s);
  for (const DroBlockVars& v : dp.blocks) {
    out.tau.push_back(sol.value(dp.program, v.tau));
    out.y.push_back(sol.vector(dp.program, v.y));
    out.X.push_back(sol.symmetric(dp.program, v.X));
    out.Y.push_back(sol.vector(dp.program, v.Y));
  }
  return out;
}

}  // namespace dropep
