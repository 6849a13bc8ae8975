#include "dropep/pep.hpp"

#include <cmath>
#include <string>

#include "dropep/error.hpp"

namespace dropep {

namespace {

using conic::packed_index;
using conic::packed_size;

Eigen::VectorXd unit(int n, int i) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
  e(i) = 1.0;
  return e;
}

// A += coeff * (u v' + v u') / 2
void add_bilinear(Eigen::MatrixXd& A, const Eigen::VectorXd& u, const Eigen::VectorXd& v, double coeff) {
  if (coeff == 0.0) return;
  A.noalias() += (0.5 * coeff) * (u * v.transpose() + v * u.transpose());
}

std::string point_label(const std::string& prefix, int k) { return prefix + std::to_string(k); }

}  // namespace

const char* to_string(Metric metric) {
  switch (metric) {
    case Metric::kFgap: return "fgap";
    case Metric::kDist: return "dist";
    case Metric::kGradnorm: return "gradnorm";
  }
  return "unknown";
}

const char* to_string(InitialKind kind) {
  switch (kind) {
    case InitialKind::kFgap: return "fgap";
    case InitialKind::kDist: return "dist";
    case InitialKind::kGradnorm: return "gradnorm";
  }
  return "unknown";
}

Metric parse_metric(const std::string& name) {
  if (name == "fgap") return Metric::kFgap;
  if (name == "dist") return Metric::kDist;
  if (name == "gradnorm") return Metric::kGradnorm;
  throw ParameterError("unknown metric '" + name + "'");
}

InitialKind parse_initial(const std::string& name) {
  if (name == "fgap") return InitialKind::kFgap;
  if (name == "dist") return InitialKind::kDist;
  if (name == "gradnorm") return InitialKind::kGradnorm;
  throw ParameterError("unknown initial condition '" + name + "'");
}

void FunctionClass::validate() const {
  if (!(mu >= 0.0)) throw ParameterError("function class: mu must be nonnegative");
  if (!(L > 0.0)) throw ParameterError("function class: L must be positive");
  if (!(mu < L)) throw ParameterError("function class: mu must be strictly below L");
  if (std::isinf(L) && mu > 0.0)
    throw ParameterError("function class: mu > 0 with L = infinity is not supported");
}

GramLayout make_layout(const AlgorithmSpec& spec) {
  spec.validate();
  GramLayout layout;
  layout.K = spec.K;
  layout.composite = spec.composite;
  const int K = spec.K;
  const char* p = has_momentum(spec.method) ? "y" : "x";
  layout.basis_labels.push_back("x0-x*");
  if (!spec.composite) {
    for (int k = 0; k < K; ++k) layout.basis_labels.push_back("g(" + point_label(p, k) + ")");
    layout.basis_labels.push_back("g(" + point_label("x", K) + ")");
    for (int k = 0; k < K; ++k) layout.value_labels.push_back("f(" + point_label(p, k) + ")-f*");
    layout.value_labels.push_back("f(" + point_label("x", K) + ")-f*");
  } else {
    layout.basis_labels.push_back("gh(x*)");
    for (int k = 0; k < K; ++k) layout.basis_labels.push_back("gh(" + point_label(p, k) + ")");
    layout.basis_labels.push_back("gh(" + point_label("x", K) + ")");
    for (int k = 1; k <= K; ++k) layout.basis_labels.push_back("u(" + point_label("x", k) + ")");
    for (int k = 0; k < K; ++k) layout.value_labels.push_back("h(" + point_label(p, k) + ")-h*");
    layout.value_labels.push_back("h(" + point_label("x", K) + ")-h*");
    for (int k = 1; k <= K; ++k) layout.value_labels.push_back("psi(" + point_label("x", k) + ")-psi*");
  }
  layout.n_basis = static_cast<int>(layout.basis_labels.size());
  layout.m_vals = static_cast<int>(layout.value_labels.size());
  return layout;
}

SymbolicTrace symbolic_unroll(const AlgorithmSpec& spec, const FunctionClass& smooth_class) {
  smooth_class.validate();
  SymbolicTrace trace;
  trace.spec = spec;
  trace.layout = make_layout(spec);
  const int n = trace.layout.n_basis;
  const int K = spec.K;
  const double eta = spec.step_size;
  const std::vector<double> beta = momentum(spec);
  const bool mom = has_momentum(spec.method);

  // Column of grad (smooth part) at p_k, and of u^k.
  auto grad_col = [&](int k) { return spec.composite ? 2 + k : 1 + k; };
  auto u_col = [&](int k) { return K + 2 + k; };  // k = 1..K
  auto psi_val = [&](int k) { return K + k; };     // k = 1..K

  ComponentTrace smooth{spec.composite ? "h" : "f", smooth_class, {}};
  InterpPoint star{"*", GramExpr::Zero(n), GramExpr::Zero(n), -1};
  if (spec.composite) star.g = unit(n, 1);
  smooth.points.push_back(star);

  ComponentTrace nonsmooth{"psi", FunctionClass{}, {}};
  if (spec.composite) nonsmooth.points.push_back({"*", GramExpr::Zero(n), -unit(n, 1), -1});

  const std::string plabel = mom ? "y" : "x";
  GramExpr x = unit(n, 0);
  GramExpr y = x;
  for (int k = 0; k < K; ++k) {
    const GramExpr point = mom ? y : x;
    const GramExpr g = unit(n, grad_col(k));
    smooth.points.push_back({point_label(plabel, k), point, g, k});
    GramExpr x_next = point - eta * g;
    if (spec.composite) {
      const GramExpr u = unit(n, u_col(k + 1));
      x_next -= eta * u;
      nonsmooth.points.push_back({point_label("x", k + 1), x_next, u, psi_val(k + 1)});
    }
    if (mom) y = x_next + beta[static_cast<std::size_t>(k)] * (x_next - x);
    x = std::move(x_next);
  }
  smooth.points.push_back({point_label("x", K), x, unit(n, grad_col(K)), K});

  trace.x_final = x;
  trace.final_values.push_back(K);
  if (spec.composite) {
    trace.final_values.push_back(psi_val(K));
  } else {
    trace.final_gradient = unit(n, grad_col(K));
    trace.initial_value = 0;
    trace.initial_gradient = unit(n, grad_col(0));
  }
  trace.components.push_back(std::move(smooth));
  if (spec.composite) trace.components.push_back(std::move(nonsmooth));
  return trace;
}

double AffineForm::evaluate(const Eigen::MatrixXd& G, const Eigen::VectorXd& F) const {
  return (A.array() * G.array()).sum() + b.dot(F) + c;
}

AffineForm interpolation_form(const FunctionClass& cls, const InterpPoint& pi, const InterpPoint& pj,
                              const GramLayout& layout) {
  cls.validate();
  const int n = layout.n_basis;
  AffineForm form;
  form.A = Eigen::MatrixXd::Zero(n, n);
  form.b = Eigen::VectorXd::Zero(layout.m_vals);
  form.label = "(" + pi.label + "," + pj.label + ")";

  // f_j - f_i + <g_j, x_i - x_j>
  //   + 1/(2(1 - mu/L)) [ |g_i - g_j|^2 / L + mu |x_i - x_j|^2
  //                       - (2 mu / L) <g_j - g_i, x_j - x_i> ]  <= 0
  const GramExpr dx = pi.x - pj.x;
  const GramExpr dg = pi.g - pj.g;
  add_bilinear(form.A, pj.g, dx, 1.0);
  const double inv_L = std::isinf(cls.L) ? 0.0 : 1.0 / cls.L;
  const double scale = 1.0 / (2.0 * (1.0 - cls.mu * inv_L));
  if (inv_L != 0.0) form.A.noalias() += (scale * inv_L) * dg * dg.transpose();
  if (cls.mu != 0.0) {
    form.A.noalias() += (scale * cls.mu) * dx * dx.transpose();
    // <g_j - g_i, x_j - x_i> = <dg, dx>
    add_bilinear(form.A, dg, dx, -scale * 2.0 * cls.mu * inv_L);
  }
  if (pj.f >= 0) form.b(pj.f) += 1.0;
  if (pi.f >= 0) form.b(pi.f) -= 1.0;
  form.A = 0.5 * (form.A + form.A.transpose()).eval();
  return form;
}

std::vector<AffineForm> interpolation_forms(const SymbolicTrace& trace) {
  std::vector<AffineForm> forms;
  for (const ComponentTrace& comp : trace.components) {
    const auto& pts = comp.points;
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (std::size_t j = 0; j < pts.size(); ++j) {
        if (i == j) continue;
        AffineForm f = interpolation_form(comp.cls, pts[i], pts[j], trace.layout);
        if (trace.components.size() > 1) f.label = comp.name + f.label;
        forms.push_back(std::move(f));
      }
  }
  return forms;
}

AffineForm metric_form(const SymbolicTrace& trace, Metric metric) {
  const int n = trace.layout.n_basis;
  AffineForm form;
  form.A = Eigen::MatrixXd::Zero(n, n);
  form.b = Eigen::VectorXd::Zero(trace.layout.m_vals);
  form.label = to_string(metric);
  switch (metric) {
    case Metric::kFgap:
      for (int idx : trace.final_values) form.b(idx) += 1.0;
      break;
    case Metric::kDist:
      form.A = trace.x_final * trace.x_final.transpose();
      break;
    case Metric::kGradnorm:
      if (!trace.final_gradient)
        throw ParameterError("gradnorm metric is not supported for composite methods");
      form.A = *trace.final_gradient * trace.final_gradient->transpose();
      break;
  }
  return form;
}

AffineForm initial_form(const SymbolicTrace& trace, const InitialCondition& cond) {
  if (!(cond.r > 0.0) || !std::isfinite(cond.r))
    throw ParameterError("initial condition radius must be positive");
  const int n = trace.layout.n_basis;
  AffineForm form;
  form.A = Eigen::MatrixXd::Zero(n, n);
  form.b = Eigen::VectorXd::Zero(trace.layout.m_vals);
  form.label = std::string("init-") + to_string(cond.kind);
  switch (cond.kind) {
    case InitialKind::kDist:
      form.A(0, 0) = 1.0;
      form.c = -cond.r * cond.r;
      break;
    case InitialKind::kFgap:
      if (!trace.initial_value)
        throw ParameterError("fgap initial condition is not supported for composite methods");
      form.b(*trace.initial_value) = 1.0;
      form.c = -cond.r;
      break;
    case InitialKind::kGradnorm:
      if (!trace.initial_gradient)
        throw ParameterError("gradnorm initial condition is not supported for composite methods");
      form.A = *trace.initial_gradient * trace.initial_gradient->transpose();
      form.c = -cond.r * cond.r;
      break;
  }
  return form;
}

PepForms build_pep_forms(const AlgorithmSpec& spec, const FunctionClass& smooth_class, Metric metric,
                         const InitialCondition& cond) {
  const SymbolicTrace trace = symbolic_unroll(spec, smooth_class);
  PepForms forms;
  forms.layout = trace.layout;
  forms.interpolation = interpolation_forms(trace);
  forms.initial = initial_form(trace, cond);
  forms.metric = metric_form(trace, metric);
  return forms;
}

SparseForm sparsify(const AffineForm& form) {
  SparseForm s;
  const int n = static_cast<int>(form.A.rows());
  for (int j = 0; j < n; ++j)
    for (int i = j; i < n; ++i)
      if (form.A(i, j) != 0.0) s.A_lower.emplace_back(packed_index(i, j, n), form.A(i, j));
  for (Eigen::Index k = 0; k < form.b.size(); ++k)
    if (form.b(k) != 0.0) s.b.emplace_back(static_cast<int>(k), form.b(k));
  return s;
}

conic::ConicProgram build_worst_case_pep(const PepForms& forms) {
  const int n = forms.layout.n_basis;
  const int m = forms.layout.m_vals;
  const int M = static_cast<int>(forms.interpolation.size());

  conic::ConicProgram prog;
  const int tau = prog.add_scalar("tau");
  const int y = prog.add_vector("y", M);
  prog.set_objective(conic::AffineExpr().add(prog.slot(tau), -forms.initial.c));

  std::vector<conic::AffineExpr> psd(static_cast<std::size_t>(packed_size(n)));
  std::vector<conic::AffineExpr> eq(static_cast<std::size_t>(m));
  auto add_form = [&](const AffineForm& form, int slot, double sign) {
    const SparseForm s = sparsify(form);
    for (const auto& [idx, v] : s.A_lower) {
      if (slot >= 0) psd[idx].add(slot, sign * v);
      else psd[idx].add_constant(sign * v);
    }
    for (const auto& [idx, v] : s.b) {
      if (slot >= 0) eq[idx].add(slot, sign * v);
      else eq[idx].add_constant(sign * v);
    }
  };
  for (int k = 0; k < M; ++k) add_form(forms.interpolation[static_cast<std::size_t>(k)], prog.slot(y, k), 1.0);
  add_form(forms.initial, prog.slot(tau), 1.0);
  add_form(forms.metric, -1, -1.0);

  prog.add_psd(n, std::move(psd));
  prog.add_zero(std::move(eq));
  prog.add_nonneg_variable(tau);
  if (M > 0) prog.add_nonneg_variable(y);
  return prog;
}

WorstCaseResult worst_case_pep(const PepForms& forms, const conic::SolveOptions& options) {
  const conic::ConicProgram prog = build_worst_case_pep(forms);
  const conic::Solution sol = conic::solve(prog, options);
  WorstCaseResult out;
  out.status = sol.status;
  out.backend_status = sol.backend_status;
  out.value = sol.objective;
  out.relative_gap = sol.relative_gap();
  out.solve_time = sol.solve_time;
  if (sol.x.size() == 0) return out;
  out.tau = sol.value(prog, 0);
  out.y = sol.vector(prog, 1);
  // Constraint 0 is the PSD block, constraint 1 the equality rows.
  out.G = conic::smat(sol.duals[0], forms.layout.n_basis);
  out.F = sol.duals[1];
  return out;
}

}  // namespace dropep
