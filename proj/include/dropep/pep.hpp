#pragma once

// Performance estimation in the Gram basis.
//
// Smooth methods (GD, FGM) use the basis
//   [x0 - x*, g(p_0), ..., g(p_K)]                     n_basis = K + 2
// with values F_k = f(p_k) - f*, k = 0..K              m_vals  = K + 1
// where p_k are the oracle points and p_K = x^K.
//
// Composite methods (ISTA, FISTA) on h + psi use
//   [x0 - x*, grad h(x*), grad h(p_0..p_K), u^1..u^K]  n_basis = 2K + 3
// with u^k = lambda s^k the psi-subgradient at the prox output x^k, and values
//   [h(p_k) - h*, k = 0..K;  psi(x^k) - psi*, k = 1..K] m_vals  = 2K + 1.
// The psi-subgradient at x* is -grad h(x*), so the total gradient at x* is 0.
//
// Every constraint is an AffineForm (A, b, c) read as <A, G> + <b, F> + c,
// with interpolation forms in the "<= 0" convention.

#include <Eigen/Core>

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dropep/algorithms.hpp"
#include "dropep/conic.hpp"

namespace dropep {

enum class Metric { kFgap, kDist, kGradnorm };
enum class InitialKind { kDist, kFgap, kGradnorm };

const char* to_string(Metric metric);
const char* to_string(InitialKind kind);
Metric parse_metric(const std::string& name);
InitialKind parse_initial(const std::string& name);

struct InitialCondition {
  InitialKind kind = InitialKind::kDist;
  double r = 1.0;
};

// F_{mu,L}; L = infinity gives the convex closed proper class (with mu = 0).
struct FunctionClass {
  double mu = 0.0;
  double L = std::numeric_limits<double>::infinity();

  void validate() const;
};

struct GramLayout {
  int K = 0;
  bool composite = false;
  int n_basis = 0;
  int m_vals = 0;
  std::vector<std::string> basis_labels;
  std::vector<std::string> value_labels;

  bool operator==(const GramLayout&) const = default;
};

// Layout implied by a method and iteration count.
GramLayout make_layout(const AlgorithmSpec& spec);

// Coordinates of a vector in the Gram basis.
using GramExpr = Eigen::VectorXd;

struct InterpPoint {
  std::string label;
  GramExpr x;
  GramExpr g;
  int f = -1;  // value index, -1 for the optimum (value 0)
};

// Interpolation points of one function component; points[0] is the optimum.
struct ComponentTrace {
  std::string name;
  FunctionClass cls;
  std::vector<InterpPoint> points;
};

struct SymbolicTrace {
  AlgorithmSpec spec;
  GramLayout layout;
  std::vector<ComponentTrace> components;
  GramExpr x_final;
  std::vector<int> final_values;          // value indices summing to f(x^K) - f*
  std::optional<GramExpr> final_gradient;  // total gradient at x^K (smooth only)
  std::optional<int> initial_value;        // index of f(x0) - f* when available
  std::optional<GramExpr> initial_gradient;
};

// smooth_class is the class of f (smooth methods) or of h (composite
// methods); psi is always convex closed proper.
SymbolicTrace symbolic_unroll(const AlgorithmSpec& spec, const FunctionClass& smooth_class);

struct AffineForm {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  double c = 0.0;
  std::string label;

  double evaluate(const Eigen::MatrixXd& G, const Eigen::VectorXd& F) const;
};

// One form per ordered pair of distinct points of each component.
std::vector<AffineForm> interpolation_forms(const SymbolicTrace& trace);
// Interpolation inequality for a single ordered pair (i, j).
AffineForm interpolation_form(const FunctionClass& cls, const InterpPoint& pi,
                              const InterpPoint& pj, const GramLayout& layout);

// Performance metric (A_obj, b_obj, 0). Throws ParameterError when the
// metric is not expressible for the trace.
AffineForm metric_form(const SymbolicTrace& trace, Metric metric);
// Initial condition (A_0, b_0, c_0) with c_0 = -r^2 (dist, gradnorm) or -r (fgap).
AffineForm initial_form(const SymbolicTrace& trace, const InitialCondition& cond);

struct PepForms {
  GramLayout layout;
  std::vector<AffineForm> interpolation;
  AffineForm initial;
  AffineForm metric;
};

PepForms build_pep_forms(const AlgorithmSpec& spec, const FunctionClass& smooth_class,
                         Metric metric, const InitialCondition& cond);

// Sparse view of a form: nonzero lower-triangular entries of A (packed
// column-major index) and nonzero entries of b.
struct SparseForm {
  std::vector<std::pair<int, double>> A_lower;
  std::vector<std::pair<int, double>> b;
};
SparseForm sparsify(const AffineForm& form);

struct WorstCaseResult {
  double value = 0.0;
  conic::SolveStatus status = conic::SolveStatus::kNumericalLimit;
  std::string backend_status;
  double relative_gap = 0.0;
  double solve_time = 0.0;
  double tau = 0.0;
  Eigen::VectorXd y;
  // Maximizing Gram pair recovered from the dual variables.
  Eigen::MatrixXd G;
  Eigen::VectorXd F;

  bool optimal() const { return status == conic::SolveStatus::kOptimal; }
};

// Dual worst-case PEP:
//   minimize  -c0 tau
//   s.t.      sum_m y_m A_m + tau A_0 - A_obj  PSD
//             sum_m y_m b_m + tau b_0 - b_obj  = 0,   tau >= 0, y >= 0.
conic::ConicProgram build_worst_case_pep(const PepForms& forms);
WorstCaseResult worst_case_pep(const PepForms& forms, const conic::SolveOptions& options = {});

}  // namespace dropep
