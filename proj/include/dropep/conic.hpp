#pragma once

// Solver-agnostic conic program IR.
//
// A ConicProgram declares scalar, vector and symmetric-matrix variables and
// a list of affine rows constrained to a cone:
//
//   zero      rows == 0
//   nonneg    rows >= 0
//   soc(n)    rows[0] >= || rows[1..n-1] ||
//   psd(n)    the symmetric matrix whose lower triangle (column-major) is
//             given by the rows is positive semidefinite
//
// Storage conventions:
//   * a symmetric variable of order n occupies n(n+1)/2 consecutive scalar
//     slots holding its lower-triangular entries, column-major, unscaled;
//   * PSD rows are given as plain matrix entries; assemble() applies the
//     sqrt(2) off-diagonal scaling so the cone is the self-dual svec cone.

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace dropep::conic {

enum class ConeType { kZero, kNonneg, kSecondOrder, kPsd };

const char* to_string(ConeType type);

struct Cone {
  ConeType type;
  // Number of rows for zero/nonneg/soc, matrix order for psd.
  int dim;

  int rows() const { return type == ConeType::kPsd ? dim * (dim + 1) / 2 : dim; }
  bool operator==(const Cone&) const = default;
};

inline int packed_size(int n) { return n * (n + 1) / 2; }

// Offset of entry (row, col), row >= col, in the lower column-major packing.
inline int packed_index(int row, int col, int n) {
  return col * n - col * (col - 1) / 2 + (row - col);
}

// Lower column-major entries, unscaled. unpack_lower(pack_lower(M)) == M.
Eigen::VectorXd pack_lower(const Eigen::MatrixXd& m);
Eigen::MatrixXd unpack_lower(const Eigen::VectorXd& v, int n);

// svec: lower column-major with off-diagonals multiplied by sqrt(2), so that
// svec(A).dot(svec(B)) == trace(A B) and ||svec(A)|| == ||A||_F.
Eigen::VectorXd svec(const Eigen::MatrixXd& m);
Eigen::MatrixXd smat(const Eigen::VectorXd& v, int n);

struct Term {
  int index;
  double coeff;
};

// Affine function of the program's scalar slots.
struct AffineExpr {
  std::vector<Term> terms;
  double constant = 0.0;

  AffineExpr() = default;
  explicit AffineExpr(double c) : constant(c) {}

  AffineExpr& add(int index, double coeff) {
    if (coeff != 0.0) terms.push_back({index, coeff});
    return *this;
  }
  AffineExpr& add_constant(double c) {
    constant += c;
    return *this;
  }
  double evaluate(const Eigen::VectorXd& x) const;
};

enum class VariableShape { kScalar, kVector, kSymmetric };

struct Variable {
  std::string name;
  VariableShape shape;
  int dim;     // 1, vector length, or matrix order
  int offset;  // first scalar slot
  int size;    // number of scalar slots
};

struct Constraint {
  ConeType cone;
  int dim;  // cone dimension as in Cone::dim
  std::vector<AffineExpr> rows;
};

class ConicProgram {
 public:
  int add_scalar(std::string name);
  int add_vector(std::string name, int n);
  int add_symmetric(std::string name, int n);

  // Scalar slot of element k of a variable.
  int slot(int var, int k = 0) const;
  // Scalar slot of entry (i, j) of a symmetric variable (either triangle).
  int sym_slot(int var, int i, int j) const;

  void set_objective(AffineExpr objective) { objective_ = std::move(objective); }

  int add_zero(std::vector<AffineExpr> rows);
  int add_nonneg(std::vector<AffineExpr> rows);
  int add_soc(std::vector<AffineExpr> rows);
  // lower_entries: n(n+1)/2 plain matrix entries, lower column-major.
  int add_psd(int n, std::vector<AffineExpr> lower_entries);

  // Convenience: x_k >= 0 for every slot of a variable.
  int add_nonneg_variable(int var);

  int num_slots() const { return num_slots_; }
  const std::vector<Variable>& variables() const { return variables_; }
  const std::vector<Constraint>& constraints() const { return constraints_; }
  const AffineExpr& objective() const { return objective_; }

  // Throws LayoutError on undeclared slots or cone/row mismatches.
  void validate() const;

 private:
  int add_variable(std::string name, VariableShape shape, int dim, int size);
  int add_constraint(ConeType cone, int dim, std::vector<AffineExpr> rows);

  std::vector<Variable> variables_;
  std::vector<Constraint> constraints_;
  AffineExpr objective_;
  int num_slots_ = 0;
};

// Standard form: minimize c'x + c0 subject to A x + s = b, s in K, where K
// lists cones in row order (one merged zero cone, one merged nonneg cone,
// then each soc, then each psd). PSD rows are svec-scaled, lower
// column-major.
struct StandardForm {
  int num_vars = 0;
  int num_rows = 0;
  Eigen::VectorXd c;
  double c0 = 0.0;
  Eigen::SparseMatrix<double, Eigen::ColMajor, long> A;
  Eigen::VectorXd b;
  std::vector<Cone> cones;
  // Standard-form row of each IR constraint row: row_map[con][r].
  std::vector<std::vector<int>> row_map;
};

StandardForm assemble(const ConicProgram& program);

// Sparse text dump: header with dimensions and cone list, then COO triplets.
void write_standard_form(std::ostream& out, const StandardForm& form);

enum class SolveStatus { kOptimal, kPrimalInfeasible, kDualInfeasible, kNumericalLimit };

const char* to_string(SolveStatus status);

struct SolveOptions {
  double tol = 1e-8;
  int max_iter = 200;
  bool verbose = false;
  // A solve that stops at a numerical limit is repeated with tol scaled by
  // 10, at most this many times.
  int relax_steps = 2;
};

struct Solution {
  SolveStatus status = SolveStatus::kNumericalLimit;
  std::string backend_status;
  double objective = 0.0;
  double dual_objective = 0.0;
  Eigen::VectorXd x;
  // Dual values per IR constraint, in IR row order. PSD duals are svec
  // vectors (lower column-major, sqrt(2)-scaled off-diagonals).
  std::vector<Eigen::VectorXd> duals;
  double solve_time = 0.0;  // summed over relaxed re-solves
  int iterations = 0;
  double tol = 0.0;  // tolerance of the returned solve
  int relaxations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;

  bool optimal() const { return status == SolveStatus::kOptimal; }
  double relative_gap() const;

  double value(const ConicProgram& program, int var, int k = 0) const;
  Eigen::VectorXd vector(const ConicProgram& program, int var) const;
  Eigen::MatrixXd symmetric(const ConicProgram& program, int var) const;
};

// Narrow interface every solver backend implements.
struct BackendResult {
  std::string status_text;
  SolveStatus status = SolveStatus::kNumericalLimit;
  Eigen::VectorXd x;
  Eigen::VectorXd z;  // duals in standard-form row order
  Eigen::VectorXd s;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  double solve_time = 0.0;  // summed over relaxed re-solves
  int iterations = 0;
  double tol = 0.0;  // tolerance of the returned solve
  int relaxations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string name() const = 0;
  virtual std::string version() const { return "unknown"; }
  virtual BackendResult solve(const StandardForm& form, const SolveOptions& options) const = 0;
};

// Interior-point backend (Clarabel). Stateless, safe to share across threads.
const Backend& default_backend();

Solution solve(const ConicProgram& program, const SolveOptions& options = {});
Solution solve(const ConicProgram& program, const Backend& backend,
               const SolveOptions& options = {});

}  // namespace dropep::conic
