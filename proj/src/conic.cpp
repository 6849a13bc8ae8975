#include "dropep/conic.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "dropep/error.hpp"

namespace dropep::conic {

namespace {

constexpr double kSqrt2 = 1.41421356237309504880;

}  // namespace

const char* to_string(ConeType type) {
  switch (type) {
    case ConeType::kZero: return "zero";
    case ConeType::kNonneg: return "nonneg";
    case ConeType::kSecondOrder: return "soc";
    case ConeType::kPsd: return "psd";
  }
  return "unknown";
}

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::kOptimal: return "optimal";
    case SolveStatus::kPrimalInfeasible: return "primal-infeasible";
    case SolveStatus::kDualInfeasible: return "dual-infeasible";
    case SolveStatus::kNumericalLimit: return "numerical-limit";
  }
  return "unknown";
}

Eigen::VectorXd pack_lower(const Eigen::MatrixXd& m) {
  const int n = static_cast<int>(m.rows());
  Eigen::VectorXd v(packed_size(n));
  int k = 0;
  for (int j = 0; j < n; ++j)
    for (int i = j; i < n; ++i) v(k++) = m(i, j);
  return v;
}

Eigen::MatrixXd unpack_lower(const Eigen::VectorXd& v, int n) {
  if (v.size() != packed_size(n)) throw LayoutError("unpack_lower: size mismatch");
  Eigen::MatrixXd m(n, n);
  int k = 0;
  for (int j = 0; j < n; ++j)
    for (int i = j; i < n; ++i) {
      m(i, j) = v(k);
      m(j, i) = v(k);
      ++k;
    }
  return m;
}

Eigen::VectorXd svec(const Eigen::MatrixXd& m) {
  const int n = static_cast<int>(m.rows());
  Eigen::VectorXd v(packed_size(n));
  int k = 0;
  for (int j = 0; j < n; ++j)
    for (int i = j; i < n; ++i) v(k++) = (i == j) ? m(i, j) : kSqrt2 * m(i, j);
  return v;
}

Eigen::MatrixXd smat(const Eigen::VectorXd& v, int n) {
  if (v.size() != packed_size(n)) throw LayoutError("smat: size mismatch");
  Eigen::MatrixXd m(n, n);
  int k = 0;
  for (int j = 0; j < n; ++j)
    for (int i = j; i < n; ++i) {
      const double e = (i == j) ? v(k) : v(k) / kSqrt2;
      m(i, j) = e;
      m(j, i) = e;
      ++k;
    }
  return m;
}

double AffineExpr::evaluate(const Eigen::VectorXd& x) const {
  double acc = constant;
  for (const Term& t : terms) acc += t.coeff * x(t.index);
  return acc;
}

int ConicProgram::add_variable(std::string name, VariableShape shape, int dim, int size) {
  if (size < 0) throw LayoutError("negative variable size for " + name);
  variables_.push_back({std::move(name), shape, dim, num_slots_, size});
  num_slots_ += size;
  return static_cast<int>(variables_.size()) - 1;
}

int ConicProgram::add_scalar(std::string name) {
  return add_variable(std::move(name), VariableShape::kScalar, 1, 1);
}

int ConicProgram::add_vector(std::string name, int n) {
  return add_variable(std::move(name), VariableShape::kVector, n, n);
}

int ConicProgram::add_symmetric(std::string name, int n) {
  return add_variable(std::move(name), VariableShape::kSymmetric, n, packed_size(n));
}

int ConicProgram::slot(int var, int k) const {
  const Variable& v = variables_.at(static_cast<std::size_t>(var));
  if (k < 0 || k >= v.size) throw LayoutError("slot out of range for " + v.name);
  return v.offset + k;
}

int ConicProgram::sym_slot(int var, int i, int j) const {
  const Variable& v = variables_.at(static_cast<std::size_t>(var));
  if (v.shape != VariableShape::kSymmetric) throw LayoutError(v.name + " is not symmetric");
  if (i < j) std::swap(i, j);
  if (j < 0 || i >= v.dim) throw LayoutError("entry out of range for " + v.name);
  return v.offset + packed_index(i, j, v.dim);
}

int ConicProgram::add_constraint(ConeType cone, int dim, std::vector<AffineExpr> rows) {
  constraints_.push_back({cone, dim, std::move(rows)});
  return static_cast<int>(constraints_.size()) - 1;
}

int ConicProgram::add_zero(std::vector<AffineExpr> rows) {
  const int n = static_cast<int>(rows.size());
  return add_constraint(ConeType::kZero, n, std::move(rows));
}

int ConicProgram::add_nonneg(std::vector<AffineExpr> rows) {
  const int n = static_cast<int>(rows.size());
  return add_constraint(ConeType::kNonneg, n, std::move(rows));
}

int ConicProgram::add_soc(std::vector<AffineExpr> rows) {
  const int n = static_cast<int>(rows.size());
  return add_constraint(ConeType::kSecondOrder, n, std::move(rows));
}

int ConicProgram::add_psd(int n, std::vector<AffineExpr> lower_entries) {
  return add_constraint(ConeType::kPsd, n, std::move(lower_entries));
}

int ConicProgram::add_nonneg_variable(int var) {
  const Variable& v = variables_.at(static_cast<std::size_t>(var));
  std::vector<AffineExpr> rows(static_cast<std::size_t>(v.size));
  for (int k = 0; k < v.size; ++k) rows[static_cast<std::size_t>(k)].add(v.offset + k, 1.0);
  return add_nonneg(std::move(rows));
}

void ConicProgram::validate() const {
  auto check_expr = [&](const AffineExpr& e, const std::string& where) {
    for (const Term& t : e.terms)
      if (t.index < 0 || t.index >= num_slots_)
        throw LayoutError(where + ": reference to undeclared slot " + std::to_string(t.index));
  };
  check_expr(objective_, "objective");
  for (std::size_t c = 0; c < constraints_.size(); ++c) {
    const Constraint& con = constraints_[c];
    const Cone cone{con.cone, con.dim};
    const std::string where = std::string(to_string(con.cone)) + " constraint " + std::to_string(c);
    if (static_cast<int>(con.rows.size()) != cone.rows())
      throw LayoutError(where + ": row count does not match cone dimension");
    if (con.cone == ConeType::kSecondOrder && con.dim < 1)
      throw LayoutError(where + ": empty second-order cone");
    for (const AffineExpr& e : con.rows) check_expr(e, where);
  }
}

StandardForm assemble(const ConicProgram& program) {
  program.validate();
  StandardForm form;
  form.num_vars = program.num_slots();
  form.c = Eigen::VectorXd::Zero(form.num_vars);
  for (const Term& t : program.objective().terms) form.c(t.index) += t.coeff;
  form.c0 = program.objective().constant;

  const auto& cons = program.constraints();
  form.row_map.resize(cons.size());

  std::vector<Eigen::Triplet<double, long>> triplets;
  std::vector<double> rhs;
  int row = 0;

  auto emit = [&](std::size_t c, double scale) {
    const Constraint& con = cons[c];
    auto& map = form.row_map[c];
    map.resize(con.rows.size());
    std::vector<double> row_scale(con.rows.size(), 1.0);
    if (con.cone == ConeType::kPsd)
      for (int j = 0; j < con.dim; ++j)
        for (int i = j + 1; i < con.dim; ++i)
          row_scale[static_cast<std::size_t>(packed_index(i, j, con.dim))] = scale;
    for (std::size_t r = 0; r < con.rows.size(); ++r) {
      const double s = row_scale[r];
      const AffineExpr& e = con.rows[r];
      for (const Term& t : e.terms) triplets.emplace_back(row, t.index, -s * t.coeff);
      rhs.push_back(s * e.constant);
      map[r] = row++;
    }
  };

  // Merged zero and nonneg cones first, then each soc, then each psd.
  for (ConeType group : {ConeType::kZero, ConeType::kNonneg}) {
    int start = row;
    for (std::size_t c = 0; c < cons.size(); ++c)
      if (cons[c].cone == group) emit(c, 1.0);
    if (row > start) form.cones.push_back({group, row - start});
  }
  for (std::size_t c = 0; c < cons.size(); ++c)
    if (cons[c].cone == ConeType::kSecondOrder) {
      emit(c, 1.0);
      form.cones.push_back({ConeType::kSecondOrder, cons[c].dim});
    }
  for (std::size_t c = 0; c < cons.size(); ++c)
    if (cons[c].cone == ConeType::kPsd) {
      emit(c, kSqrt2);
      form.cones.push_back({ConeType::kPsd, cons[c].dim});
    }

  form.num_rows = row;
  form.A.resize(row, form.num_vars);
  form.A.setFromTriplets(triplets.begin(), triplets.end());
  form.A.makeCompressed();
  form.b = Eigen::Map<const Eigen::VectorXd>(rhs.data(), static_cast<Eigen::Index>(rhs.size()));
  return form;
}

void write_standard_form(std::ostream& out, const StandardForm& form) {
  out << "# dropep conic program v1\n";
  out << "# minimize c'x + c0  s.t.  A x + s = b,  s in K\n";
  out << "vars " << form.num_vars << " rows " << form.num_rows << " nnz " << form.A.nonZeros()
      << "\n";
  out << "cones " << form.cones.size() << "\n";
  for (const Cone& k : form.cones) out << to_string(k.type) << " " << k.dim << "\n";
  out << std::setprecision(17);
  out << "c0 " << form.c0 << "\n";
  for (int i = 0; i < form.num_vars; ++i)
    if (form.c(i) != 0.0) out << "c " << i << " " << form.c(i) << "\n";
  for (int j = 0; j < form.A.outerSize(); ++j)
    for (decltype(form.A)::InnerIterator it(form.A, j); it; ++it)
      out << "A " << it.row() << " " << it.col() << " " << it.value() << "\n";
  for (int i = 0; i < form.num_rows; ++i)
    if (form.b(i) != 0.0) out << "b " << i << " " << form.b(i) << "\n";
}

double Solution::relative_gap() const {
  const double denom = std::max(1.0, std::min(std::abs(objective), std::abs(dual_objective)));
  return std::abs(objective - dual_objective) / denom;
}

double Solution::value(const ConicProgram& program, int var, int k) const {
  return x(program.slot(var, k));
}

Eigen::VectorXd Solution::vector(const ConicProgram& program, int var) const {
  const Variable& v = program.variables().at(static_cast<std::size_t>(var));
  return x.segment(v.offset, v.size);
}

Eigen::MatrixXd Solution::symmetric(const ConicProgram& program, int var) const {
  const Variable& v = program.variables().at(static_cast<std::size_t>(var));
  return unpack_lower(x.segment(v.offset, v.size), v.dim);
}

Solution solve(const ConicProgram& program, const SolveOptions& options) {
  return solve(program, default_backend(), options);
}

Solution solve(const ConicProgram& program, const Backend& backend, const SolveOptions& options) {
  const StandardForm form = assemble(program);
  SolveOptions opts = options;
  BackendResult r = backend.solve(form, opts);
  double total_time = r.solve_time;
  int relaxations = 0;
  while (r.status == SolveStatus::kNumericalLimit && relaxations < options.relax_steps) {
    opts.tol *= 10.0;
    ++relaxations;
    r = backend.solve(form, opts);
    total_time += r.solve_time;
  }

  Solution sol;
  sol.tol = opts.tol;
  sol.relaxations = relaxations;
  sol.status = r.status;
  sol.backend_status = backend.name() + ":" + r.status_text;
  sol.objective = r.primal_objective + form.c0;
  sol.dual_objective = r.dual_objective + form.c0;
  sol.x = std::move(r.x);
  sol.solve_time = total_time;
  sol.iterations = r.iterations;
  sol.primal_residual = r.primal_residual;
  sol.dual_residual = r.dual_residual;
  sol.duals.resize(form.row_map.size());
  for (std::size_t c = 0; c < form.row_map.size(); ++c) {
    const auto& map = form.row_map[c];
    Eigen::VectorXd d(static_cast<Eigen::Index>(map.size()));
    for (std::size_t k = 0; k < map.size(); ++k)
      d(static_cast<Eigen::Index>(k)) = r.z.size() ? r.z(map[k]) : 0.0;
    sol.duals[c] = std::move(d);
  }
  return sol;
}

}  // namespace dropep::conic
