#include <clarabel_shim.h>

#include <string>
#include <vector>

#include "dropep/conic.hpp"
#include "dropep/error.hpp"

namespace dropep::conic {

namespace {

// Clarabel packs PSD blocks as the upper triangle, column-major. For a
// symmetric matrix that is entry (i, j), i <= j, at j(j+1)/2 + i.
std::vector<int> clarabel_row_order(const StandardForm& form) {
  std::vector<int> perm(static_cast<std::size_t>(form.num_rows));
  int row = 0;
  for (const Cone& cone : form.cones) {
    if (cone.type != ConeType::kPsd) {
      for (int k = 0; k < cone.dim; ++k, ++row) perm[static_cast<std::size_t>(row)] = row;
      continue;
    }
    const int n = cone.dim;
    for (int j = 0; j < n; ++j)
      for (int i = j; i < n; ++i) {
        // Ours: lower (i, j) at packed_index(i, j, n). Theirs: upper (j, i).
        perm[static_cast<std::size_t>(row + packed_index(i, j, n))] = row + i * (i + 1) / 2 + j;
      }
    row += packed_size(n);
  }
  return perm;
}

SolveStatus map_status(int code, std::string& text) {
  switch (code) {
    case 1: text = "Solved"; return SolveStatus::kOptimal;
    case 2: text = "PrimalInfeasible"; return SolveStatus::kPrimalInfeasible;
    case 3: text = "DualInfeasible"; return SolveStatus::kDualInfeasible;
    case 4: text = "AlmostSolved"; return SolveStatus::kNumericalLimit;
    case 5: text = "AlmostPrimalInfeasible"; return SolveStatus::kPrimalInfeasible;
    case 6: text = "AlmostDualInfeasible"; return SolveStatus::kDualInfeasible;
    case 7: text = "MaxIterations"; return SolveStatus::kNumericalLimit;
    case 8: text = "MaxTime"; return SolveStatus::kNumericalLimit;
    case 9: text = "NumericalError"; return SolveStatus::kNumericalLimit;
    case 10: text = "InsufficientProgress"; return SolveStatus::kNumericalLimit;
    default: text = "Unsolved"; return SolveStatus::kNumericalLimit;
  }
}

class ClarabelBackend final : public Backend {
 public:
  std::string name() const override { return "clarabel"; }
  std::string version() const override { return DROPEP_CLARABEL_VERSION; }

  BackendResult solve(const StandardForm& form, const SolveOptions& options) const override {
    const std::size_t n = static_cast<std::size_t>(form.num_vars);
    const std::size_t m = static_cast<std::size_t>(form.num_rows);
    const std::vector<int> perm = clarabel_row_order(form);

    // Re-index rows, then rebuild CSC so row indices stay sorted per column.
    std::vector<Eigen::Triplet<double, long>> trip;
    trip.reserve(static_cast<std::size_t>(form.A.nonZeros()));
    for (int j = 0; j < form.A.outerSize(); ++j)
      for (decltype(form.A)::InnerIterator it(form.A, j); it; ++it)
        trip.emplace_back(perm[static_cast<std::size_t>(it.row())], it.col(), it.value());
    Eigen::SparseMatrix<double, Eigen::ColMajor, long> a(form.num_rows, form.num_vars);
    a.setFromTriplets(trip.begin(), trip.end());
    a.makeCompressed();

    std::vector<std::size_t> colptr(n + 1), rowval(static_cast<std::size_t>(a.nonZeros()));
    std::vector<double> nzval(static_cast<std::size_t>(a.nonZeros()));
    for (std::size_t j = 0; j <= n; ++j) colptr[j] = static_cast<std::size_t>(a.outerIndexPtr()[j]);
    for (std::size_t k = 0; k < rowval.size(); ++k) {
      rowval[k] = static_cast<std::size_t>(a.innerIndexPtr()[k]);
      nzval[k] = a.valuePtr()[k];
    }
    std::vector<double> b(m);
    for (std::size_t r = 0; r < m; ++r) b[static_cast<std::size_t>(perm[r])] = form.b(static_cast<Eigen::Index>(r));

    std::vector<int> kinds;
    std::vector<std::size_t> dims;
    for (const Cone& cone : form.cones) {
      switch (cone.type) {
        case ConeType::kZero: kinds.push_back(CLARABEL_SHIM_CONE_ZERO); break;
        case ConeType::kNonneg: kinds.push_back(CLARABEL_SHIM_CONE_NONNEG); break;
        case ConeType::kSecondOrder: kinds.push_back(CLARABEL_SHIM_CONE_SOC); break;
        case ConeType::kPsd: kinds.push_back(CLARABEL_SHIM_CONE_PSD); break;
      }
      dims.push_back(static_cast<std::size_t>(cone.dim));
    }

    ClarabelShimSettings settings{options.tol, options.tol, options.tol,
                                  static_cast<uint32_t>(options.max_iter), options.verbose ? 1 : 0};
    std::vector<double> x(n), z(m), s(m);
    ClarabelShimInfo info{};
    const double* q = form.c.data();
    const int rc = clarabel_shim_solve(n, m, q, colptr.data(), rowval.data(), nzval.data(),
                                       b.data(), kinds.size(), kinds.data(), dims.data(),
                                       &settings, x.data(), z.data(), s.data(), &info);
    if (rc != 0) throw SolverError("clarabel setup failed with code " + std::to_string(rc));

    BackendResult out;
    out.status = map_status(info.status, out.status_text);
    out.x = Eigen::Map<Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(n));
    out.z.resize(static_cast<Eigen::Index>(m));
    out.s.resize(static_cast<Eigen::Index>(m));
    for (std::size_t r = 0; r < m; ++r) {
      out.z(static_cast<Eigen::Index>(r)) = z[static_cast<std::size_t>(perm[r])];
      out.s(static_cast<Eigen::Index>(r)) = s[static_cast<std::size_t>(perm[r])];
    }
    out.primal_objective = info.obj_val;
    out.dual_objective = info.obj_val_dual;
    out.solve_time = info.solve_time;
    out.iterations = static_cast<int>(info.iterations);
    out.primal_residual = info.r_prim;
    out.dual_residual = info.r_dual;
    return out;
  }
};

}  // namespace

const Backend& default_backend() {
  static const ClarabelBackend backend;
  return backend;
}

}  // namespace dropep::conic
