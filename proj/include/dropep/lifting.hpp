#pragma once

// Gram lifting of trajectories and the data-driven preconditioner.

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "dropep/algorithms.hpp"
#include "dropep/pep.hpp"

namespace dropep {

struct LiftedSample {
  Eigen::MatrixXd G;  // P'P, symmetrized
  Eigen::VectorXd F;  // value gaps
  GramLayout layout;
  std::uint64_t seed = 0;
};

// Columns of P in layout order.
Eigen::MatrixXd gram_factor(const Trajectory& traj);
// Value gaps in layout order.
Eigen::VectorXd value_gaps(const Trajectory& traj);

// Throws LayoutError when the trajectory does not match its method's layout.
LiftedSample lift(const Trajectory& traj, std::uint64_t seed = 0);
// Lift a Gram factor directly (used for hand-built samples).
LiftedSample lift(const Eigen::MatrixXd& P, const Eigen::VectorXd& F, const GramLayout& layout,
                  std::uint64_t seed = 0);

// Metric of a trajectory computed directly from the iterates.
double direct_metric(const Trajectory& traj, Metric metric);

// Per-sample statistics the preconditioner needs: column norms of P and
// absolute value gaps.
struct SampleStats {
  Eigen::VectorXd column_norms;
  Eigen::VectorXd value_gaps;
};
SampleStats sample_stats(const LiftedSample& sample);

// Diagonal weights. The weighted norm is
//   ||(G, F)||_D^2 = ||D_G^{1/2} G D_G^{1/2}||_F^2 + ||D_F F||^2
// and its dual norm uses D_G^{-1/2} and D_F^{-1}.
struct Preconditioner {
  Eigen::VectorXd gram_diag;
  Eigen::VectorXd value_diag;

  static Preconditioner identity(const GramLayout& layout);
  double norm(const Eigen::MatrixXd& G, const Eigen::VectorXd& F) const;
  double dual_norm(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y) const;
};

// D_G = N^2/n_basis diag(sum_i ||col||)^-2, D_F = N/m_vals diag(sum_i |gap|)^-1,
// with zero sums floored at 1e-12 times the largest sum of their group.
// For smooth methods n_basis = K + 2 and m_vals = K + 1.
Preconditioner preconditioner(const std::vector<SampleStats>& stats);
Preconditioner preconditioner(const std::vector<LiftedSample>& samples);

// Lifts a batch of trajectories. The parallel version distributes samples
// over OpenMP threads; both produce identical output.
std::vector<LiftedSample> lift_batch_serial(const std::vector<Trajectory>& trajs,
                                            const std::vector<std::uint64_t>& seeds);
std::vector<LiftedSample> lift_batch(const std::vector<Trajectory>& trajs,
                                     const std::vector<std::uint64_t>& seeds);

// JSON-lines persistence: one sample per line with fields
// {"G_lower": [row-major lower triangle], "F": [...], "layout": {...}, "seed": u64}.
void write_samples_jsonl(std::ostream& out, const std::vector<LiftedSample>& samples);
std::vector<LiftedSample> read_samples_jsonl(std::istream& in);

}  // namespace dropep
