#include "dropep/lifting.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include <json.hpp>

#include "dropep/error.hpp"

namespace dropep {

Eigen::MatrixXd gram_factor(const Trajectory& traj) {
  const GramLayout layout = make_layout(traj.spec);
  const int K = traj.spec.K;
  if (static_cast<int>(traj.calls.size()) != K + 1)
    throw LayoutError("trajectory has " + std::to_string(traj.calls.size()) + " oracle calls, expected " +
                      std::to_string(K + 1));
  if (traj.spec.composite && static_cast<int>(traj.prox.size()) != K)
    throw LayoutError("composite trajectory is missing prox steps");
  const Eigen::Index d = traj.x0.size();
  if (traj.reference.x_star.size() != d) throw LayoutError("reference dimension mismatch");

  Eigen::MatrixXd P(d, layout.n_basis);
  int col = 0;
  P.col(col++) = traj.x0 - traj.reference.x_star;
  if (traj.spec.composite) {
    if (traj.reference.smooth_gradient.size() != d) throw LayoutError("reference lacks the smooth gradient");
    P.col(col++) = traj.reference.smooth_gradient;
  }
  for (const OracleCall& c : traj.calls) P.col(col++) = c.g;
  for (const ProxStep& p : traj.prox) P.col(col++) = traj.lambda_reg * p.s;
  return P;
}

Eigen::VectorXd value_gaps(const Trajectory& traj) {
  const GramLayout layout = make_layout(traj.spec);
  Eigen::VectorXd F(layout.m_vals);
  int k = 0;
  const double f_ref = traj.spec.composite ? traj.reference.smooth_value : traj.reference.f_star;
  for (const OracleCall& c : traj.calls) F(k++) = c.f - f_ref;
  for (const ProxStep& p : traj.prox) F(k++) = p.psi - traj.reference.nonsmooth_value;
  return F;
}

LiftedSample lift(const Eigen::MatrixXd& P, const Eigen::VectorXd& F, const GramLayout& layout,
                  std::uint64_t seed) {
  if (P.cols() != layout.n_basis || F.size() != layout.m_vals)
    throw LayoutError("lift: factor or value vector does not match the layout");
  LiftedSample s;
  const Eigen::MatrixXd G = P.transpose() * P;
  s.G = 0.5 * (G + G.transpose());
  s.F = F;
  s.layout = layout;
  s.seed = seed;
  return s;
}

LiftedSample lift(const Trajectory& traj, std::uint64_t seed) {
  return lift(gram_factor(traj), value_gaps(traj), make_layout(traj.spec), seed);
}

double direct_metric(const Trajectory& traj, Metric metric) {
  switch (metric) {
    case Metric::kFgap: return final_gap(traj);
    case Metric::kDist: return (traj.x_final - traj.reference.x_star).squaredNorm();
    case Metric::kGradnorm:
      if (traj.spec.composite) throw ParameterError("gradnorm metric is not supported for composite methods");
      return traj.calls.back().g.squaredNorm();
  }
  return 0.0;
}

SampleStats sample_stats(const LiftedSample& sample) {
  SampleStats st;
  st.column_norms = sample.G.diagonal().cwiseMax(0.0).cwiseSqrt();
  st.value_gaps = sample.F.cwiseAbs();
  return st;
}

Preconditioner Preconditioner::identity(const GramLayout& layout) {
  return {Eigen::VectorXd::Ones(layout.n_basis), Eigen::VectorXd::Ones(layout.m_vals)};
}

double Preconditioner::norm(const Eigen::MatrixXd& G, const Eigen::VectorXd& F) const {
  const Eigen::VectorXd s = gram_diag.cwiseSqrt();
  return std::sqrt((s.asDiagonal() * G * s.asDiagonal()).squaredNorm() +
                   value_diag.cwiseProduct(F).squaredNorm());
}

double Preconditioner::dual_norm(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y) const {
  const Eigen::VectorXd s = gram_diag.cwiseSqrt().cwiseInverse();
  return std::sqrt((s.asDiagonal() * X * s.asDiagonal()).squaredNorm() +
                   Y.cwiseQuotient(value_diag).squaredNorm());
}

namespace {

Eigen::VectorXd floored(Eigen::VectorXd sums) {
  const double top = sums.size() ? sums.maxCoeff() : 0.0;
  const double floor = top > 0.0 ? 1e-12 * top : 1.0;
  for (Eigen::Index k = 0; k < sums.size(); ++k) sums(k) = std::max(sums(k), floor);
  return sums;
}

}  // namespace

Preconditioner preconditioner(const std::vector<SampleStats>& stats) {
  if (stats.empty()) throw ParameterError("preconditioner: need at least one sample");
  const Eigen::Index n = stats[0].column_norms.size();
  const Eigen::Index m = stats[0].value_gaps.size();
  Eigen::VectorXd col_sum = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd gap_sum = Eigen::VectorXd::Zero(m);
  for (const SampleStats& s : stats) {
    if (s.column_norms.size() != n || s.value_gaps.size() != m)
      throw LayoutError("preconditioner: samples have different layouts");
    col_sum += s.column_norms;
    gap_sum += s.value_gaps;
  }
  const double N = static_cast<double>(stats.size());
  Preconditioner D;
  D.gram_diag = (N * N / static_cast<double>(n)) * floored(col_sum).array().square().inverse().matrix();
  D.value_diag = (N / static_cast<double>(m)) * floored(gap_sum).cwiseInverse();
  return D;
}

Preconditioner preconditioner(const std::vector<LiftedSample>& samples) {
  std::vector<SampleStats> stats;
  stats.reserve(samples.size());
  for (const LiftedSample& s : samples) stats.push_back(sample_stats(s));
  return preconditioner(stats);
}

std::vector<LiftedSample> lift_batch_serial(const std::vector<Trajectory>& trajs,
                                            const std::vector<std::uint64_t>& seeds) {
  if (seeds.size() != trajs.size()) throw ParameterError("lift_batch: one seed per trajectory required");
  std::vector<LiftedSample> out;
  out.reserve(trajs.size());
  for (std::size_t i = 0; i < trajs.size(); ++i) out.push_back(lift(trajs[i], seeds[i]));
  return out;
}

std::vector<LiftedSample> lift_batch(const std::vector<Trajectory>& trajs,
                                     const std::vector<std::uint64_t>& seeds) {
  if (seeds.size() != trajs.size()) throw ParameterError("lift_batch: one seed per trajectory required");
  std::vector<LiftedSample> out(trajs.size());
  const long n = static_cast<long>(trajs.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) out[i] = lift(trajs[i], seeds[i]);
  return out;
}

void write_samples_jsonl(std::ostream& out, const std::vector<LiftedSample>& samples) {
  for (const LiftedSample& s : samples) {
    nlohmann::json j;
    std::vector<double> lower;
    const Eigen::Index n = s.G.rows();
    lower.reserve(static_cast<std::size_t>(n * (n + 1) / 2));
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index k = 0; k <= i; ++k) lower.push_back(s.G(i, k));
    j["G_lower"] = lower;
    j["F"] = std::vector<double>(s.F.data(), s.F.data() + s.F.size());
    j["layout"] = {{"K", s.layout.K},
                   {"composite", s.layout.composite},
                   {"basis", s.layout.basis_labels},
                   {"values", s.layout.value_labels}};
    j["seed"] = s.seed;
    out << j.dump() << '\n';
  }
}

std::vector<LiftedSample> read_samples_jsonl(std::istream& in) {
  std::vector<LiftedSample> samples;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    LiftedSample s;
    const auto& lay = j.at("layout");
    s.layout.K = lay.at("K").get<int>();
    s.layout.composite = lay.at("composite").get<bool>();
    s.layout.basis_labels = lay.at("basis").get<std::vector<std::string>>();
    s.layout.value_labels = lay.at("values").get<std::vector<std::string>>();
    s.layout.n_basis = static_cast<int>(s.layout.basis_labels.size());
    s.layout.m_vals = static_cast<int>(s.layout.value_labels.size());
    const auto lower = j.at("G_lower").get<std::vector<double>>();
    const int n = s.layout.n_basis;
    if (static_cast<int>(lower.size()) != n * (n + 1) / 2)
      throw LayoutError("line " + std::to_string(lineno) + ": G_lower has the wrong length");
    s.G.resize(n, n);
    std::size_t k = 0;
    for (int i = 0; i < n; ++i)
      for (int c = 0; c <= i; ++c, ++k) s.G(i, c) = s.G(c, i) = lower[k];
    const auto F = j.at("F").get<std::vector<double>>();
    if (static_cast<int>(F.size()) != s.layout.m_vals)
      throw LayoutError("line " + std::to_string(lineno) + ": F has the wrong length");
    s.F = Eigen::Map<const Eigen::VectorXd>(F.data(), static_cast<Eigen::Index>(F.size()));
    s.seed = j.at("seed").get<std::uint64_t>();
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace dropep
