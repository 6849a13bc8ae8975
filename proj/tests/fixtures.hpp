#pragma once

#include <random>
#include <vector>

#include "dropep/algorithms.hpp"
#include "dropep/instances.hpp"
#include "dropep/lifting.hpp"
#include "dropep/seed.hpp"

namespace fixtures {

inline Eigen::VectorXd sphere_point(int d, double r, std::uint64_t seed) {
  dropep::Rng rng(seed);
  std::normal_distribution<double> nd;
  Eigen::VectorXd u(d);
  for (int i = 0; i < d; ++i) u(i) = nd(rng);
  return r * u / u.norm();
}

struct Batch {
  std::vector<dropep::Trajectory> trajs;
  std::vector<dropep::LiftedSample> samples;
};

inline Batch mp_batch(const dropep::AlgorithmSpec& spec, int N, double mu, double L, int d, double r,
                      std::uint64_t master) {
  Batch b;
  for (int i = 0; i < N; ++i) {
    const std::uint64_t seed = dropep::hash64(master, static_cast<std::uint64_t>(i));
    const dropep::Instance inst = dropep::sample_mp_quadratic({mu, L, d, 100}, seed);
    const dropep::Reference ref = dropep::reference_solution(inst);
    const Eigen::VectorXd x0 = ref.x_star + sphere_point(d, r, seed ^ 0x5bd1e995ULL);
    b.trajs.push_back(dropep::run(spec, inst, x0, ref));
    b.samples.push_back(dropep::lift(b.trajs.back(), seed));
  }
  return b;
}

}  // namespace fixtures
