#pragma once

// Convergence-rate fitting
//   phi_K <= C rho^K (K+1)^-gamma log(K+1)^omega
// by the weighted, upper-bounding least-squares problem in log space
//   minimize ||W (H x - h)||  s.t.  H x >= h,  gamma >= 0,  omega >= 0
// with H = [1, -log(K+1), K, log log(K+1)], h = log phi_K and
// W_KK = 1 + log(phi_0 / phi_K).

#include <optional>
#include <string>
#include <vector>

#include "dropep/conic.hpp"

namespace dropep {

struct RatePoint {
  int K = 0;
  double phi = 0.0;
};

struct RateFitOptions {
  bool fix_rho_one = false;
  std::optional<double> fix_gamma;
  bool with_loglog = false;
  double phi0 = 0.0;  // <= 0 uses the largest phi
  conic::SolveOptions solver;
};

struct RateFit {
  double C = 0.0;
  double rho = 1.0;
  double gamma = 0.0;
  double omega = 0.0;
  double residual = 0.0;         // ||W (H x - h)|| at the reported fit
  std::vector<int> active;       // indices of points where the bound is tight
  bool rho_clipped = false;
  std::string status;

  double evaluate(int K) const;
};

// Throws ParameterError on fewer than 3 points or nonpositive values and
// SolverError when the cone program fails.
RateFit fit_rate(const std::vector<RatePoint>& points, const RateFitOptions& options = {});

}  // namespace dropep
