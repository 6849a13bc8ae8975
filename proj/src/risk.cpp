#include "dropep/risk.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "dropep/error.hpp"

namespace dropep {

double empirical_cvar(std::vector<double> values, double alpha) {
  if (values.empty()) throw ParameterError("empirical_cvar: empty input");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ParameterError("empirical_cvar: alpha must lie in (0, 1]");
  const double N = static_cast<double>(values.size());
  std::sort(values.begin(), values.end(), std::greater<>());
  const auto k = static_cast<std::size_t>(std::clamp(std::ceil(alpha * N - 1e-9), 1.0, N));
  const double t = values[k - 1];
  double excess = 0.0;
  for (double v : values) excess += std::max(v - t, 0.0);
  return t + excess / (alpha * N);
}

double empirical_mean(const std::vector<double>& values) {
  if (values.empty()) throw ParameterError("empirical_mean: empty input");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double empirical_max(const std::vector<double>& values) {
  if (values.empty()) throw ParameterError("empirical_max: empty input");
  return *std::max_element(values.begin(), values.end());
}

}  // namespace dropep
