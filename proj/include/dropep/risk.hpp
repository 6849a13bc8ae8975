#pragma once

#include <vector>

namespace dropep {

// CVaR_alpha of an empirical distribution:
//   inf_t  t + 1/(alpha N) sum_i (v_i - t)_+
// attained at t = the ceil(alpha N)-th largest value.
double empirical_cvar(std::vector<double> values, double alpha);

double empirical_mean(const std::vector<double>& values);
double empirical_max(const std::vector<double>& values);

}  // namespace dropep
