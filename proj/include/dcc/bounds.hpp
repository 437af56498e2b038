#pragma once

// Closed-form rate expressions: the decentralized worst-case curve, the
// lower bound over cache allocation placement with XOR cooperative delivery,
// the uncoded baseline, and the expected rate of one popularity group.

#include <cmath>
#include <cstddef>
#include <vector>

#include "dcc/model.hpp"

namespace dcc {

/// Arguments below this value take the analytic limit branch.
inline constexpr double kLimitThreshold = 1e-12;

struct RateCurvePoint {
  double memory = 0.0;
  double rate = 0.0;
};

/// f(x) = (1-x)/x * (1-(1-x)^K), with f(0) = K.
inline double rate_function(double x, std::size_t n_users) {
  const double k = static_cast<double>(n_users);
  if (x < kLimitThreshold) return k;
  if (x >= 1.0) return 0.0;
  // 1 - (1-x)^K without cancellation for small x
  const double miss_all = -std::expm1(k * std::log1p(-x));
  return (1.0 - x) / x * miss_all;
}

inline double worst_case_rate(double memory, std::size_t n_files, std::size_t n_users) {
  if (n_users == 0 || n_files == 0) throw ParameterError("n_files and n_users must be positive");
  const double n = static_cast<double>(n_files);
  if (!(memory >= 0.0) || memory > n) throw ParameterError("memory must lie in [0, n_files]");
  return rate_function(memory / n, n_users);
}

/// sum_i f(q_i) p_i
inline double lower_bound_rate(const CacheAllocation& allocation, const Popularity& popularity,
                               std::size_t n_users) {
  if (allocation.size() != popularity.size())
    throw ParameterError("allocation and popularity lengths differ");
  double total = 0.0;
  for (std::size_t i = 0; i < allocation.size(); ++i)
    total += rate_function(allocation.fractions[i], n_users) * popularity[i];
  return total;
}

inline double uncoded_rate(double memory, std::size_t n_files, std::size_t n_users) {
  const double n = static_cast<double>(n_files);
  if (n_files == 0 || !(memory >= 0.0) || memory > n) throw ParameterError("memory must lie in [0, n_files]");
  return static_cast<double>(n_users) * (1.0 - memory / n);
}

/// E[R(M_l, N_l, K_l)] with K_l ~ Binomial(K, P_l):
/// (1-t)/t * (1-(1-t P_l)^K) for t = M_l/N_l, and K P_l at t = 0.
inline double grouped_expected_rate(double group_memory, std::size_t group_size, double group_prob,
                                    std::size_t n_users) {
  if (group_size == 0) throw ParameterError("group_size must be positive");
  const double n = static_cast<double>(group_size);
  if (!(group_memory >= 0.0) || group_memory > n) throw ParameterError("group memory must lie in [0, N_l]");
  if (!(group_prob >= 0.0) || group_prob > 1.0) throw ParameterError("group probability must lie in [0, 1]");
  const double k = static_cast<double>(n_users);
  const double t = group_memory / n;
  if (t < kLimitThreshold) return k * group_prob;
  if (t >= 1.0) return 0.0;
  return (1.0 - t) / t * -std::expm1(k * std::log1p(-t * group_prob));
}

inline std::vector<RateCurvePoint> worst_case_curve(const std::vector<double>& memories, std::size_t n_files,
                                                    std::size_t n_users) {
  std::vector<RateCurvePoint> out;
  out.reserve(memories.size());
  for (double m : memories) out.push_back({m, worst_case_rate(m, n_files, n_users)});
  return out;
}

}  // namespace dcc
