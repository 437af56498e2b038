#pragma once

// Placement-phase optimizers. All of them minimize the rate lower bound
// sum_i f(q_i) p_i (or, for the grouping placement, the sum of per-group
// expected rates) subject to 0 <= q_i <= 1 and sum_i q_i = M.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "dcc/bounds.hpp"
#include "dcc/model.hpp"

namespace dcc {

inline constexpr double kBudgetTolerance = 1e-11;  // relative; stops the multiplier bisection
inline constexpr double kInverseTolerance = 1e-12;

namespace detail {

// 1 - (1-x)^n (1 + n x), i.e. the probability-like mass that vanishes as
// (n(n+1)/2) x^2 near zero. The polynomial expansion avoids cancellation
// while n x is small.
inline double pair_miss(double x, std::size_t n) {
  if (n == 0) return 0.0;
  const double nd = static_cast<double>(n);
  if (nd * x < 0.5) {
    // 1 - (1-x)^n (1+nx) = sum_{j>=2} (-1)^j [n C(n,j-1) - C(n,j)] x^j
    double binom_prev = nd;                    // C(n, 1)
    double binom = nd * (nd - 1.0) / 2.0;      // C(n, 2)
    double power = x * x;
    double sum = 0.0;
    for (std::size_t j = 2; j <= n + 1; ++j) {
      const double coeff = nd * binom_prev - binom;
      const double term = ((j % 2 == 0) ? 1.0 : -1.0) * coeff * power;
      sum += term;
      if (std::abs(term) <= 1e-18 * std::abs(sum)) break;
      binom_prev = binom;
      binom = binom * (nd - static_cast<double>(j)) / static_cast<double>(j + 1);
      power *= x;
    }
    return sum;
  }
  return 1.0 - std::exp(nd * std::log1p(-x)) * (1.0 + nd * x);
}

inline double pow_one_minus(double x, double exponent) { return std::exp(exponent * std::log1p(-x)); }

}  // namespace detail

/// lim_{x->0+} h(x) = 2 / (K(K+1))
inline double h_lower_limit(std::size_t n_users) {
  const double k = static_cast<double>(n_users);
  return 2.0 / (k * (k + 1.0));
}

/// h(x) = x^2 / (1 - (1-x)^K (1+Kx)) on (0, 1]; increasing, h(1) = 1.
inline double h_eval(double x, std::size_t n_users) {
  if (n_users == 0) throw ParameterError("n_users must be positive");
  if (!(x >= 0.0) || x > 1.0) throw ParameterError("h is defined on (0, 1]");
  if (x < kLimitThreshold) return h_lower_limit(n_users);
  if (x == 1.0) return 1.0;
  return x * x / detail::pair_miss(x, n_users);
}

/// g = h^{-1} on [2/(K(K+1)), 1], by bisection.
inline double h_inverse(double y, std::size_t n_users) {
  const double lo_value = h_lower_limit(n_users);
  if (!(y >= lo_value - kInverseTolerance) || y > 1.0 + kInverseTolerance)
    throw ParameterError("value lies outside the image of h");
  if (y >= 1.0) return 1.0;
  if (y <= lo_value) return 0.0;
  double lo = 0.0;
  double hi = 1.0;
  for (int iter = 0; iter < 200 && hi - lo > 1e-16; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (h_eval(mid, n_users) < y)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

/// f'(x) = -1 / h(x), the slope of the per-file rate f.
inline double rate_function_derivative(double x, std::size_t n_users) { return -1.0 / h_eval(x, n_users); }

/// Per-group objective in x = (M_l/N_l) P_l: (P-x)/x (1-(1-x)^K), K P at 0.
inline double group_rate(double x, double group_prob, std::size_t n_users) {
  const double k = static_cast<double>(n_users);
  if (x < kLimitThreshold) return k * group_prob;
  return (group_prob - x) / x * -std::expm1(k * std::log1p(-x));
}

/// d/dx of group_rate:
/// [(1-x)^{K-1}((K-1)x+1) - 1] P / x^2 - K (1-x)^{K-1}, with the limit
/// -K(K-1)P/2 - K at zero.
inline double group_rate_derivative(double x, double group_prob, std::size_t n_users) {
  const double k = static_cast<double>(n_users);
  if (x < kLimitThreshold) return -k * (k - 1.0) / 2.0 * group_prob - k;
  const double first = -detail::pair_miss(x, n_users - 1) * group_prob / (x * x);
  return first - k * detail::pow_one_minus(x, k - 1.0);
}

inline CacheAllocation uniform_allocation(const SystemParams& params) {
  params.validate_budget();
  const double q = params.memory / static_cast<double>(params.n_files);
  return CacheAllocation{std::vector<double>(params.n_files, q), params.memory};
}

enum class KktRegime { Saturated, Interior, Zero };

inline std::string_view to_string(KktRegime r) {
  switch (r) {
    case KktRegime::Saturated: return "SATURATED";
    case KktRegime::Interior: return "INTERIOR";
    case KktRegime::Zero: return "ZERO";
  }
  return "";
}

struct KktSolution {
  CacheAllocation allocation;
  double dual = 0.0;  // multiplier of the memory budget
  std::vector<KktRegime> regimes;
};

namespace detail {

inline void check_popularity(const Popularity& popularity, const SystemParams& params) {
  params.validate_budget();
  popularity.validate();
  if (popularity.size() != params.n_files) throw ParameterError("popularity length does not match n_files");
}

inline KktRegime regime_from_fraction(double q) {
  if (q >= 1.0) return KktRegime::Saturated;
  if (q <= 0.0) return KktRegime::Zero;
  return KktRegime::Interior;
}

// When the budget reaches the number of files with positive popularity,
// those files are cached whole and the remainder is spread over the
// never-requested files, which do not affect the objective.
inline std::vector<double> saturate_popular(const Popularity& popularity, double memory) {
  const std::size_t n = popularity.size();
  const auto positive = static_cast<std::size_t>(
      std::count_if(popularity.probs.begin(), popularity.probs.end(), [](double p) { return p > 0.0; }));
  const double spread = n > positive ? (memory - static_cast<double>(positive)) / static_cast<double>(n - positive) : 0.0;
  std::vector<double> q(n);
  for (std::size_t i = 0; i < n; ++i) q[i] = popularity[i] > 0.0 ? 1.0 : std::clamp(spread, 0.0, 1.0);
  return q;
}

inline double count_positive(const Popularity& popularity) {
  return static_cast<double>(
      std::count_if(popularity.probs.begin(), popularity.probs.end(), [](double p) { return p > 0.0; }));
}

// Bisection for a non-increasing budget map nu -> sum(nu) on [lo, hi].
template <class BudgetFn>
double bisect_dual(BudgetFn&& budget, double target, double lo, double hi) {
  double nu = 0.5 * (lo + hi);
  for (int iter = 0; iter < 400; ++iter) {
    nu = 0.5 * (lo + hi);
    const double sum = budget(nu);
    if (std::abs(sum - target) <= kBudgetTolerance * std::max(1.0, target)) break;
    if (sum > target)
      lo = nu;
    else
      hi = nu;
    if (hi - lo <= std::numeric_limits<double>::min()) break;
  }
  return nu;
}

}  // namespace detail

/// Exact minimizer of the lower bound. Each file is either cached whole
/// (p_i >= nu), skipped (p_i <= 2 nu / (K(K+1))) or cached at h^{-1}(p_i/nu),
/// where nu is set by bisection so that the budget is met.
inline KktSolution solve_exact_allocation(const Popularity& popularity, const SystemParams& params) {
  detail::check_popularity(popularity, params);
  const std::size_t n = params.n_files;
  const std::size_t k = params.n_users;
  const double memory = params.memory;
  const double p_max = *std::max_element(popularity.probs.begin(), popularity.probs.end());
  const double p_min = *std::min_element(popularity.probs.begin(), popularity.probs.end());
  const double kk = static_cast<double>(k);

  KktSolution sol;
  sol.allocation.memory = memory;
  auto tag_all = [&](KktRegime r) { sol.regimes.assign(n, r); };

  if (memory >= static_cast<double>(n)) {
    sol.allocation.fractions.assign(n, 1.0);
    sol.dual = p_min;
    tag_all(KktRegime::Saturated);
    return sol;
  }
  if (memory <= 0.0) {
    sol.allocation.fractions.assign(n, 0.0);
    sol.dual = p_max / h_lower_limit(k);
    tag_all(KktRegime::Zero);
    return sol;
  }
  if (memory >= detail::count_positive(popularity)) {
    sol.allocation.fractions = detail::saturate_popular(popularity, memory);
    sol.dual = 0.0;
    for (double q : sol.allocation.fractions) sol.regimes.push_back(detail::regime_from_fraction(q));
    return sol;
  }

  if (k == 1) {
    // f(q) = 1 - q is linear: fill the most popular files first.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return popularity[a] > popularity[b]; });
    sol.allocation.fractions.assign(n, 0.0);
    double left = memory;
    for (std::size_t idx : order) {
      if (left <= 0.0) break;
      const double take = std::min(1.0, left);
      sol.allocation.fractions[idx] = take;
      sol.dual = popularity[idx];
      left -= take;
    }
    for (double q : sol.allocation.fractions) sol.regimes.push_back(detail::regime_from_fraction(q));
    return sol;
  }

  const double zero_ratio = h_lower_limit(k);
  auto fraction = [&](double p, double nu) {
    if (p >= nu) return 1.0;
    if (p <= zero_ratio * nu) return 0.0;
    return h_inverse(p / nu, k);
  };
  auto budget = [&](double nu) {
    double sum = 0.0;
    for (double p : popularity.probs) sum += fraction(p, nu);
    return sum;
  };

  const double hi = p_max * kk * (kk + 1.0) / 2.0;
  const double nu = detail::bisect_dual(budget, memory, 0.0, hi);
  sol.dual = nu;
  sol.allocation.fractions.resize(n);
  sol.regimes.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = popularity[i];
    sol.allocation.fractions[i] = fraction(p, nu);
    if (p >= nu * (1.0 - 1e-9))
      sol.regimes[i] = KktRegime::Saturated;
    else if (p <= zero_ratio * nu * (1.0 + 1e-9))
      sol.regimes[i] = KktRegime::Zero;
    else
      sol.regimes[i] = KktRegime::Interior;
  }
  return sol;
}

/// Large-K approximation of the exact allocation, q_i = min{sqrt(p_i/nu), 1}.
/// Needs no knowledge of K.
inline CacheAllocation solve_sqrt_allocation(const Popularity& popularity, const SystemParams& params) {
  detail::check_popularity(popularity, params);
  const std::size_t n = params.n_files;
  const double memory = params.memory;
  CacheAllocation out;
  out.memory = memory;
  if (memory >= static_cast<double>(n)) {
    out.fractions.assign(n, 1.0);
    return out;
  }
  if (memory <= 0.0) {
    out.fractions.assign(n, 0.0);
    return out;
  }
  if (memory >= detail::count_positive(popularity)) {
    out.fractions = detail::saturate_popular(popularity, memory);
    return out;
  }
  auto fraction = [](double p, double nu) { return std::min(std::sqrt(p / nu), 1.0); };
  auto budget = [&](double nu) {
    double sum = 0.0;
    for (double p : popularity.probs) sum += fraction(p, nu);
    return sum;
  };
  double root_sum = 0.0;
  for (double p : popularity.probs) root_sum += std::sqrt(p);
  const double p_max = *std::max_element(popularity.probs.begin(), popularity.probs.end());
  const double hi = std::max(p_max, (root_sum / memory) * (root_sum / memory));
  const double nu = detail::bisect_dual(budget, memory, 0.0, hi);
  out.fractions.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.fractions[i] = fraction(popularity[i], nu);
  return out;
}

/// Files partitioned into popularity groups with per-group memory.
struct Grouping {
  std::vector<std::vector<std::size_t>> groups;  // file indices per group
  std::vector<double> group_probs;               // P_l
  std::vector<double> group_memories;            // M_l, empty until solved
  double dual = 0.0;

  std::size_t size() const { return groups.size(); }

  /// file index -> group index
  std::vector<std::size_t> group_of_file(std::size_t n_files) const {
    std::vector<std::size_t> out(n_files, groups.size());
    for (std::size_t l = 0; l < groups.size(); ++l)
      for (std::size_t f : groups[l]) out.at(f) = l;
    return out;
  }

  void validate(std::size_t n_files) const {
    if (groups.size() != group_probs.size()) throw ParameterError("group_probs size mismatch");
    std::vector<bool> seen(n_files, false);
    for (const auto& g : groups) {
      if (g.empty()) throw ParameterError("empty group");
      for (std::size_t f : g) {
        if (f >= n_files || seen[f]) throw ParameterError("groups do not partition the files");
        seen[f] = true;
      }
    }
    if (!std::all_of(seen.begin(), seen.end(), [](bool s) { return s; }))
      throw ParameterError("groups do not cover all files");
    const double p_sum = std::accumulate(group_probs.begin(), group_probs.end(), 0.0);
    if (std::abs(p_sum - 1.0) > 1e-9) throw ParameterError("group probabilities must sum to 1");
  }
};

/// Popularity bands of width two: files sorted by popularity descending,
/// a new group opens whenever the group's most popular file would exceed
/// twice the candidate's popularity. Never-requested files share one final
/// group.
inline Grouping group_files(const Popularity& popularity) {
  const std::size_t n = popularity.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return popularity[a] > popularity[b]; });

  Grouping out;
  std::vector<std::size_t> unrequested;
  double head = 0.0;
  for (std::size_t idx : order) {
    const double p = popularity[idx];
    if (p <= 0.0) {
      unrequested.push_back(idx);
      continue;
    }
    if (out.groups.empty() || head > 2.0 * p) {
      out.groups.emplace_back();
      out.group_probs.push_back(0.0);
      head = p;
    }
    out.groups.back().push_back(idx);
    out.group_probs.back() += p;
  }
  if (!unrequested.empty()) {
    out.groups.push_back(std::move(unrequested));
    out.group_probs.push_back(0.0);
  }
  return out;
}

/// Optimal per-group memory for a fixed grouping. Works in x_l = (M_l/N_l) P_l,
/// where each group's objective is convex; x_l sits at P_l, at zero, or in
/// the interior where g_l(x_l) = P_l, and the budget multiplier nu is found
/// by bisection. Groups with P_l = 0 receive memory only when every
/// requested group is already full.
inline Grouping solve_group_allocation(Grouping grouping, const SystemParams& params) {
  params.validate_budget();
  grouping.validate(params.n_files);
  const std::size_t n_groups = grouping.size();
  const std::size_t k = params.n_users;
  const double kk = static_cast<double>(k);
  const double memory = params.memory;

  std::vector<double> sizes(n_groups);
  double active_files = 0.0;
  double idle_files = 0.0;
  for (std::size_t l = 0; l < n_groups; ++l) {
    sizes[l] = static_cast<double>(grouping.groups[l].size());
    (grouping.group_probs[l] > 0.0 ? active_files : idle_files) += sizes[l];
  }

  auto& mem = grouping.group_memories;
  mem.assign(n_groups, 0.0);
  grouping.dual = 0.0;

  if (memory >= active_files) {
    const double spread = idle_files > 0.0 ? (memory - active_files) / idle_files : 0.0;
    for (std::size_t l = 0; l < n_groups; ++l)
      mem[l] = grouping.group_probs[l] > 0.0 ? sizes[l] : std::clamp(spread, 0.0, 1.0) * sizes[l];
    return grouping;
  }
  if (memory <= 0.0) return grouping;

  if (k == 1) {
    // Objective sum_l (P_l - x_l) is linear: fill by P_l / N_l descending.
    std::vector<std::size_t> order;
    for (std::size_t l = 0; l < n_groups; ++l)
      if (grouping.group_probs[l] > 0.0) order.push_back(l);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
      return grouping.group_probs[a] / sizes[a] > grouping.group_probs[b] / sizes[b];
    });
    double left = memory;
    for (std::size_t l : order) {
      if (left <= 0.0) break;
      mem[l] = std::min(sizes[l], left);
      grouping.dual = grouping.group_probs[l] / sizes[l];
      left -= mem[l];
    }
    return grouping;
  }

  // g_l(x) = x^2 / (1 - (1-x)^{K-1}((K-1)x+1)) * (c - K(1-x)^{K-1}),  c = nu N_l / P_l
  auto g = [&](double x, double c) {
    const double ratio = x * x / detail::pair_miss(x, k - 1);
    return ratio * (c - kk * detail::pow_one_minus(x, kk - 1.0));
  };
  auto x_of = [&](std::size_t l, double nu) {
    const double p = grouping.group_probs[l];
    const double c = nu * sizes[l] / p;
    const double a = 2.0 / (kk * (kk - 1.0)) * (c - kk);
    if (p <= std::max(a, 0.0)) return 0.0;
    const double b = g(p, c);
    if (p >= b) return p;
    // sign(g(x) - P) increases through the root on (0, P)
    double lo = 0.0;
    double hi = p;
    for (int iter = 0; iter < 200 && hi - lo > 1e-16; ++iter) {
      const double mid = 0.5 * (lo + hi);
      const double gm = mid < kLimitThreshold ? a : g(mid, c);
      if (gm < p)
        lo = mid;
      else
        hi = mid;
    }
    return 0.5 * (lo + hi);
  };
  auto budget = [&](double nu) {
    double sum = 0.0;
    for (std::size_t l = 0; l < n_groups; ++l)
      if (grouping.group_probs[l] > 0.0) sum += sizes[l] / grouping.group_probs[l] * x_of(l, nu);
    return sum;
  };

  double hi = 0.0;
  for (std::size_t l = 0; l < n_groups; ++l) {
    const double p = grouping.group_probs[l];
    if (p > 0.0) hi = std::max(hi, p / sizes[l] * (kk * (kk - 1.0) / 2.0 * p + kk));
  }
  const double nu = detail::bisect_dual(budget, memory, 0.0, hi);
  grouping.dual = nu;
  for (std::size_t l = 0; l < n_groups; ++l) {
    const double p = grouping.group_probs[l];
    if (p > 0.0) mem[l] = std::min(sizes[l], sizes[l] / p * x_of(l, nu));
  }
  return grouping;
}

/// q_i = M_l / N_l for every file of group l.
inline CacheAllocation allocation_from_grouping(const Grouping& grouping, std::size_t n_files, double memory) {
  if (grouping.group_memories.size() != grouping.size()) throw ParameterError("grouping has no memories");
  CacheAllocation out;
  out.memory = memory;
  out.fractions.assign(n_files, 0.0);
  for (std::size_t l = 0; l < grouping.size(); ++l) {
    const double q = std::clamp(grouping.group_memories[l] / static_cast<double>(grouping.groups[l].size()), 0.0, 1.0);
    for (std::size_t f : grouping.groups[l]) out.fractions.at(f) = q;
  }
  return out;
}

}  // namespace dcc
