#pragma once

// Monte-Carlo experiment engine: Zipf popularity, seeded placement and
// request sampling, per-trial delivery, and rate statistics.
//
// Randomness is split by counter: every (seed, grid point, trial) triple
// owns a stream, and inside it the requests and each file's placement draw
// from separate engines. Trials can therefore run in any order or in
// parallel and still aggregate to identical statistics, and a file's cache
// contents do not depend on which other files were realized.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "dcc/allocation.hpp"
#include "dcc/bounds.hpp"
#include "dcc/delivery.hpp"
#include "dcc/model.hpp"

namespace dcc {

/// Infeasible experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PlacementScheme { Uniform, ExactKkt, Sqrt, Grouped };
enum class DeliveryScheme { OD, SGD, SemiSGD, BGD, GroupedOD, Uncoded };

inline std::string_view to_string(PlacementScheme s) {
  switch (s) {
    case PlacementScheme::Uniform: return "UNIFORM";
    case PlacementScheme::ExactKkt: return "EXACT_KKT";
    case PlacementScheme::Sqrt: return "SQRT";
    case PlacementScheme::Grouped: return "GROUPED";
  }
  return "";
}

inline std::string_view to_string(DeliveryScheme s) {
  switch (s) {
    case DeliveryScheme::OD: return "OD";
    case DeliveryScheme::SGD: return "SGD";
    case DeliveryScheme::SemiSGD: return "SEMI_SGD";
    case DeliveryScheme::BGD: return "BGD";
    case DeliveryScheme::GroupedOD: return "GROUPED_OD";
    case DeliveryScheme::Uncoded: return "UNCODED";
  }
  return "";
}

inline std::optional<PlacementScheme> parse_placement(std::string_view name) {
  for (auto s : {PlacementScheme::Uniform, PlacementScheme::ExactKkt, PlacementScheme::Sqrt, PlacementScheme::Grouped})
    if (to_string(s) == name) return s;
  return std::nullopt;
}

inline std::optional<DeliveryScheme> parse_delivery(std::string_view name) {
  for (auto s : {DeliveryScheme::OD, DeliveryScheme::SGD, DeliveryScheme::SemiSGD, DeliveryScheme::BGD,
                 DeliveryScheme::GroupedOD, DeliveryScheme::Uncoded})
    if (to_string(s) == name) return s;
  return std::nullopt;
}

struct ExperimentConfig {
  SystemParams params;  // params.memory is ignored; memory_grid drives the run
  double zipf_alpha = 0.0;
  PlacementScheme placement_scheme = PlacementScheme::Uniform;
  DeliveryScheme delivery_scheme = DeliveryScheme::SGD;
  std::vector<double> memory_grid;
  std::size_t trials = 1;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0: hardware concurrency
};

struct RateStatistics {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t trials = 0;

  static RateStatistics from_samples(std::span<const double> samples) {
    RateStatistics s;
    s.trials = samples.size();
    if (samples.empty()) return s;
    const double n = static_cast<double>(samples.size());
    s.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
    if (samples.size() > 1) {
      double ss = 0.0;
      for (double x : samples) ss += (x - s.mean) * (x - s.mean);
      s.std_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    }
    return s;
  }
};

struct ExperimentPoint {
  double memory = 0.0;
  RateStatistics stats;
  double lower_bound = 0.0;  // sum_i f(q_i) p_i at this point's allocation
};

/// p_i proportional to i^{-alpha}, i = 1..N.
inline Popularity zipf_popularity(std::size_t n_files, double alpha) {
  if (n_files == 0) throw ParameterError("n_files must be positive");
  if (!(alpha >= 0.0)) throw ParameterError("alpha must be non-negative");
  Popularity p;
  p.probs.resize(n_files);
  for (std::size_t i = 0; i < n_files; ++i) p.probs[i] = std::pow(static_cast<double>(i + 1), -alpha);
  const double total = std::accumulate(p.probs.begin(), p.probs.end(), 0.0);
  for (double& x : p.probs) x /= total;
  return p;
}

struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

/// Stream of one trial at one memory grid point.
inline StreamKey trial_key(std::uint64_t seed, std::size_t grid_index, std::size_t trial) {
  return StreamKey{seed, (static_cast<std::uint64_t>(grid_index) << 32) | static_cast<std::uint64_t>(trial)};
}

inline constexpr std::uint64_t kRequestStreamTag = 0;
inline constexpr std::uint64_t file_stream_tag(std::size_t file) { return static_cast<std::uint64_t>(file) + 1; }

inline std::mt19937_64 stream_engine(StreamKey key, std::uint64_t tag) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(key.seed), hi(key.seed), lo(key.stream), hi(key.stream), lo(tag), hi(tag)};
  return std::mt19937_64(seq);
}

namespace detail {

inline void realize_file(PlacementRealization& out, double fraction, std::size_t file, StreamKey key,
                         std::vector<std::size_t>& perm) {
  const auto& params = out.params();
  const std::size_t f = params.file_size_bits;
  const std::size_t count = cached_bit_count(fraction, f);
  auto& column = out.mutable_holders(file);
  if (count == f) {
    std::fill(column.begin(), column.end(), UserSet::first(params.n_users));
    return;
  }
  if (count == 0) return;
  auto engine = stream_engine(key, file_stream_tag(file));
  perm.resize(f);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  // A partial Fisher-Yates pass yields a uniform count-subset whatever the
  // starting order, so the permutation is reused across users.
  for (std::size_t user = 0; user < params.n_users; ++user) {
    for (std::size_t j = 0; j < count; ++j) {
      std::uniform_int_distribution<std::size_t> pick(j, f - 1);
      std::swap(perm[j], perm[pick(engine)]);
      column[perm[j]].insert(user);
    }
  }
}

inline void check_allocation(const CacheAllocation& allocation, const SystemParams& params) {
  params.validate();
  if (allocation.size() != params.n_files) throw ParameterError("allocation length does not match n_files");
  for (double q : allocation.fractions)
    if (!(q >= 0.0 && q <= 1.0)) throw ParameterError("cache fractions must lie in [0, 1]");
}

}  // namespace detail

/// Each user independently caches a uniformly random round(q_i F)-subset of
/// every file i.
inline PlacementRealization realize_placement(const CacheAllocation& allocation, const SystemParams& params,
                                              StreamKey key) {
  detail::check_allocation(allocation, params);
  PlacementRealization out(params);
  std::vector<std::size_t> perm;
  for (std::size_t i = 0; i < params.n_files; ++i) detail::realize_file(out, allocation.fractions[i], i, key, perm);
  return out;
}

/// Realizes only the listed files; each realized column is identical to the
/// one the full realization produces for the same key.
inline PlacementRealization realize_placement(const CacheAllocation& allocation, const SystemParams& params,
                                              StreamKey key, std::span<const std::size_t> files) {
  detail::check_allocation(allocation, params);
  PlacementRealization out(params);
  std::vector<std::size_t> perm;
  for (std::size_t i : files) {
    if (i >= params.n_files) throw ParameterError("file index out of range");
    if (!out.is_realized(i)) detail::realize_file(out, allocation.fractions[i], i, key, perm);
  }
  return out;
}

/// K i.i.d. draws by inverse CDF.
template <class Engine>
RequestVector sample_requests(const Popularity& popularity, std::size_t n_users, Engine& engine) {
  popularity.validate();
  std::vector<double> cdf(popularity.size());
  std::partial_sum(popularity.probs.begin(), popularity.probs.end(), cdf.begin());
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < popularity.size(); ++i)
    if (popularity[i] > 0.0) last_positive = i;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  RequestVector r;
  r.demands.resize(n_users);
  for (auto& d : r.demands) {
    const double u = unit(engine) * cdf.back();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    d = std::min(static_cast<std::size_t>(it - cdf.begin()), last_positive);
  }
  return r;
}

inline RequestVector sample_requests(const Popularity& popularity, std::size_t n_users, StreamKey key) {
  auto engine = stream_engine(key, kRequestStreamTag);
  return sample_requests(popularity, n_users, engine);
}

/// Everything about one memory point that does not depend on the trial.
struct PlacementPlan {
  SystemParams params;
  Popularity popularity;
  CacheAllocation allocation;
  std::optional<Grouping> grouping;
};

inline PlacementPlan plan_placement(PlacementScheme scheme, const Popularity& popularity, const SystemParams& params) {
  PlacementPlan plan{params, popularity, {}, std::nullopt};
  switch (scheme) {
    case PlacementScheme::Uniform: plan.allocation = uniform_allocation(params); break;
    case PlacementScheme::ExactKkt: plan.allocation = solve_exact_allocation(popularity, params).allocation; break;
    case PlacementScheme::Sqrt: plan.allocation = solve_sqrt_allocation(popularity, params); break;
    case PlacementScheme::Grouped: {
      plan.grouping = solve_group_allocation(group_files(popularity), params);
      plan.allocation = allocation_from_grouping(*plan.grouping, params.n_files, params.memory);
      break;
    }
  }
  return plan;
}

inline TransmissionLog run_delivery(DeliveryScheme scheme, std::span<const BitRecord> bits,
                                    const RequestVector& requests, const PlacementPlan& plan) {
  const std::size_t k = plan.params.n_users;
  const std::size_t f = plan.params.file_size_bits;
  switch (scheme) {
    case DeliveryScheme::OD: return deliver_od(bits, k, f);
    case DeliveryScheme::SGD: return deliver_sgd(bits, k, f);
    case DeliveryScheme::SemiSGD: return deliver_semi_sgd(bits, k, f);
    case DeliveryScheme::BGD: return deliver_bgd(bits, k, f);
    case DeliveryScheme::Uncoded: return deliver_uncoded(bits, f);
    case DeliveryScheme::GroupedOD:
      if (!plan.grouping) throw ConfigError("grouped delivery needs a grouped placement");
      return deliver_grouped(bits, *plan.grouping, requests, k, f);
  }
  throw ConfigError("unknown delivery scheme");
}

/// One trial: sample requests, realize the requested files' placement,
/// and deliver with every scheme. Writes R_d = slots / F per scheme.
inline void simulate_trial(const PlacementPlan& plan, StreamKey key, std::span<const DeliveryScheme> schemes,
                           std::span<double> rates) {
  const RequestVector requests = sample_requests(plan.popularity, plan.params.n_users, key);
  const PlacementRealization placement = realize_placement(plan.allocation, plan.params, key, requests.demands);
  const std::vector<BitRecord> bits = compute_demand_bits(placement, requests);
  for (std::size_t s = 0; s < schemes.size(); ++s)
    rates[s] = run_delivery(schemes[s], bits, requests, plan).rate();
}

inline void validate_config(const ExperimentConfig& config, std::span<const DeliveryScheme> schemes) {
  SystemParams p = config.params;
  p.memory = 0.0;
  try {
    p.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  if (config.trials == 0) throw ConfigError("trials must be positive");
  if (!(config.zipf_alpha >= 0.0)) throw ConfigError("zipf_alpha must be non-negative");
  if (config.memory_grid.empty()) throw ConfigError("memory_grid is empty");
  for (double m : config.memory_grid)
    if (!(m >= 0.0) || m > static_cast<double>(p.n_files)) throw ConfigError("memory grid value outside [0, N]");
  if (schemes.empty()) throw ConfigError("no delivery scheme selected");
  const bool grouped_placement = config.placement_scheme == PlacementScheme::Grouped;
  for (auto s : schemes) {
    if ((s == DeliveryScheme::GroupedOD) != grouped_placement)
      throw ConfigError("GROUPED placement pairs only with GROUPED_OD delivery");
    if ((s == DeliveryScheme::SGD || s == DeliveryScheme::SemiSGD) && p.n_users > kMaxSubsetWalkUsers)
      throw ConfigError("subset-walk schedulers support at most 32 users");
  }
}

/// Runs several delivery schemes over shared trial realizations. The
/// statistics of each scheme equal those of a single-scheme run.
inline std::vector<std::vector<ExperimentPoint>> run_experiments(const ExperimentConfig& config,
                                                                 std::span<const DeliveryScheme> schemes) {
  validate_config(config, schemes);
  const Popularity popularity = zipf_popularity(config.params.n_files, config.zipf_alpha);
  std::size_t workers = config.threads != 0 ? config.threads : std::max(1U, std::thread::hardware_concurrency());
  workers = std::min(workers, config.trials);

  std::vector<std::vector<ExperimentPoint>> out(schemes.size());
  for (std::size_t g = 0; g < config.memory_grid.size(); ++g) {
    SystemParams params = config.params;
    params.memory = config.memory_grid[g];
    const PlacementPlan plan = plan_placement(config.placement_scheme, popularity, params);
    const double bound = lower_bound_rate(plan.allocation, popularity, params.n_users);

    // rates[t * S + s]
    std::vector<double> rates(config.trials * schemes.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    auto work = [&] {
      try {
        for (std::size_t t = next++; t < config.trials && !failed; t = next++)
          simulate_trial(plan, trial_key(config.seed, g, t), schemes,
                         std::span<double>(rates).subspan(t * schemes.size(), schemes.size()));
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    };
    if (workers <= 1) {
      work();
    } else {
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
      for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    std::vector<double> column(config.trials);
    for (std::size_t s = 0; s < schemes.size(); ++s) {
      for (std::size_t t = 0; t < config.trials; ++t) column[t] = rates[t * schemes.size() + s];
      out[s].push_back(ExperimentPoint{params.memory, RateStatistics::from_samples(column), bound});
    }
  }
  return out;
}

inline std::vector<ExperimentPoint> run_experiment(const ExperimentConfig& config) {
  const DeliveryScheme scheme = config.delivery_scheme;
  return run_experiments(config, std::span<const DeliveryScheme>(&scheme, 1)).front();
}

}  // namespace dcc
