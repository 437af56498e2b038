#pragma once

// Domain types for decentralized coded caching: system parameters,
// popularity, cache allocations, placement realizations, demand bits and
// transmission logs, plus the decodability verifier used as the global
// correctness oracle for every delivery scheduler.
//
// Indices are 0-based in memory. Everything that is serialized (fixtures,
// transmission listings, CSV) uses 1-based user/file/bit indices.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dcc {

/// Thrown when an operation receives arguments outside its domain.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr std::size_t kMaxUsers = 64;

/// Fixed-width set of users backed by one machine word (bit k = user k).
class UserSet {
 public:
  constexpr UserSet() = default;
  constexpr explicit UserSet(std::uint64_t mask) : mask_(mask) {}

  static constexpr UserSet single(std::size_t user) { return UserSet{std::uint64_t{1} << user}; }
  /// {0, ..., n-1}
  static constexpr UserSet first(std::size_t n) {
    return UserSet{n >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << n) - 1};
  }
  template <class Range>
  static UserSet of(const Range& users) {
    UserSet s;
    for (auto u : users) s.insert(static_cast<std::size_t>(u));
    return s;
  }

  constexpr std::uint64_t mask() const { return mask_; }
  constexpr bool empty() const { return mask_ == 0; }
  constexpr std::size_t size() const { return static_cast<std::size_t>(std::popcount(mask_)); }
  constexpr bool contains(std::size_t user) const { return (mask_ >> user) & 1U; }
  constexpr void insert(std::size_t user) { mask_ |= std::uint64_t{1} << user; }
  constexpr void erase(std::size_t user) { mask_ &= ~(std::uint64_t{1} << user); }
  constexpr bool subset_of(UserSet other) const { return (mask_ & ~other.mask_) == 0; }
  constexpr bool fits_within(std::size_t n_users) const { return subset_of(first(n_users)); }
  /// Lowest member; undefined on the empty set.
  constexpr std::size_t lowest() const { return static_cast<std::size_t>(std::countr_zero(mask_)); }

  constexpr UserSet operator&(UserSet o) const { return UserSet{mask_ & o.mask_}; }
  constexpr UserSet operator|(UserSet o) const { return UserSet{mask_ | o.mask_}; }
  constexpr UserSet& operator&=(UserSet o) { mask_ &= o.mask_; return *this; }
  constexpr UserSet& operator|=(UserSet o) { mask_ |= o.mask_; return *this; }
  constexpr UserSet without(std::size_t user) const { return UserSet{mask_ & ~(std::uint64_t{1} << user)}; }
  constexpr bool operator==(const UserSet&) const = default;

  template <class Fn>
  constexpr void for_each(Fn&& fn) const {
    for (std::uint64_t m = mask_; m != 0; m &= m - 1) fn(static_cast<std::size_t>(std::countr_zero(m)));
  }
  std::vector<std::size_t> members() const {
    std::vector<std::size_t> out;
    out.reserve(size());
    for_each([&](std::size_t u) { out.push_back(u); });
    return out;
  }

 private:
  std::uint64_t mask_ = 0;
};

/// Lexicographic order over the sorted member lists of two sets.
/// A proper prefix sorts first.
constexpr bool lex_less(UserSet a, UserSet b) {
  const std::uint64_t diff = a.mask() ^ b.mask();
  if (diff == 0) return false;
  const std::uint64_t low = diff & (~diff + 1);
  const bool a_has = (a.mask() & low) != 0;
  // If a holds the first differing element it is smaller, unless b has run
  // out of elements before that point (b is a prefix of a).
  const std::uint64_t below = low - 1;
  if (a_has) return (b.mask() & ~below) != 0;
  return (a.mask() & ~below) == 0;
}

/// Cardinality descending, then lexicographic ascending.
constexpr bool walk_order_less(UserSet a, UserSet b) {
  if (a.size() != b.size()) return a.size() > b.size();
  return lex_less(a, b);
}

/// "{1,2,4}" with 1-based members.
inline std::string format_user_set(UserSet s) {
  std::string out = "{";
  bool first = true;
  s.for_each([&](std::size_t u) {
    if (!first) out += ',';
    out += std::to_string(u + 1);
    first = false;
  });
  out += '}';
  return out;
}

struct SystemParams {
  std::size_t n_files = 1;
  std::size_t n_users = 1;
  std::size_t file_size_bits = 1;
  double memory = 0.0;

  void validate() const {
    validate_budget();
    if (n_files < n_users) throw ParameterError("n_files must be at least n_users");
  }

  /// Everything but N >= K, which the allocation optimizers do not need.
  void validate_budget() const {
    if (n_files == 0 || n_users == 0 || file_size_bits == 0)
      throw ParameterError("n_files, n_users and file_size_bits must be positive");
    if (n_users > kMaxUsers) throw ParameterError("at most 64 users are supported");
    if (!(memory >= 0.0) || memory > static_cast<double>(n_files))
      throw ParameterError("memory must lie in [0, n_files]");
  }
};

struct Popularity {
  std::vector<double> probs;

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }

  void validate() const {
    if (probs.empty()) throw ParameterError("popularity is empty");
    double sum = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0)) throw ParameterError("popularity entries must be non-negative");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ParameterError("popularity must sum to 1");
  }
};

struct CacheAllocation {
  std::vector<double> fractions;
  double memory = 0.0;

  std::size_t size() const { return fractions.size(); }

  void validate() const {
    double sum = 0.0;
    for (double q : fractions) {
      if (!(q >= 0.0 && q <= 1.0)) throw ParameterError("cache fractions must lie in [0, 1]");
      sum += q;
    }
    if (std::abs(sum - memory) > 1e-6) throw ParameterError("cache fractions must sum to memory");
  }
};

/// Bits of file i cached per user: round(q_i F), half away from zero, clamped to [0, F].
inline std::size_t cached_bit_count(double fraction, std::size_t file_size_bits) {
  const double raw = std::round(fraction * static_cast<double>(file_size_bits));
  if (raw <= 0.0) return 0;
  return std::min(file_size_bits, static_cast<std::size_t>(raw));
}

/// Which users cache each bit of each file. Files may be left unrealized
/// (an empty column) when only a subset of files is needed by a trial.
class PlacementRealization {
 public:
  PlacementRealization() = default;
  explicit PlacementRealization(const SystemParams& params)
      : params_(params), holders_(params.n_files) {}

  const SystemParams& params() const { return params_; }
  bool is_realized(std::size_t file) const { return !holders_.at(file).empty(); }

  /// Holders of every bit of `file`; sized F once realized.
  const std::vector<UserSet>& holders(std::size_t file) const { return holders_.at(file); }
  std::vector<UserSet>& mutable_holders(std::size_t file) {
    auto& column = holders_.at(file);
    if (column.empty()) column.assign(params_.file_size_bits, UserSet{});
    return column;
  }

  /// Sorted bit indices of `file` cached by `user`.
  std::vector<std::size_t> cached(std::size_t user, std::size_t file) const {
    std::vector<std::size_t> out;
    const auto& column = holders_.at(file);
    for (std::size_t j = 0; j < column.size(); ++j)
      if (column[j].contains(user)) out.push_back(j);
    return out;
  }

 private:
  SystemParams params_;
  std::vector<std::vector<UserSet>> holders_;
};

struct RequestVector {
  std::vector<std::size_t> demands;  // demands[k] = file requested by user k
};

/// A requested bit that its intended user does not cache.
struct BitRecord {
  std::size_t file = 0;
  std::size_t bit_index = 0;
  std::size_t intended_user = 0;
  UserSet cover_set;

  UserSet cooperative_set() const { return cover_set | UserSet::single(intended_user); }
  bool operator==(const BitRecord&) const = default;
};

/// One time slot: the XOR of the payload bits (indices into the demand-bit
/// list) plus `padded_zero_count` phantom zeros. `group` is the set of users
/// the slot is addressed to, padded users included.
struct Transmission {
  std::vector<std::size_t> payload;
  std::size_t padded_zero_count = 0;
  UserSet group;

  bool operator==(const Transmission&) const = default;
};

struct TransmissionLog {
  std::vector<Transmission> transmissions;
  std::size_t file_size_bits = 1;

  std::size_t slots() const { return transmissions.size(); }
  double rate() const { return static_cast<double>(transmissions.size()) / static_cast<double>(file_size_bits); }
  bool operator==(const TransmissionLog&) const = default;
};

/// Bits each user must receive: for every user in ascending order, the
/// uncached bits of its requested file in ascending bit order, each with the
/// set of other users caching it.
inline std::vector<BitRecord> compute_demand_bits(const PlacementRealization& placement,
                                                  const RequestVector& requests) {
  const auto& params = placement.params();
  if (requests.demands.size() != params.n_users)
    throw ParameterError("request vector length does not match n_users");
  std::vector<BitRecord> bits;
  for (std::size_t k = 0; k < params.n_users; ++k) {
    const std::size_t file = requests.demands[k];
    if (file >= params.n_files) throw ParameterError("requested file index out of range");
    if (!placement.is_realized(file)) throw ParameterError("requested file has no realized placement");
    const auto& column = placement.holders(file);
    for (std::size_t j = 0; j < column.size(); ++j) {
      if (column[j].contains(k)) continue;
      bits.push_back(BitRecord{file, j, k, column[j]});
    }
  }
  return bits;
}

struct VerificationReport {
  bool pass = true;
  std::optional<std::size_t> first_bad_transmission;
  std::vector<std::size_t> undelivered;  // demand-bit indices never transmitted
  std::string reason;

  explicit operator bool() const { return pass; }
};

namespace detail {
// Deterministic 64-bit content for a (file, bit) pair.
constexpr std::uint64_t bit_content(std::size_t file, std::size_t bit) {
  std::uint64_t z = (static_cast<std::uint64_t>(file) << 32) ^ static_cast<std::uint64_t>(bit);
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Checks that `log` delivers every demand bit exactly once, that each slot
/// is pairwise decodable, and that a per-user XOR decoder holding only its
/// cached bits recovers every requested bit.
inline VerificationReport verify_decodability(const TransmissionLog& log,
                                              const std::vector<BitRecord>& demand_bits) {
  VerificationReport report;
  auto fail = [&](std::size_t t, std::string why) {
    if (report.pass) {
      report.pass = false;
      report.first_bad_transmission = t;
      report.reason = std::move(why);
    }
  };

  std::vector<std::size_t> seen(demand_bits.size(), 0);
  for (std::size_t t = 0; t < log.transmissions.size(); ++t) {
    const auto& tx = log.transmissions[t];
    if (tx.payload.empty()) {
      fail(t, "empty payload");
      continue;
    }
    UserSet users;
    for (std::size_t idx : tx.payload) {
      if (idx >= demand_bits.size()) {
        fail(t, "payload references an unknown bit");
        continue;
      }
      if (++seen[idx] > 1) fail(t, "bit transmitted more than once");
      const auto& b = demand_bits[idx];
      if (users.contains(b.intended_user)) fail(t, "two payload bits share an intended user");
      users.insert(b.intended_user);
    }
    if (!report.pass) continue;
    for (std::size_t i : tx.payload)
      for (std::size_t j : tx.payload)
        if (i != j && !demand_bits[j].cover_set.contains(demand_bits[i].intended_user))
          fail(t, "intended user does not cache a co-transmitted bit");
    if (!users.subset_of(tx.group) || tx.group.size() != users.size() + tx.padded_zero_count)
      fail(t, "group does not match payload and padding");
  }

  // Decoder: each user XORs out the co-transmitted bits it caches and keeps
  // the remainder as the recovered content of its own bit.
  std::vector<bool> recovered(demand_bits.size(), false);
  for (std::size_t t = 0; t < log.transmissions.size() && report.pass; ++t) {
    const auto& tx = log.transmissions[t];
    std::uint64_t signal = 0;
    for (std::size_t idx : tx.payload)
      signal ^= detail::bit_content(demand_bits[idx].file, demand_bits[idx].bit_index);
    for (std::size_t idx : tx.payload) {
      const auto& target = demand_bits[idx];
      std::uint64_t residual = signal;
      for (std::size_t other : tx.payload) {
        if (other == idx) continue;
        const auto& o = demand_bits[other];
        if (!o.cover_set.contains(target.intended_user)) {
          fail(t, "decoder lacks a cached bit");
          break;
        }
        residual ^= detail::bit_content(o.file, o.bit_index);
      }
      if (!report.pass) break;
      if (residual != detail::bit_content(target.file, target.bit_index)) {
        fail(t, "decoded content mismatch");
        break;
      }
      recovered[idx] = true;
    }
  }

  for (std::size_t i = 0; i < demand_bits.size(); ++i)
    if (seen[i] == 0) report.undelivered.push_back(i);
  if (report.pass) {
    if (!report.undelivered.empty()) {
      report.pass = false;
      report.reason = "demand bits never delivered";
    } else if (!std::all_of(recovered.begin(), recovered.end(), [](bool r) { return r; })) {
      report.pass = false;
      report.reason = "decoder failed to recover every requested bit";
    }
  }
  return report;
}

/// "a_3" for file 0 bit 2 when at most 26 files exist, otherwise "f1_3".
inline std::string default_bit_label(const BitRecord& b, std::size_t n_files) {
  if (n_files <= 26)
    return std::string(1, static_cast<char>('a' + b.file)) + "_" + std::to_string(b.bit_index + 1);
  return "f" + std::to_string(b.file + 1) + "_" + std::to_string(b.bit_index + 1);
}

}  // namespace dcc
