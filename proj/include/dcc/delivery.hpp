#pragma once

// XOR cooperative delivery schedulers. Each one maps the demand bits of a
// single trial to a TransmissionLog whose payload entries index into the
// demand-bit list it was given.
//
//   deliver_od        exact cooperative-set grouping with zero padding
//   deliver_sgd       set-centered greedy: superset covers, no padding
//   deliver_semi_sgd  set-centered greedy with padding to floor((min+max)/2)
//   deliver_bgd       bit-centered greedy merging by the fit |T_B ∩ T_C|
//   deliver_grouped   OD run separately inside each popularity group
//   deliver_uncoded   one slot per demand bit

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <queue>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dcc/allocation.hpp"
#include "dcc/model.hpp"

namespace dcc {

/// Upper limit on users for the schedulers that walk every user subset.
inline constexpr std::size_t kMaxSubsetWalkUsers = 32;

/// Visits every nonempty subset of {0..n-1} by cardinality descending and,
/// within one cardinality, lexicographically ascending over sorted members.
template <class Fn>
void for_each_subset_in_walk_order(std::size_t n_users, Fn&& fn) {
  std::vector<std::size_t> idx;
  for (std::size_t s = n_users; s >= 1; --s) {
    idx.resize(s);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    while (true) {
      std::uint64_t mask = 0;
      for (std::size_t i : idx) mask |= std::uint64_t{1} << i;
      fn(UserSet{mask});
      std::size_t pos = s;
      while (pos > 0 && idx[pos - 1] == n_users - s + pos - 1) --pos;
      if (pos == 0) break;
      ++idx[pos - 1];
      for (std::size_t j = pos; j < s; ++j) idx[j] = idx[j - 1] + 1;
    }
  }
}

namespace detail {

inline void check_records(std::span<const BitRecord> bits, std::size_t n_users) {
  if (n_users == 0 || n_users > kMaxUsers) throw ParameterError("n_users must lie in [1, 64]");
  for (const auto& b : bits) {
    if (b.intended_user >= n_users || !b.cover_set.fits_within(n_users))
      throw ParameterError("demand bit refers to a user outside the system");
    if (b.cover_set.contains(b.intended_user)) throw ParameterError("intended user lies in its own cover set");
  }
}

inline bool bit_order_less(const BitRecord& a, const BitRecord& b) {
  if (a.bit_index != b.bit_index) return a.bit_index < b.bit_index;
  return a.file < b.file;
}

// Original delivery over an arbitrary subset of records, whose cover sets may
// be narrowed (grouped delivery restricts them to the users of one group).
inline void od_into(std::span<const BitRecord> bits, std::span<const std::size_t> ids,
                    std::span<const UserSet> covers, std::vector<Transmission>& out) {
  struct Entry {
    UserSet coop;
    std::size_t user;
    std::size_t local;
  };
  std::vector<Entry> entries;
  entries.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& b = bits[ids[i]];
    entries.push_back({covers[i] | UserSet::single(b.intended_user), b.intended_user, i});
  }
  std::sort(entries.begin(), entries.end(), [&](const Entry& a, const Entry& b) {
    if (a.coop != b.coop) return walk_order_less(a.coop, b.coop);
    if (a.user != b.user) return a.user < b.user;
    return bit_order_less(bits[ids[a.local]], bits[ids[b.local]]);
  });

  // entries are now grouped by cooperative set, then by user
  std::size_t start = 0;
  std::vector<std::pair<std::size_t, std::size_t>> runs;  // per-user [begin, end)
  while (start < entries.size()) {
    std::size_t end = start;
    while (end < entries.size() && entries[end].coop == entries[start].coop) ++end;
    runs.clear();
    std::size_t longest = 0;
    for (std::size_t i = start; i < end;) {
      std::size_t j = i;
      while (j < end && entries[j].user == entries[i].user) ++j;
      runs.emplace_back(i, j);
      longest = std::max(longest, j - i);
      i = j;
    }
    const UserSet group = entries[start].coop;
    for (std::size_t slot = 0; slot < longest; ++slot) {
      Transmission tx;
      tx.group = group;
      for (auto [b, e] : runs)
        if (b + slot < e) tx.payload.push_back(ids[entries[b + slot].local]);
      tx.padded_zero_count = group.size() - tx.payload.size();
      out.push_back(std::move(tx));
    }
    start = end;
  }
}

// Untransmitted bits of one user, bucketed by exact cover set. Bits in a
// bucket are kept in (bit_index, file) order and consumed from the front.
class UserQueue {
 public:
  struct Bucket {
    UserSet cover;
    std::vector<std::size_t> ids;
    std::size_t front = 0;
    std::size_t remaining() const { return ids.size() - front; }
  };

  void add(UserSet cover, std::size_t id) {
    auto [it, fresh] = index_.try_emplace(cover.mask(), buckets_.size());
    if (fresh) buckets_.push_back(Bucket{cover, {}, 0});
    buckets_[it->second].ids.push_back(id);
  }
  template <class Less>
  void finalize(Less&& less) {
    for (auto& b : buckets_) std::sort(b.ids.begin(), b.ids.end(), less);
    index_.clear();
  }
  std::vector<Bucket>& buckets() { return buckets_; }
  const std::vector<Bucket>& buckets() const { return buckets_; }

  std::size_t count_covering(UserSet subset) const {
    std::size_t n = 0;
    for (const auto& b : buckets_)
      if (subset.subset_of(b.cover)) n += b.remaining();
    return n;
  }

 private:
  std::vector<Bucket> buckets_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

// For one user k: count of untransmitted bits whose cover contains A, for
// every A not containing k, stored densely over the other K-1 users.
class SupersetCounts {
 public:
  SupersetCounts(std::size_t n_users, std::size_t user, const UserQueue& queue)
      : user_(user), width_(n_users - 1), counts_(std::size_t{1} << width_, 0) {
    for (const auto& b : queue.buckets()) counts_[compress(b.cover)] += static_cast<std::int32_t>(b.remaining());
    for (std::size_t bit = 0; bit < width_; ++bit) {
      const std::size_t step = std::size_t{1} << bit;
      for (std::size_t a = 0; a < counts_.size(); ++a)
        if ((a & step) == 0) counts_[a] += counts_[a | step];
    }
  }

  std::size_t at(UserSet subset) const { return static_cast<std::size_t>(counts_[compress(subset)]); }

  void remove(UserSet cover, std::size_t how_many) {
    const std::size_t full = compress(cover);
    const auto delta = static_cast<std::int32_t>(how_many);
    for (std::size_t sub = full;; sub = (sub - 1) & full) {
      counts_[sub] -= delta;
      if (sub == 0) break;
    }
  }

 private:
  std::size_t compress(UserSet s) const {
    const std::uint64_t m = s.mask();
    const std::uint64_t low = (std::uint64_t{1} << user_) - 1;
    return static_cast<std::size_t>((m & low) | ((m >> 1) & ~low));
  }

  std::size_t user_;
  std::size_t width_;
  std::vector<std::int32_t> counts_;
};

/// Dense superset tables are used up to this many users.
inline constexpr std::size_t kDenseCountUsers = 20;

// Shared engine of SGD and Semi-SGD.
class SetGreedyEngine {
 public:
  SetGreedyEngine(std::span<const BitRecord> bits, std::size_t n_users, bool dense)
      : bits_(bits), queues_(n_users) {
    for (std::size_t i = 0; i < bits.size(); ++i) queues_[bits[i].intended_user].add(bits[i].cover_set, i);
    auto less = [&](std::size_t a, std::size_t b) {
      if (bit_order_less(bits_[a], bits_[b])) return true;
      if (bit_order_less(bits_[b], bits_[a])) return false;
      return a < b;
    };
    for (auto& q : queues_) q.finalize(less);
    if (dense) {
      counts_.reserve(n_users);
      for (std::size_t k = 0; k < n_users; ++k) counts_.emplace_back(n_users, k, queues_[k]);
    }
  }

  std::size_t remaining(std::size_t user, UserSet others) const {
    if (!counts_.empty()) return counts_[user].at(others);
    return queues_[user].count_covering(others);
  }

  // Removes and returns the first `count` untransmitted bits of `user` whose
  // cover contains `others`, in (bit_index, file) order.
  std::vector<std::size_t> take(std::size_t user, UserSet others, std::size_t count) {
    auto& buckets = queues_[user].buckets();
    using Head = std::pair<std::size_t, std::size_t>;  // (bit id, bucket)
    auto greater = [&](const Head& a, const Head& b) {
      if (bit_order_less(bits_[b.first], bits_[a.first])) return true;
      if (bit_order_less(bits_[a.first], bits_[b.first])) return false;
      return a.first > b.first;
    };
    std::priority_queue<Head, std::vector<Head>, decltype(greater)> heap(greater);
    for (std::size_t i = 0; i < buckets.size(); ++i) {
      const auto& b = buckets[i];
      if (b.remaining() > 0 && others.subset_of(b.cover)) heap.emplace(b.ids[b.front], i);
    }
    std::vector<std::size_t> taken;
    taken.reserve(count);
    while (taken.size() < count && !heap.empty()) {
      auto [id, bi] = heap.top();
      heap.pop();
      auto& b = buckets[bi];
      taken.push_back(id);
      ++b.front;
      if (!counts_.empty()) counts_[user].remove(b.cover, 1);
      if (b.remaining() > 0) heap.emplace(b.ids[b.front], bi);
    }
    return taken;
  }

 private:
  std::span<const BitRecord> bits_;
  std::vector<UserQueue> queues_;
  std::vector<SupersetCounts> counts_;
};

enum class SetRule { Minimum, MidRange };

inline TransmissionLog set_greedy(std::span<const BitRecord> bits, std::size_t n_users, std::size_t file_size_bits,
                                  SetRule rule, bool dense) {
  check_records(bits, n_users);
  if (n_users > kMaxSubsetWalkUsers) throw ParameterError("subset-walk schedulers support at most 32 users");
  TransmissionLog log;
  log.file_size_bits = file_size_bits;
  if (bits.empty()) return log;

  SetGreedyEngine engine(bits, n_users, dense);

  std::vector<std::size_t> counts(n_users);
  std::vector<std::vector<std::size_t>> chosen(n_users);
  for_each_subset_in_walk_order(n_users, [&](UserSet subset) {
    std::size_t lo = SIZE_MAX;
    std::size_t hi = 0;
    bool viable = true;
    subset.for_each([&](std::size_t k) {
      if (!viable) return;
      const std::size_t c = engine.remaining(k, subset.without(k));
      counts[k] = c;
      lo = std::min(lo, c);
      hi = std::max(hi, c);
      if (rule == SetRule::Minimum && c == 0) viable = false;
    });
    if (!viable) return;
    const std::size_t length = rule == SetRule::Minimum ? lo : (lo + hi) / 2;
    if (length == 0) return;

    subset.for_each([&](std::size_t k) { chosen[k] = engine.take(k, subset.without(k), length); });
    for (std::size_t slot = 0; slot < length; ++slot) {
      Transmission tx;
      tx.group = subset;
      subset.for_each([&](std::size_t k) {
        if (slot < chosen[k].size()) tx.payload.push_back(chosen[k][slot]);
      });
      tx.padded_zero_count = subset.size() - tx.payload.size();
      log.transmissions.push_back(std::move(tx));
    }
  });
  return log;
}

}  // namespace detail

/// Original delivery: for every user subset S (walk order) send
/// XOR_k V_{k,S\{k}}, where V holds the bits whose cooperative set is
/// exactly S, zero padded to the longest one.
inline TransmissionLog deliver_od(std::span<const BitRecord> bits, std::size_t n_users,
                                  std::size_t file_size_bits = 1) {
  detail::check_records(bits, n_users);
  TransmissionLog log;
  log.file_size_bits = file_size_bits;
  std::vector<std::size_t> ids(bits.size());
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  std::vector<UserSet> covers(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) covers[i] = bits[i].cover_set;
  detail::od_into(bits, ids, covers, log.transmissions);
  return log;
}

/// Set-centered greedy delivery: at subset S every member k contributes its
/// first l_S untransmitted bits covering S\{k}, l_S the minimum such count.
inline TransmissionLog deliver_sgd(std::span<const BitRecord> bits, std::size_t n_users,
                                   std::size_t file_size_bits = 1) {
  return detail::set_greedy(bits, n_users, file_size_bits, detail::SetRule::Minimum,
                            n_users <= detail::kDenseCountUsers);
}

/// Like SGD but l_S = floor((min + max) / 2), padding short members with zeros.
inline TransmissionLog deliver_semi_sgd(std::span<const BitRecord> bits, std::size_t n_users,
                                        std::size_t file_size_bits = 1) {
  return detail::set_greedy(bits, n_users, file_size_bits, detail::SetRule::MidRange,
                            n_users <= detail::kDenseCountUsers);
}

/// Demand bits combined into one multicast: payload B, intended users K_B
/// and the users T_B that still cache every member.
struct MergedBit {
  std::vector<std::size_t> bits;  // indices into the demand-bit list
  UserSet intended_users;
  UserSet cover_set;

  static MergedBit of(std::size_t index, const BitRecord& b) { return MergedBit{{index}, UserSet::single(b.intended_user), b.cover_set}; }

  /// c joins if every current member can cancel it and it can cancel them.
  bool can_absorb(const BitRecord& c) const {
    return cover_set.contains(c.intended_user) && intended_users.subset_of(c.cover_set);
  }
  /// |T_B ∩ T_c|, the users still available after absorbing c.
  std::size_t fit(const BitRecord& c) const { return (cover_set & c.cover_set).size(); }

  void absorb(std::size_t index, const BitRecord& c) {
    bits.push_back(index);
    intended_users.insert(c.intended_user);
    cover_set &= c.cover_set;
  }
};

/// Bit-centered greedy delivery. Bits are sorted by cooperative set (size
/// descending, then lexicographic, then user and bit index). Each visited bit
/// grows a merged bit (B; U; T) by repeatedly absorbing the last candidate c
/// with k_c in T and U within T_c that maximizes |T_c ∩ T|.
///
/// Payload order: the visited bit first, then the absorbed bits by intended user.
inline TransmissionLog deliver_bgd(std::span<const BitRecord> bits, std::size_t n_users,
                                   std::size_t file_size_bits = 1) {
  detail::check_records(bits, n_users);
  TransmissionLog log;
  log.file_size_bits = file_size_bits;
  const std::size_t n = bits.size();
  if (n == 0) return log;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = bits[a];
    const auto& y = bits[b];
    const UserSet sx = x.cooperative_set();
    const UserSet sy = y.cooperative_set();
    if (sx != sy) return walk_order_less(sx, sy);
    if (x.intended_user != y.intended_user) return x.intended_user < y.intended_user;
    if (x.bit_index != y.bit_index) return x.bit_index < y.bit_index;
    if (x.file != y.file) return x.file < y.file;
    return a < b;
  });

  // Per-user buckets of list positions with an identical cover set. The
  // visited bit is always the earliest remaining one of its bucket and every
  // absorbed bit the latest, so buckets shrink from both ends.
  struct Bucket {
    UserSet cover;
    std::vector<std::size_t> positions;
    std::size_t front = 0;
    std::size_t back = 0;  // one past the last remaining position
  };
  std::vector<std::vector<Bucket>> buckets(n_users);
  std::vector<std::pair<std::size_t, std::size_t>> home(n);  // position -> (user, bucket)
  {
    std::vector<std::unordered_map<std::uint64_t, std::size_t>> index(n_users);
    for (std::size_t pos = 0; pos < n; ++pos) {
      const auto& b = bits[order[pos]];
      auto& user_buckets = buckets[b.intended_user];
      auto [it, fresh] = index[b.intended_user].try_emplace(b.cover_set.mask(), user_buckets.size());
      if (fresh) user_buckets.push_back(Bucket{b.cover_set, {}, 0, 0});
      user_buckets[it->second].positions.push_back(pos);
      home[pos] = {b.intended_user, it->second};
    }
    for (auto& ub : buckets)
      for (auto& b : ub) b.back = b.positions.size();
  }
  // Live buckets per user, compacted as they empty.
  std::vector<std::vector<std::size_t>> live(n_users);
  for (std::size_t k = 0; k < n_users; ++k) {
    live[k].resize(buckets[k].size());
    std::iota(live[k].begin(), live[k].end(), std::size_t{0});
  }
  std::vector<bool> sent(n, false);

  for (std::size_t pos = 0; pos < n; ++pos) {
    if (sent[pos]) continue;
    const std::size_t head = order[pos];
    const auto [head_user, head_bucket] = home[pos];
    ++buckets[head_user][head_bucket].front;
    sent[pos] = true;

    MergedBit merged = MergedBit::of(head, bits[head]);

    while (!merged.cover_set.empty()) {
      bool found = false;
      std::size_t best_score = 0;
      std::size_t best_pos = 0;
      std::size_t best_user = 0;
      std::size_t best_bucket = 0;
      // candidates are the live buckets of users in T whose cover holds K_B
      merged.cover_set.for_each([&](std::size_t u) {
        auto& lv = live[u];
        for (std::size_t i = 0; i < lv.size();) {
          Bucket& b = buckets[u][lv[i]];
          if (b.front >= b.back) {
            lv[i] = lv.back();
            lv.pop_back();
            continue;
          }
          if (merged.intended_users.subset_of(b.cover)) {
            const std::size_t score = (b.cover & merged.cover_set).size();
            const std::size_t last = b.positions[b.back - 1];
            if (!found || score > best_score || (score == best_score && last > best_pos)) {
              found = true;
              best_score = score;
              best_pos = last;
              best_user = u;
              best_bucket = lv[i];
            }
          }
          ++i;
        }
      });
      if (!found) break;
      --buckets[best_user][best_bucket].back;
      sent[best_pos] = true;
      merged.absorb(order[best_pos], bits[order[best_pos]]);
    }

    std::sort(merged.bits.begin() + 1, merged.bits.end(),
              [&](std::size_t a, std::size_t b) { return bits[a].intended_user < bits[b].intended_user; });
    log.transmissions.push_back(Transmission{std::move(merged.bits), 0, merged.intended_users});
  }
  return log;
}

/// Grouped delivery: users are split by the popularity group of their
/// requested file, and OD runs inside each group with cover sets restricted
/// to that group's users. Logs are concatenated in group order.
inline TransmissionLog deliver_grouped(std::span<const BitRecord> bits, const Grouping& grouping,
                                       const RequestVector& requests, std::size_t n_users,
                                       std::size_t file_size_bits = 1) {
  detail::check_records(bits, n_users);
  if (requests.demands.size() != n_users) throw ParameterError("request vector length does not match n_users");
  std::size_t n_files = 0;
  for (const auto& g : grouping.groups) n_files += g.size();
  const auto group_of_file = grouping.group_of_file(n_files);

  std::vector<UserSet> members(grouping.size());
  for (std::size_t k = 0; k < n_users; ++k) {
    const std::size_t f = requests.demands[k];
    if (f >= n_files) throw ParameterError("requested file index out of range");
    members[group_of_file[f]].insert(k);
  }

  TransmissionLog log;
  log.file_size_bits = file_size_bits;
  std::vector<std::size_t> ids;
  std::vector<UserSet> covers;
  for (std::size_t l = 0; l < grouping.size(); ++l) {
    if (members[l].empty()) continue;
    ids.clear();
    covers.clear();
    for (std::size_t i = 0; i < bits.size(); ++i) {
      if (!members[l].contains(bits[i].intended_user)) continue;
      ids.push_back(i);
      covers.push_back(bits[i].cover_set & members[l]);
    }
    detail::od_into(bits, ids, covers, log.transmissions);
  }
  return log;
}

inline TransmissionLog deliver_uncoded(std::span<const BitRecord> bits, std::size_t file_size_bits = 1) {
  TransmissionLog log;
  log.file_size_bits = file_size_bits;
  log.transmissions.reserve(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i)
    log.transmissions.push_back(Transmission{{i}, 0, UserSet::single(bits[i].intended_user)});
  return log;
}

}  // namespace dcc
