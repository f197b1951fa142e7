#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "ctdgm/transactions.hpp"

namespace ctdgm {

// Per-datum ascending access sequence numbers (record indices).
class AccessIndex {
 public:
  static AccessIndex build(const Trace& trace);

  bool contains(BlockAddress a) const { return seq_.contains(a); }
  std::span<const std::uint64_t> sequence(BlockAddress a) const;
  std::size_t access_count(BlockAddress a) const { return sequence(a).size(); }
  std::size_t num_data() const noexcept { return seq_.size(); }

 private:
  std::unordered_map<BlockAddress, std::vector<std::uint64_t>> seq_;
};

enum class StrengthVariant { Directed, Symmetric };

// Average over x's accesses of the gap to the nearest access of y:
//   W(x,y) = sum_i min_j |seq_x[i] - seq_y[j]| / A_x
// Directed as written; Symmetric takes min(W(x,y), W(y,x)).
double relation_strength(const AccessIndex& index, BlockAddress x, BlockAddress y);
double relation_strength(const AccessIndex& index, BlockAddress x, BlockAddress y, StrengthVariant variant);

struct DataPair {
  BlockAddress x = 0;
  BlockAddress y = 0;
  friend bool operator==(const DataPair&, const DataPair&) = default;
};

// W for many pairs at once. The OpenMP version splits pairs across threads;
// the serial one is the reference it is tested against.
std::vector<double> relation_strengths(const AccessIndex& index, std::span<const DataPair> pairs,
                                       StrengthVariant variant = StrengthVariant::Directed);
std::vector<double> relation_strengths_serial(const AccessIndex& index, std::span<const DataPair> pairs,
                                              StrengthVariant variant = StrengthVariant::Directed);

// Unordered pairs (x < y) that share at least one transaction. Stops after
// max_pairs distinct pairs when max_pairs > 0.
std::vector<DataPair> cooccurring_pairs(std::span<const CacheTransaction> transactions, std::size_t max_pairs = 0);

// "Always accessed sequentially": x occurs at least min_occurrences times
// and every occurrence is immediately followed by the same y != x.
struct AdjacencyRule {
  std::size_t min_occurrences = 2;
};

struct RelatedPair {
  BlockAddress leader = 0;
  BlockAddress follower = 0;
  std::uint64_t distance = 0;  // |addr_leader - addr_follower|
};

std::vector<RelatedPair> related_pairs(const Trace& trace, const AdjacencyRule& rule = {});

struct HistogramBucket {
  std::uint64_t lo = 0;  // inclusive
  std::uint64_t hi = 0;  // exclusive; UINT64_MAX for the open last bucket
  std::size_t count = 0;
  double cdf = 0.0;
};

struct DistanceHistogram {
  std::vector<RelatedPair> pairs;
  std::vector<HistogramBucket> buckets;
  std::size_t total = 0;

  // Fraction of related pairs with distance <= d; nullopt with no pairs.
  std::optional<double> cdf_at(std::uint64_t d) const;
};

// Buckets are [e_i, e_{i+1}) over the given ascending edges plus an open
// tail, or power-of-two buckets [2^k, 2^{k+1}) when no edges are given.
DistanceHistogram related_pair_distance_histogram(const Trace& trace, const AdjacencyRule& rule = {},
                                                  std::span<const std::uint64_t> edges = {});

struct GapReportRow {
  double limit = 0.0;
  std::size_t pairs = 0;                // pairs with W < limit
  std::size_t equal = 0;                // ... and A_x == A_y
  std::optional<double> equal_fraction; // nullopt when pairs == 0
  std::map<std::uint64_t, std::size_t> gap_counts;  // |A_x - A_y| -> pairs
};

std::vector<GapReportRow> access_count_gap_report(const AccessIndex& index, std::span<const DataPair> candidates,
                                                  std::span<const double> limits,
                                                  StrengthVariant variant = StrengthVariant::Directed);

}  // namespace ctdgm
