#include "ctdgm/locality.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <unordered_set>

#include "ctdgm/error.hpp"

namespace ctdgm {

AccessIndex AccessIndex::build(const Trace& trace) {
  AccessIndex idx;
  for (std::size_t i = 0; i < trace.records.size(); ++i) idx.seq_[trace.records[i].block_address].push_back(i);
  return idx;
}

std::span<const std::uint64_t> AccessIndex::sequence(BlockAddress a) const {
  auto it = seq_.find(a);
  if (it == seq_.end()) throw DataError("unknown datum " + std::to_string(a));
  return it->second;
}

double relation_strength(const AccessIndex& index, BlockAddress x, BlockAddress y) {
  auto sx = index.sequence(x);
  auto sy = index.sequence(y);
  // Both lists ascend, so the nearest y for successive x only moves forward.
  std::uint64_t sum = 0;
  std::size_t j = 0;
  for (auto s : sx) {
    while (j + 1 < sy.size() && sy[j + 1] <= s) ++j;
    std::uint64_t best = s >= sy[j] ? s - sy[j] : sy[j] - s;
    if (j + 1 < sy.size()) best = std::min(best, sy[j + 1] - s);
    sum += best;
  }
  return static_cast<double>(sum) / static_cast<double>(sx.size());
}

double relation_strength(const AccessIndex& index, BlockAddress x, BlockAddress y, StrengthVariant variant) {
  const double w = relation_strength(index, x, y);
  if (variant == StrengthVariant::Directed) return w;
  return std::min(w, relation_strength(index, y, x));
}

std::vector<double> relation_strengths_serial(const AccessIndex& index, std::span<const DataPair> pairs,
                                              StrengthVariant variant) {
  std::vector<double> out(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) out[i] = relation_strength(index, pairs[i].x, pairs[i].y, variant);
  return out;
}

std::vector<double> relation_strengths(const AccessIndex& index, std::span<const DataPair> pairs,
                                       StrengthVariant variant) {
  for (const auto& p : pairs)
    if (!index.contains(p.x) || !index.contains(p.y))
      throw DataError("unknown datum in pair (" + std::to_string(p.x) + "," + std::to_string(p.y) + ")");
  std::vector<double> out(pairs.size());
  const auto n = static_cast<std::int64_t>(pairs.size());
#pragma omp parallel for schedule(dynamic, 256)
  for (std::int64_t i = 0; i < n; ++i) out[i] = relation_strength(index, pairs[i].x, pairs[i].y, variant);
  return out;
}

std::vector<DataPair> cooccurring_pairs(std::span<const CacheTransaction> transactions, std::size_t max_pairs) {
  std::vector<DataPair> out;
  std::vector<BlockAddress> members;
  struct PairHash {
    std::size_t operator()(const DataPair& p) const noexcept {
      return std::hash<std::uint64_t>{}(p.x * 0x9E3779B97F4A7C15ull ^ p.y);
    }
  };
  std::unordered_set<DataPair, PairHash> seen;
  for (const auto& t : transactions) {
    members.assign(t.members.begin(), t.members.end());
    std::sort(members.begin(), members.end());
    for (std::size_t i = 0; i < members.size(); ++i) {
      for (std::size_t k = i + 1; k < members.size(); ++k) {
        DataPair p{members[i], members[k]};
        if (seen.insert(p).second) {
          out.push_back(p);
          if (max_pairs && out.size() >= max_pairs) goto done;
        }
      }
    }
  }
done:
  std::sort(out.begin(), out.end(), [](const DataPair& a, const DataPair& b) {
    return a.x != b.x ? a.x < b.x : a.y < b.y;
  });
  return out;
}

std::vector<RelatedPair> related_pairs(const Trace& trace, const AdjacencyRule& rule) {
  struct State {
    std::size_t count = 0;
    BlockAddress follower = 0;
    bool consistent = true;
  };
  std::unordered_map<BlockAddress, State> states;
  const auto& recs = trace.records;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    auto& st = states[recs[i].block_address];
    if (!st.consistent) continue;
    if (i + 1 == recs.size() || recs[i + 1].block_address == recs[i].block_address) {
      st.consistent = false;
      continue;
    }
    const auto next = recs[i + 1].block_address;
    if (st.count == 0) {
      st.follower = next;
    } else if (st.follower != next) {
      st.consistent = false;
      continue;
    }
    ++st.count;
  }
  std::vector<RelatedPair> out;
  for (const auto& [addr, st] : states) {
    if (!st.consistent || st.count < std::max<std::size_t>(rule.min_occurrences, 1)) continue;
    out.push_back({addr, st.follower, addr > st.follower ? addr - st.follower : st.follower - addr});
  }
  std::sort(out.begin(), out.end(), [](const RelatedPair& a, const RelatedPair& b) { return a.leader < b.leader; });
  return out;
}

std::optional<double> DistanceHistogram::cdf_at(std::uint64_t d) const {
  if (total == 0) return std::nullopt;
  std::size_t n = 0;
  for (const auto& p : pairs) n += p.distance <= d;
  return static_cast<double>(n) / static_cast<double>(total);
}

DistanceHistogram related_pair_distance_histogram(const Trace& trace, const AdjacencyRule& rule,
                                                  std::span<const std::uint64_t> edges) {
  if (trace.empty()) throw EmptyTraceError("histogram needs a non-empty trace");
  if (!std::is_sorted(edges.begin(), edges.end()) || std::adjacent_find(edges.begin(), edges.end()) != edges.end())
    throw ConfigError("histogram edges must be strictly ascending");
  DistanceHistogram h;
  h.pairs = related_pairs(trace, rule);
  h.total = h.pairs.size();
  if (h.pairs.empty()) return h;

  constexpr auto kOpen = std::numeric_limits<std::uint64_t>::max();
  if (edges.empty()) {
    std::uint64_t max_d = 0;
    for (const auto& p : h.pairs) max_d = std::max(max_d, p.distance);
    const int top = max_d == 0 ? 0 : std::bit_width(max_d) - 1;
    h.buckets.push_back({0, 1, 0, 0.0});
    for (int k = 0; k <= top; ++k)
      h.buckets.push_back({1ull << k, k == 63 ? kOpen : (1ull << (k + 1)), 0, 0.0});
  } else {
    if (edges.front() > 0) h.buckets.push_back({0, edges.front(), 0, 0.0});
    for (std::size_t i = 0; i < edges.size(); ++i)
      h.buckets.push_back({edges[i], i + 1 < edges.size() ? edges[i + 1] : kOpen, 0, 0.0});
  }
  for (const auto& p : h.pairs) {
    auto it = std::upper_bound(h.buckets.begin(), h.buckets.end(), p.distance,
                               [](std::uint64_t d, const HistogramBucket& b) { return d < b.lo; });
    (--it)->count++;
  }
  std::size_t cum = 0;
  for (auto& b : h.buckets) {
    cum += b.count;
    b.cdf = static_cast<double>(cum) / static_cast<double>(h.total);
  }
  return h;
}

std::vector<GapReportRow> access_count_gap_report(const AccessIndex& index, std::span<const DataPair> candidates,
                                                  std::span<const double> limits, StrengthVariant variant) {
  if (limits.empty()) throw ConfigError("gap report needs at least one W limit");
  const auto w = relation_strengths(index, candidates, variant);
  std::vector<GapReportRow> rows;
  for (double limit : limits) {
    GapReportRow row;
    row.limit = limit;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (!(w[i] < limit)) continue;
      const auto ax = index.access_count(candidates[i].x);
      const auto ay = index.access_count(candidates[i].y);
      const std::uint64_t gap = ax > ay ? ax - ay : ay - ax;
      ++row.pairs;
      row.equal += gap == 0;
      ++row.gap_counts[gap];
    }
    if (row.pairs) row.equal_fraction = static_cast<double>(row.equal) / static_cast<double>(row.pairs);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace ctdgm
