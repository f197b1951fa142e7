#include "ctdgm/chunker.hpp"

#include <algorithm>
#include <numeric>
#include <queue>

#include "ctdgm/error.hpp"

namespace ctdgm {

void validate(const ChunkerConfig& cfg) {
  if (cfg.q == 0) throw ConfigError("q must be at least 1");
  if (!(cfg.p > 1.0)) throw ConfigError("p must be greater than 1, got " + std::to_string(cfg.p));
  validate_sigma(cfg.sigma);
}

std::uint32_t frequency_bin(std::size_t frequency, double p) {
  if (frequency == 0) throw DataError("frequency bin of a datum with frequency 0");
  const long double f = static_cast<long double>(frequency) * (1.0L + 1e-12L);
  std::uint32_t k = 0;
  for (long double v = p; v <= f; v *= p) ++k;
  return k;
}

AreaKey area_key(BlockAddress address, std::size_t frequency, const ChunkerConfig& cfg, std::uint64_t Q) {
  if (Q == 0) throw ConfigError("maximum block address Q must be positive");
  if (address > Q) throw ConfigError("block address " + std::to_string(address) + " exceeds Q=" + std::to_string(Q));
  const auto scaled = static_cast<unsigned __int128>(address) * cfg.q / Q;
  AreaKey key;
  key.addr_bin = std::min<std::uint64_t>(static_cast<std::uint64_t>(scaled), cfg.q - 1);
  key.freq_bin = frequency_bin(frequency, cfg.p);
  return key;
}

PreBlocking pre_block(std::span<const DatumFrequency> data, const ChunkerConfig& cfg, std::uint64_t Q) {
  validate(cfg);
  PreBlocking out;
  for (const auto& d : data) {
    if (d.frequency == 0) {
      ++out.excluded;
      continue;
    }
    out.areas[area_key(d.address, d.frequency, cfg, Q)].push_back(d.address);
  }
  for (auto& [key, v] : out.areas) std::sort(v.begin(), v.end());
  return out;
}

std::optional<std::uint32_t> ChunkSet::find(BlockAddress address) const {
  auto it = chunk_of.find(address);
  if (it == chunk_of.end()) return std::nullopt;
  return it->second;
}

namespace {

struct Candidate {
  std::size_t distance;
  BlockAddress lo;
  BlockAddress hi;
  std::uint32_t a;
  std::uint32_t b;
  std::uint32_t version_a;
  std::uint32_t version_b;

  // Min-heap order: smallest distance, then lexicographic (lo, hi).
  bool operator>(const Candidate& o) const {
    if (distance != o.distance) return distance > o.distance;
    if (lo != o.lo) return lo > o.lo;
    return hi > o.hi;
  }
};

class AreaClusterer {
 public:
  AreaClusterer(std::span<const BlockAddress> data, const CtfMatrix& ctf, double sigma, DistanceMetric metric)
      : sigma_(sigma), metric_(metric) {
    std::vector<BlockAddress> sorted(data.begin(), data.end());
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw DataError("duplicate datum in area");
    const auto n = sorted.size();
    feature_.resize(n);
    members_.resize(n);
    version_.assign(n, 0);
    alive_.assign(n, true);
    parent_.resize(n);
    std::iota(parent_.begin(), parent_.end(), 0u);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = ctf.find(sorted[i]);
      if (!row) throw DataError("no CTF row for block address " + std::to_string(sorted[i]));
      auto bits = ctf.row(*row);
      feature_[i].assign(bits.begin(), bits.end());
      members_[i] = {sorted[i]};
    }
    dimension_ = ctf.num_transactions();
    complete_ = metric == DistanceMetric::Euclidean;
  }

  AreaClustering run() {
    const auto n = static_cast<std::uint32_t>(feature_.size());
    if (complete_) {
      for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t j = i + 1; j < n; ++j) consider(i, j);
    } else {
      build_neighbours();
      for (std::uint32_t i = 0; i < n; ++i)
        for (auto j : neighbours_[i])
          if (i < j) consider(i, j);
    }

    AreaClustering out;
    while (!heap_.empty()) {
      const Candidate c = heap_.top();
      heap_.pop();
      if (!alive_[c.a] || !alive_[c.b] || version_[c.a] != c.version_a || version_[c.b] != c.version_b) continue;
      merge(c, out.merges);
    }

    std::vector<std::uint32_t> order;
    for (std::uint32_t i = 0; i < n; ++i)
      if (alive_[i]) order.push_back(i);
    std::sort(order.begin(), order.end(), [&](auto x, auto y) { return members_[x].front() < members_[y].front(); });
    for (auto i : order) {
      Chunk ch;
      ch.members = std::move(members_[i]);
      ch.feature = CtfVector{std::move(feature_[i]), dimension_};
      out.chunks.push_back(std::move(ch));
    }
    return out;
  }

 private:
  std::uint32_t find(std::uint32_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void consider(std::uint32_t i, std::uint32_t j) {
    const auto& fi = feature_[i];
    const auto& fj = feature_[j];
    const auto d = symmetric_difference_size(fi, fj);
    if (!strong_relation_counts(d, fi.size(), fj.size(), sigma_, metric_)) return;
    auto lo = members_[i].front();
    auto hi = members_[j].front();
    if (hi < lo) std::swap(lo, hi);
    heap_.push({d, lo, hi, i, j, version_[i], version_[j]});
  }

  void build_neighbours() {
    const auto n = feature_.size();
    std::vector<std::pair<std::uint32_t, std::uint32_t>> postings;  // (txn, local)
    for (std::uint32_t i = 0; i < n; ++i)
      for (auto t : feature_[i]) postings.emplace_back(t, i);
    std::sort(postings.begin(), postings.end());
    std::vector<std::uint64_t> pairs;
    for (std::size_t s = 0; s < postings.size();) {
      std::size_t e = s;
      while (e < postings.size() && postings[e].first == postings[s].first) ++e;
      for (std::size_t x = s; x < e; ++x)
        for (std::size_t y = x + 1; y < e; ++y)
          pairs.push_back(static_cast<std::uint64_t>(postings[x].second) << 32 | postings[y].second);
      s = e;
    }
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    neighbours_.assign(n, {});
    for (auto p : pairs) {
      const auto a = static_cast<std::uint32_t>(p >> 32);
      const auto b = static_cast<std::uint32_t>(p & 0xffffffffu);
      neighbours_[a].push_back(b);
      neighbours_[b].push_back(a);
    }
  }

  void merge(const Candidate& c, std::vector<ChunkMerge>& audit) {
    // Survivor keeps the smaller first member so names stay stable.
    std::uint32_t keep = c.a;
    std::uint32_t gone = c.b;
    if (members_[gone].front() < members_[keep].front()) std::swap(keep, gone);

    ChunkMerge m;
    m.left = members_[keep].front();
    m.right = members_[gone].front();
    m.distance = c.distance;
    m.pop_left = feature_[keep].size();
    m.pop_right = feature_[gone].size();
    m.threshold = static_cast<double>(m.pop_left + m.pop_right) / 2.0 * sigma_;
    audit.push_back(m);

    feature_[keep] = bitwise_or(feature_[keep], feature_[gone]);
    std::vector<BlockAddress> merged;
    merged.reserve(members_[keep].size() + members_[gone].size());
    std::merge(members_[keep].begin(), members_[keep].end(), members_[gone].begin(), members_[gone].end(),
               std::back_inserter(merged));
    members_[keep] = std::move(merged);
    std::vector<std::uint32_t>().swap(feature_[gone]);
    std::vector<BlockAddress>().swap(members_[gone]);
    alive_[gone] = false;
    parent_[gone] = keep;
    ++version_[keep];

    if (complete_) {
      const auto n = static_cast<std::uint32_t>(feature_.size());
      for (std::uint32_t o = 0; o < n; ++o)
        if (o != keep && alive_[o]) consider(keep, o);
      return;
    }
    std::vector<std::uint32_t> nb;
    nb.reserve(neighbours_[keep].size() + neighbours_[gone].size());
    for (auto x : neighbours_[keep]) nb.push_back(find(x));
    for (auto x : neighbours_[gone]) nb.push_back(find(x));
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    nb.erase(std::remove(nb.begin(), nb.end(), keep), nb.end());
    neighbours_[keep] = std::move(nb);
    std::vector<std::uint32_t>().swap(neighbours_[gone]);
    for (auto o : neighbours_[keep]) consider(keep, o);
  }

  double sigma_;
  DistanceMetric metric_;
  bool complete_ = false;
  std::uint32_t dimension_ = 0;
  std::vector<std::vector<std::uint32_t>> feature_;
  std::vector<std::vector<BlockAddress>> members_;
  std::vector<std::uint32_t> version_;
  std::vector<bool> alive_;
  std::vector<std::uint32_t> parent_;
  std::vector<std::vector<std::uint32_t>> neighbours_;
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> heap_;
};

std::vector<DatumFrequency> frequencies(const CtfMatrix& ctf) {
  std::vector<DatumFrequency> out;
  out.reserve(ctf.num_data());
  for (std::size_t i = 0; i < ctf.num_data(); ++i) out.push_back({ctf.addresses()[i], ctf.row(i).size()});
  return out;
}

ChunkSet assemble(std::vector<std::pair<AreaKey, AreaClustering>> per_area, std::size_t excluded) {
  ChunkSet set;
  set.excluded = excluded;
  for (auto& [key, clustering] : per_area) {
    for (auto& ch : clustering.chunks) {
      ch.id = static_cast<std::uint32_t>(set.chunks.size());
      ch.area = key;
      for (auto a : ch.members) set.chunk_of.emplace(a, ch.id);
      set.chunks.push_back(std::move(ch));
    }
    set.merges.insert(set.merges.end(), clustering.merges.begin(), clustering.merges.end());
  }
  return set;
}

std::vector<std::pair<AreaKey, AreaClustering>> area_slots(const PreBlocking& blocks) {
  std::vector<std::pair<AreaKey, AreaClustering>> slots;
  slots.reserve(blocks.areas.size());
  for (const auto& [key, data] : blocks.areas) slots.emplace_back(key, AreaClustering{});
  return slots;
}

}  // namespace

AreaClustering cluster_area(std::span<const BlockAddress> area_data, const CtfMatrix& ctf, double sigma,
                            DistanceMetric metric) {
  validate_sigma(sigma);
  return AreaClusterer(area_data, ctf, sigma, metric).run();
}

ChunkSet chunk_all_serial(const CtfMatrix& ctf, const ChunkerConfig& cfg, std::uint64_t Q) {
  const auto freqs = frequencies(ctf);
  const auto blocks = pre_block(freqs, cfg, Q);
  auto slots = area_slots(blocks);
  std::size_t k = 0;
  for (const auto& [key, data] : blocks.areas) slots[k++].second = cluster_area(data, ctf, cfg.sigma, cfg.metric);
  return assemble(std::move(slots), blocks.excluded);
}

ChunkSet chunk_all(const CtfMatrix& ctf, const ChunkerConfig& cfg, std::uint64_t Q) {
  const auto freqs = frequencies(ctf);
  const auto blocks = pre_block(freqs, cfg, Q);
  auto slots = area_slots(blocks);
  std::vector<const std::vector<BlockAddress>*> inputs;
  inputs.reserve(blocks.areas.size());
  for (const auto& [key, data] : blocks.areas) inputs.push_back(&data);

  const auto n = static_cast<std::int64_t>(inputs.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      slots[i].second = cluster_area(*inputs[i], ctf, cfg.sigma, cfg.metric);
    } catch (...) {
#pragma omp critical(ctdgm_chunk_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return assemble(std::move(slots), blocks.excluded);
}

std::vector<std::vector<BlockAddress>> replay_chunk_merges(std::span<const BlockAddress> data,
                                                           std::span<const ChunkMerge> merges,
                                                           const CtfMatrix& ctf, double sigma,
                                                           DistanceMetric metric) {
  struct Part {
    std::vector<BlockAddress> members;
    std::vector<std::uint32_t> feature;
  };
  std::map<BlockAddress, Part> parts;  // keyed by smallest member
  std::unordered_map<BlockAddress, BlockAddress> owner;
  for (auto a : data) {
    auto row = ctf.find(a);
    if (!row) throw InvariantError("replay: no CTF row for " + std::to_string(a));
    auto bits = ctf.row(*row);
    parts[a] = Part{{a}, {bits.begin(), bits.end()}};
    owner[a] = a;
  }
  for (const auto& m : merges) {
    auto l = parts.find(m.left);
    auto r = parts.find(m.right);
    if (l == parts.end() || r == parts.end() || m.left >= m.right)
      throw InvariantError("replay: merge names a chunk that does not exist (" + std::to_string(m.left) + "," +
                           std::to_string(m.right) + ")");
    const auto d = symmetric_difference_size(l->second.feature, r->second.feature);
    if (d != m.distance || l->second.feature.size() != m.pop_left || r->second.feature.size() != m.pop_right)
      throw InvariantError("replay: recorded distance/popcounts disagree with replayed features");
    if (!strong_relation_counts(d, m.pop_left, m.pop_right, sigma, metric))
      throw InvariantError("replay: merge violates the strong relation test");
    l->second.feature = bitwise_or(l->second.feature, r->second.feature);
    std::vector<BlockAddress> merged;
    std::merge(l->second.members.begin(), l->second.members.end(), r->second.members.begin(),
               r->second.members.end(), std::back_inserter(merged));
    l->second.members = std::move(merged);
    parts.erase(r);
  }
  std::vector<std::vector<BlockAddress>> out;
  for (auto& [key, p] : parts) out.push_back(std::move(p.members));
  return out;
}

}  // namespace ctdgm
