#include "ctdgm/cache_sim.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "ctdgm/error.hpp"

namespace ctdgm {

Policy parse_policy(std::string_view text) {
  if (text == "lru") return Policy::LRU;
  if (text == "fifo") return Policy::FIFO;
  if (text == "group-prefetch" || text == "prefetch") return Policy::GroupPrefetch;
  if (text == "group-merged" || text == "merged") return Policy::GroupMerged;
  throw ConfigError("policy must be lru|fifo|group-prefetch|group-merged, got '" + std::string(text) + "'");
}

std::string_view to_string(Policy p) {
  switch (p) {
    case Policy::LRU: return "lru";
    case Policy::FIFO: return "fifo";
    case Policy::GroupPrefetch: return "group-prefetch";
    case Policy::GroupMerged: return "group-merged";
  }
  return "lru";
}

std::vector<Policy> parse_policy_list(std::string_view text) {
  std::vector<Policy> out;
  for (const auto& p : split_list(text)) out.push_back(parse_policy(p));
  if (out.empty()) throw ConfigError("policy list is empty");
  return out;
}

WritePolicy parse_write_policy(std::string_view text) {
  if (text == "allocate") return WritePolicy::Allocate;
  if (text == "around") return WritePolicy::Around;
  throw ConfigError("write policy must be allocate|around, got '" + std::string(text) + "'");
}

std::string_view to_string(WritePolicy w) { return w == WritePolicy::Around ? "around" : "allocate"; }

SizeCatalog SizeCatalog::from_trace(const Trace& trace) {
  SizeCatalog c;
  c.add(trace);
  return c;
}

void SizeCatalog::add(const Trace& trace) {
  for (const auto& r : trace.records)
    if (size.emplace(r.block_address, r.size).second) total_bytes += r.size;
}

std::uint64_t SizeCatalog::size_of(BlockAddress a, std::uint64_t fallback) const {
  auto it = size.find(a);
  return it == size.end() ? fallback : it->second;
}

std::uint64_t SizeCatalog::smallest() const {
  std::uint64_t s = std::numeric_limits<std::uint64_t>::max();
  for (const auto& [a, v] : size) s = std::min(s, v);
  return size.empty() ? 0 : s;
}

PrefetchGroups PrefetchGroups::from_lists(std::vector<std::vector<BlockAddress>> lists) {
  PrefetchGroups pg;
  for (auto& l : lists) {
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
    if (l.size() < 2) continue;
    const auto id = static_cast<std::uint32_t>(pg.groups.size());
    for (auto a : l)
      if (!pg.group_of.emplace(a, id).second)
        throw DataError("block address " + std::to_string(a) + " appears in two groups");
    pg.groups.push_back(std::move(l));
  }
  return pg;
}

PrefetchGroups PrefetchGroups::from_grouping(const Grouping& grouping) {
  std::vector<std::vector<BlockAddress>> lists;
  lists.reserve(grouping.groups.size());
  for (const auto& g : grouping.groups) lists.push_back(g.members);
  return from_lists(std::move(lists));
}

std::uint64_t resolve_capacity(const SimConfig& cfg, const SizeCatalog& catalog) {
  if (cfg.capacity_fraction) {
    const double f = *cfg.capacity_fraction;
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("capacity fraction must be in (0,1], got " + std::to_string(f));
    return static_cast<std::uint64_t>(std::ceil(f * static_cast<double>(catalog.total_bytes)));
  }
  if (cfg.capacity_bytes == 0) throw ConfigError("cache capacity must be positive");
  return cfg.capacity_bytes;
}

namespace {

constexpr std::uint32_t kNil = std::numeric_limits<std::uint32_t>::max();

// Byte-capacity cache over dense datum ids with an intrusive recency list;
// head is the next victim.
class ByteCache {
 public:
  ByteCache(std::size_t n, std::uint64_t capacity)
      : capacity_(capacity), prev_(n, kNil), next_(n, kNil), size_(n, 0), resident_(n, 0) {}

  bool resident(std::uint32_t id) const { return resident_[id] != 0; }
  std::uint64_t occupied() const { return occupied_; }
  std::uint64_t capacity() const { return capacity_; }

  void touch(std::uint32_t id) {
    unlink(id);
    push_back(id);
  }

  void admit(std::uint32_t id, std::uint64_t size) {
    resident_[id] = 1;
    size_[id] = size;
    occupied_ += size;
    push_back(id);
  }

  std::uint64_t evict_to_fit() {
    std::uint64_t evicted = 0;
    while (occupied_ > capacity_ && head_ != kNil) {
      const auto victim = head_;
      unlink(victim);
      resident_[victim] = 0;
      occupied_ -= size_[victim];
      ++evicted;
    }
    return evicted;
  }

 private:
  void unlink(std::uint32_t id) {
    if (prev_[id] != kNil) next_[prev_[id]] = next_[id]; else head_ = next_[id];
    if (next_[id] != kNil) prev_[next_[id]] = prev_[id]; else tail_ = prev_[id];
    prev_[id] = next_[id] = kNil;
  }

  void push_back(std::uint32_t id) {
    prev_[id] = tail_;
    next_[id] = kNil;
    if (tail_ != kNil) next_[tail_] = id; else head_ = id;
    tail_ = id;
  }

  std::uint64_t capacity_;
  std::uint64_t occupied_ = 0;
  std::uint32_t head_ = kNil;
  std::uint32_t tail_ = kNil;
  std::vector<std::uint32_t> prev_;
  std::vector<std::uint32_t> next_;
  std::vector<std::uint64_t> size_;
  std::vector<std::uint8_t> resident_;
};

}  // namespace

SimMetrics simulate(const Trace& trace, const SimConfig& cfg) {
  const bool grouped = cfg.policy == Policy::GroupPrefetch || cfg.policy == Policy::GroupMerged;
  if (grouped && !cfg.groups) throw ConfigError(std::string(to_string(cfg.policy)) + " needs a grouping");

  SizeCatalog local;
  const SizeCatalog* catalog = cfg.catalog;
  if (!catalog) {
    local = SizeCatalog::from_trace(trace);
    catalog = &local;
  }

  SimMetrics m;
  m.policy = cfg.policy;
  m.capacity_fraction = cfg.capacity_fraction;
  m.capacity_bytes = resolve_capacity(cfg, *catalog);

  // Dense ids: trace data first, then group members not in the trace.
  std::unordered_map<BlockAddress, std::uint32_t> dense;
  std::vector<std::uint32_t> ids(trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i) {
    auto [it, fresh] = dense.emplace(trace.records[i].block_address, static_cast<std::uint32_t>(dense.size()));
    ids[i] = it->second;
  }
  std::vector<std::vector<std::uint32_t>> group_ids;
  std::vector<std::uint64_t> member_size;
  std::vector<std::uint32_t> group_of_id;
  if (grouped) {
    group_ids.resize(cfg.groups->groups.size());
    for (std::size_t g = 0; g < group_ids.size(); ++g)
      for (auto a : cfg.groups->groups[g])
        group_ids[g].push_back(dense.emplace(a, static_cast<std::uint32_t>(dense.size())).first->second);
    group_of_id.assign(dense.size(), kNil);
    member_size.assign(dense.size(), 0);
    for (std::size_t g = 0; g < group_ids.size(); ++g)
      for (std::size_t k = 0; k < group_ids[g].size(); ++k) {
        group_of_id[group_ids[g][k]] = static_cast<std::uint32_t>(g);
        member_size[group_ids[g][k]] = catalog->size_of(cfg.groups->groups[g][k], 4096);
      }
  }

  ByteCache cache(dense.size(), m.capacity_bytes);
  const bool recency = cfg.policy != Policy::FIFO;
  if (cfg.record_hits) m.hit_flags.assign(trace.size(), 0);

  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& r = trace.records[i];
    const auto id = ids[i];
    ++m.accesses;
    if (cache.resident(id)) {
      ++m.hits;
      if (cfg.record_hits) m.hit_flags[i] = 1;
      if (recency) cache.touch(id);
      continue;
    }
    ++m.misses;
    ++m.disk_ios;
    if (r.op == Op::Write && cfg.write_policy == WritePolicy::Around) continue;
    if (r.size > m.capacity_bytes) {
      ++m.bypasses;
      continue;
    }
    cache.admit(id, r.size);

    if (grouped && group_of_id[id] != kNil) {
      const auto& members = group_ids[group_of_id[id]];
      std::uint64_t needed = r.size;
      for (auto mid : members)
        if (mid != id && !cache.resident(mid)) needed += member_size[mid];
      if (needed > m.capacity_bytes) {
        ++m.bypasses;
      } else {
        if (cfg.policy == Policy::GroupMerged) ++m.group_fetches;
        for (auto mid : members) {
          if (mid == id || cache.resident(mid)) continue;
          cache.admit(mid, member_size[mid]);
          m.prefetched_bytes += member_size[mid];
          if (cfg.policy == Policy::GroupPrefetch) {
            ++m.disk_ios;
            ++m.prefetch_ios;
          }
        }
      }
    }
    m.evictions += cache.evict_to_fit();
    if (cfg.check_invariants && cache.occupied() > cache.capacity())
      throw InvariantError("cache occupancy exceeds capacity after access " + std::to_string(i));
  }
  if (cfg.check_invariants && m.hits + m.misses != m.accesses) throw InvariantError("hits + misses != accesses");
  return m;
}

namespace {
std::vector<SimConfig> sweep_configs(const SizeCatalog& catalog, const PrefetchGroups* groups,
                                     std::span<const double> fractions, std::span<const Policy> policies,
                                     WritePolicy write_policy) {
  std::vector<SimConfig> cfgs;
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("capacity fraction must be in (0,1], got " + std::to_string(f));
    for (auto p : policies) {
      SimConfig c;
      c.policy = p;
      c.capacity_fraction = f;
      c.groups = groups;
      c.catalog = &catalog;
      c.write_policy = write_policy;
      cfgs.push_back(c);
    }
  }
  return cfgs;
}
}  // namespace

std::vector<SimMetrics> sweep_serial(const Trace& trace, const SizeCatalog& catalog, const PrefetchGroups* groups,
                                     std::span<const double> fractions, std::span<const Policy> policies,
                                     WritePolicy write_policy) {
  std::vector<SimMetrics> out;
  for (const auto& c : sweep_configs(catalog, groups, fractions, policies, write_policy))
    out.push_back(simulate(trace, c));
  return out;
}

std::vector<SimMetrics> sweep(const Trace& trace, const SizeCatalog& catalog, const PrefetchGroups* groups,
                              std::span<const double> fractions, std::span<const Policy> policies,
                              WritePolicy write_policy) {
  const auto cfgs = sweep_configs(catalog, groups, fractions, policies, write_policy);
  std::vector<SimMetrics> out(cfgs.size());
  std::exception_ptr failure;
  const auto n = static_cast<std::int64_t>(cfgs.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      out[i] = simulate(trace, cfgs[i]);
    } catch (...) {
#pragma omp critical(ctdgm_sweep_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<double> window_rates(std::span<const std::uint8_t> hit_flags, std::size_t window) {
  if (window == 0) throw ConfigError("window must be at least 1");
  std::vector<double> out;
  for (std::size_t start = 0; start < hit_flags.size(); start += window) {
    const auto end = std::min(hit_flags.size(), start + window);
    std::size_t hits = 0;
    for (auto k = start; k < end; ++k) hits += hit_flags[k];
    out.push_back(static_cast<double>(hits) / static_cast<double>(end - start));
  }
  return out;
}

std::vector<double> rolling_hit_rate(const Trace& trace, SimConfig cfg, std::size_t window) {
  if (window == 0) throw ConfigError("window must be at least 1");
  cfg.record_hits = true;
  const auto m = simulate(trace, cfg);
  return window_rates(m.hit_flags, window);
}

void write_metrics_csv(std::ostream& out, std::span<const SimMetrics> rows) {
  out << "policy,capacity_fraction,capacity_bytes,accesses,hits,misses,hit_rate,disk_ios,prefetched_bytes,evictions\n";
  for (const auto& m : rows) {
    out << to_string(m.policy) << ',';
    if (m.capacity_fraction) out << *m.capacity_fraction; else out << "";
    out << ',' << m.capacity_bytes << ',' << m.accesses << ',' << m.hits << ',' << m.misses << ','
        << std::setprecision(6) << std::fixed << m.hit_rate() << std::defaultfloat << ',' << m.disk_ios << ','
        << m.prefetched_bytes << ',' << m.evictions << '\n';
  }
}

std::string metrics_json(std::span<const SimMetrics> rows) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& m : rows) {
    nlohmann::ordered_json j;
    j["policy"] = to_string(m.policy);
    j["capacity_fraction"] = m.capacity_fraction ? nlohmann::ordered_json(*m.capacity_fraction) : nlohmann::ordered_json();
    j["capacity_bytes"] = m.capacity_bytes;
    j["accesses"] = m.accesses;
    j["hits"] = m.hits;
    j["misses"] = m.misses;
    j["hit_rate"] = m.hit_rate();
    j["disk_ios"] = m.disk_ios;
    j["prefetched_bytes"] = m.prefetched_bytes;
    j["evictions"] = m.evictions;
    j["prefetch_ios"] = m.prefetch_ios;
    j["group_fetches"] = m.group_fetches;
    j["bypasses"] = m.bypasses;
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

void write_rolling_csv(std::ostream& out, std::span<const double> series) {
  out << "window_index,hit_rate\n";
  for (std::size_t i = 0; i < series.size(); ++i) out << i << ',' << series[i] << '\n';
}

}  // namespace ctdgm
