#include <doctest.h>

#include <algorithm>
#include <list>
#include <map>
#include <random>
#include <set>

#include "ctdgm/cache_sim.hpp"
#include "ctdgm/error.hpp"
#include "oracles.hpp"

using namespace ctdgm;

namespace {

Trace unit_trace(const std::vector<BlockAddress>& addrs, std::uint64_t size = 1) {
  Trace t;
  for (auto a : addrs) t.records.push_back({t.records.size(), a, size, Op::Read});
  return t;
}

SimConfig bytes_cfg(Policy p, std::uint64_t cap, const PrefetchGroups* g = nullptr) {
  SimConfig c;
  c.policy = p;
  c.capacity_bytes = cap;
  c.groups = g;
  c.check_invariants = true;
  return c;
}

// List-based reference for all four policies. Front of the list is the
// next victim.
struct RefResult {
  std::uint64_t hits = 0, disk_ios = 0;
};

RefResult ref_sim(const Trace& t, Policy policy, std::uint64_t cap, const std::vector<std::vector<BlockAddress>>& groups) {
  std::map<BlockAddress, std::uint64_t> first_size;
  for (const auto& r : t.records) first_size.emplace(r.block_address, r.size);
  std::list<std::pair<BlockAddress, std::uint64_t>> cache;
  std::uint64_t used = 0;
  RefResult out;
  auto find = [&](BlockAddress a) {
    return std::find_if(cache.begin(), cache.end(), [&](const auto& e) { return e.first == a; });
  };
  for (const auto& r : t.records) {
    auto it = find(r.block_address);
    if (it != cache.end()) {
      ++out.hits;
      if (policy != Policy::FIFO) cache.splice(cache.end(), cache, it);
      continue;
    }
    ++out.disk_ios;
    if (r.size > cap) continue;
    cache.emplace_back(r.block_address, r.size);
    used += r.size;
    if (policy == Policy::GroupPrefetch || policy == Policy::GroupMerged) {
      for (const auto& g : groups) {
        if (std::find(g.begin(), g.end(), r.block_address) == g.end()) continue;
        std::uint64_t need = r.size;
        std::vector<BlockAddress> missing;
        for (auto m : g)
          if (m != r.block_address && find(m) == cache.end()) {
            need += first_size.count(m) ? first_size[m] : 4096;
            missing.push_back(m);
          }
        if (need > cap) break;
        for (auto m : missing) {
          const auto s = first_size.count(m) ? first_size[m] : 4096;
          cache.emplace_back(m, s);
          used += s;
          if (policy == Policy::GroupPrefetch) ++out.disk_ios;
        }
      }
    }
    while (used > cap) {
      used -= cache.front().second;
      cache.pop_front();
    }
  }
  return out;
}

}  // namespace

TEST_CASE("LRU hand example") {
  const auto m = simulate(unit_trace({1, 2, 1, 3, 1}), bytes_cfg(Policy::LRU, 2));
  CHECK(m.hits == 2);
  CHECK(m.misses == 3);
  CHECK(m.disk_ios == 3);
  // FIFO evicts 1 when 3 arrives, so the last access misses.
  const auto f = simulate(unit_trace({1, 2, 1, 3, 1}), bytes_cfg(Policy::FIFO, 2));
  CHECK(f.hits == 1);
}

TEST_CASE("merged group fetch") {
  const auto g = PrefetchGroups::from_lists({{1, 2}});
  const auto m = simulate(unit_trace({1, 2}), bytes_cfg(Policy::GroupMerged, 2, &g));
  CHECK(m.hit_rate() == doctest::Approx(0.5));
  CHECK(m.disk_ios == 1);
  CHECK(m.group_fetches == 1);
  const auto p = simulate(unit_trace({1, 2}), bytes_cfg(Policy::GroupPrefetch, 2, &g));
  CHECK(p.hits == 1);
  CHECK(p.disk_ios == 2);
  CHECK(p.prefetch_ios == 1);
  CHECK(p.prefetched_bytes == 1);
}

TEST_CASE("oversized group is bypassed and the demanded datum still admitted") {
  const auto g = PrefetchGroups::from_lists({{1, 2, 3}});
  const auto m = simulate(unit_trace({1, 1, 2}), bytes_cfg(Policy::GroupMerged, 2, &g));
  CHECK(m.bypasses == 2);
  CHECK(m.hits == 1);
  CHECK(m.group_fetches == 0);
  // A datum larger than the cache is never admitted.
  const auto big = simulate(unit_trace({7, 7}, 10), bytes_cfg(Policy::LRU, 5));
  CHECK(big.hits == 0);
  CHECK(big.bypasses == 2);
}

TEST_CASE("capacity resolution and validation") {
  const auto t = unit_trace({1, 2, 3, 1}, 100);
  const auto cat = SizeCatalog::from_trace(t);
  CHECK(cat.total_bytes == 300);
  SimConfig c;
  c.capacity_fraction = 0.5;
  CHECK(resolve_capacity(c, cat) == 150);
  c.capacity_fraction = 0.001;
  CHECK(resolve_capacity(c, cat) == 1);
  c.capacity_fraction = 0.0;
  CHECK_THROWS_AS(resolve_capacity(c, cat), ConfigError);
  c.capacity_fraction = 1.5;
  CHECK_THROWS_AS(resolve_capacity(c, cat), ConfigError);
  CHECK_THROWS_AS(simulate(t, bytes_cfg(Policy::LRU, 0)), ConfigError);
  CHECK_THROWS_AS(simulate(t, bytes_cfg(Policy::GroupMerged, 10)), ConfigError);
  CHECK_THROWS_AS(PrefetchGroups::from_lists({{1, 2}, {2, 3}}), DataError);
}

TEST_CASE("infinite cache has only cold misses under every policy") {
  std::mt19937_64 rng(3);
  std::vector<BlockAddress> a;
  for (int i = 0; i < 500; ++i) a.push_back(rng() % 60);
  const auto t = unit_trace(a, 512);
  const auto distinct = std::set<BlockAddress>(a.begin(), a.end()).size();
  const auto g = PrefetchGroups::from_lists({{0, 1, 2}, {10, 11}, {20, 30, 40, 50}});
  for (auto p : {Policy::LRU, Policy::FIFO, Policy::GroupPrefetch, Policy::GroupMerged}) {
    SimConfig c = bytes_cfg(p, 0, &g);
    c.capacity_fraction = 1.0;
    const auto m = simulate(t, c);
    CHECK(m.hits + m.misses == m.accesses);
    CHECK(m.misses <= distinct);
    if (p == Policy::LRU || p == Policy::FIFO) CHECK(m.misses == distinct);
  }
}

TEST_CASE("capacity below the smallest datum gives no hits") {
  const auto t = unit_trace({1, 1, 2, 2}, 4096);
  const auto cat = SizeCatalog::from_trace(t);
  const std::vector<double> fr{0.1};
  const std::vector<Policy> pol{Policy::LRU, Policy::FIFO};
  for (const auto& m : sweep(t, cat, nullptr, fr, pol)) CHECK(m.hits == 0);
}

TEST_CASE("simulator matches the reference on random traces") {
  std::mt19937_64 rng(12);
  for (int iter = 0; iter < 300; ++iter) {
    Trace t;
    const auto nd = 2 + rng() % 25;
    std::map<BlockAddress, std::uint64_t> sz;
    for (int i = 0; i < 150; ++i) {
      const BlockAddress a = rng() % nd;
      const auto s = sz.emplace(a, 1 + rng() % 8).first->second;
      t.records.push_back({t.records.size(), a, s, Op::Read});
    }
    std::vector<std::vector<BlockAddress>> lists;
    std::vector<BlockAddress> perm(nd);
    for (BlockAddress i = 0; i < nd; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i + 1 < perm.size();) {
      const auto end = std::min(perm.size(), i + 2 + rng() % 3);
      std::vector<BlockAddress> g(perm.begin() + static_cast<std::ptrdiff_t>(i), perm.begin() + static_cast<std::ptrdiff_t>(end));
      std::sort(g.begin(), g.end());
      lists.push_back(g);
      i = end;
    }
    const auto groups = PrefetchGroups::from_lists(lists);
    const std::uint64_t cap = 1 + rng() % 40;

    std::vector<oracle::Access> acc;
    for (const auto& r : t.records) acc.push_back({r.block_address, r.size});
    CHECK(simulate(t, bytes_cfg(Policy::LRU, cap)).hits == oracle::lru_hits(acc, cap));

    for (auto p : {Policy::LRU, Policy::FIFO, Policy::GroupPrefetch, Policy::GroupMerged}) {
      const auto m = simulate(t, bytes_cfg(p, cap, &groups));
      const auto want = ref_sim(t, p, cap, groups.groups);
      CHECK(m.hits == want.hits);
      CHECK(m.disk_ios == want.disk_ios);
      CHECK(m.hits + m.misses == m.accesses);
      if (p == Policy::LRU || p == Policy::FIFO) CHECK(m.disk_ios == m.misses);
      if (p == Policy::GroupPrefetch) CHECK(m.disk_ios == m.misses + m.prefetch_ios);
    }
  }
}

TEST_CASE("merged fetch never costs more I/O than LRU misses under full grouping") {
  std::mt19937_64 rng(99);
  for (int iter = 0; iter < 100; ++iter) {
    // Data 0..39 in groups of four that are always accessed as a run.
    std::vector<BlockAddress> a;
    for (int k = 0; k < 100; ++k) {
      const BlockAddress g = rng() % 10;
      for (BlockAddress j = 0; j < 4; ++j) a.push_back(4 * g + j);
    }
    std::vector<std::vector<BlockAddress>> lists;
    for (BlockAddress g = 0; g < 10; ++g) lists.push_back({4 * g, 4 * g + 1, 4 * g + 2, 4 * g + 3});
    const auto groups = PrefetchGroups::from_lists(lists);
    const auto t = unit_trace(a);
    const std::uint64_t cap = 4 + rng() % 30;
    const auto lru = simulate(t, bytes_cfg(Policy::LRU, cap));
    const auto merged = simulate(t, bytes_cfg(Policy::GroupMerged, cap, &groups));
    CHECK(merged.disk_ios <= lru.misses);
  }
}

TEST_CASE("write-around sends write misses to disk without admission") {
  Trace t = unit_trace({1, 1});
  t.records[0].op = Op::Write;
  auto c = bytes_cfg(Policy::LRU, 10);
  c.write_policy = WritePolicy::Around;
  CHECK(simulate(t, c).hits == 0);
  c.write_policy = WritePolicy::Allocate;
  CHECK(simulate(t, c).hits == 1);
}

TEST_CASE("sweep shape, order and determinism") {
  std::mt19937_64 rng(1);
  std::vector<BlockAddress> a;
  for (int i = 0; i < 2000; ++i) a.push_back(rng() % 300);
  const auto t = unit_trace(a, 4096);
  const auto cat = SizeCatalog::from_trace(t);
  const auto g = PrefetchGroups::from_lists({{1, 2, 3}, {4, 5}});
  const std::vector<double> one{0.5};
  const std::vector<Policy> two{Policy::LRU, Policy::GroupMerged};
  CHECK(sweep(t, cat, &g, one, two).size() == 2);

  const std::vector<double> fr{0.01, 0.1, 0.5};
  const std::vector<Policy> all{Policy::LRU, Policy::FIFO, Policy::GroupPrefetch, Policy::GroupMerged};
  const auto p1 = sweep(t, cat, &g, fr, all);
  const auto p2 = sweep(t, cat, &g, fr, all);
  const auto s = sweep_serial(t, cat, &g, fr, all);
  REQUIRE(p1.size() == 12);
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK(p1[i].policy == all[i % 4]);
    CHECK(*p1[i].capacity_fraction == fr[i / 4]);
    CHECK(p1[i].hits == p2[i].hits);
    CHECK(p1[i].hits == s[i].hits);
    CHECK(p1[i].disk_ios == s[i].disk_ios);
    CHECK(p1[i].evictions == s[i].evictions);
  }
  const std::vector<double> bad{0.0};
  CHECK_THROWS_AS(sweep(t, cat, &g, bad, all), ConfigError);
}

TEST_CASE("rolling hit rate") {
  auto c = bytes_cfg(Policy::LRU, 10);
  // After the first access every access hits.
  const auto warm = rolling_hit_rate(unit_trace({1, 1, 1, 1, 1}), c, 2);
  CHECK(warm == std::vector<double>{0.5, 1.0, 1.0});
  const std::vector<std::uint8_t> alt{1, 0, 1, 0, 1, 0};
  CHECK(window_rates(alt, 2) == std::vector<double>{0.5, 0.5, 0.5});
  const std::vector<std::uint8_t> ones{1, 1, 1};
  CHECK(window_rates(ones, 1) == std::vector<double>{1.0, 1.0, 1.0});
  const auto t = unit_trace({1, 2, 1, 3, 1, 2});
  const auto whole = rolling_hit_rate(t, bytes_cfg(Policy::LRU, 2), t.size());
  REQUIRE(whole.size() == 1);
  CHECK(whole[0] == doctest::Approx(simulate(t, bytes_cfg(Policy::LRU, 2)).hit_rate()));
  CHECK_THROWS_AS(window_rates(alt, 0), ConfigError);
}
