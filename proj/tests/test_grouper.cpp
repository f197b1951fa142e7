#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "ctdgm/error.hpp"
#include "ctdgm/grouper.hpp"
#include "oracles.hpp"

using namespace ctdgm;

namespace {

// Chunks whose single member is 100 * id, so chunk ids and addresses sort
// the same way.
std::vector<Chunk> singleton_chunks(std::size_t n) {
  std::vector<Chunk> out(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    out[i].id = i;
    out[i].members = {100ull * i};
  }
  return out;
}

std::unordered_map<BlockAddress, std::uint32_t> lookup_of(const std::map<BlockAddress, std::uint32_t>& m) {
  return {m.begin(), m.end()};
}

std::vector<CacheTransaction> txns_of(const std::vector<std::vector<BlockAddress>>& sets) {
  std::vector<CacheTransaction> out;
  for (std::size_t j = 0; j < sets.size(); ++j) out.push_back({static_cast<std::uint32_t>(j), sets[j], false});
  return out;
}

std::set<std::set<std::uint32_t>> chunk_partition(const Grouping& g) {
  std::set<std::set<std::uint32_t>> out;
  for (const auto& grp : g.groups) out.insert({grp.chunks.begin(), grp.chunks.end()});
  return out;
}

std::set<std::set<std::uint32_t>> label_partition(const std::vector<std::uint32_t>& labels) {
  std::map<std::uint32_t, std::set<std::uint32_t>> by;
  for (std::uint32_t i = 0; i < labels.size(); ++i) by[labels[i]].insert(i);
  std::set<std::set<std::uint32_t>> out;
  for (auto& [k, v] : by) out.insert(v);
  return out;
}

}  // namespace

TEST_CASE("co-occurrence examples") {
  // Chunk A = {1,2}, B = {3}, C = {4}.
  const auto lk = lookup_of({{1, 0}, {2, 0}, {3, 1}, {4, 2}});
  auto r = count_cooccurrence(txns_of({{1, 3, 4}}), lk, 3);
  CHECK(r.get(0, 1) == 1);
  CHECK(r.get(0, 2) == 1);
  CHECK(r.get(1, 2) == 1);
  CHECK(r.get(2, 1) == 1);
  r = count_cooccurrence(txns_of({{1, 3}, {2, 3}}), lk, 3);
  CHECK(r.get(0, 1) == 2);
  CHECK(r.get(0, 2) == 0);
  CHECK(r.chunk_frequency()[0] == 2);
  r = count_cooccurrence(txns_of({{1, 2}}), lk, 3);
  CHECK(r.num_pairs() == 0);
  CHECK(r.chunk_frequency()[0] == 1);
  CHECK_THROWS_AS(count_cooccurrence(txns_of({{1, 99}}), lk, 3), DataError);
  CHECK_THROWS_AS(count_cooccurrence_serial(txns_of({{1, 99}}), lk, 3), DataError);
}

TEST_CASE("co-occurrence matches the oracle; parallel equals serial") {
  std::mt19937_64 rng(9);
  for (int iter = 0; iter < 100; ++iter) {
    const std::uint32_t nc = 1 + rng() % 15;
    std::map<BlockAddress, std::uint32_t> m;
    for (BlockAddress a = 0; a < 40; ++a) m[a] = static_cast<std::uint32_t>(rng() % nc);
    std::vector<std::vector<BlockAddress>> sets(1 + rng() % 30);
    std::vector<std::vector<std::uint32_t>> projected;
    for (auto& s : sets) {
      std::set<BlockAddress> u;
      for (int k = 0; k < 7; ++k) u.insert(rng() % 40);
      s.assign(u.begin(), u.end());
      std::vector<std::uint32_t> p;
      for (auto a : s) p.push_back(m[a]);
      projected.push_back(p);
    }
    const auto lk = lookup_of(m);
    const auto par = count_cooccurrence(txns_of(sets), lk, nc);
    const auto ser = count_cooccurrence_serial(txns_of(sets), lk, nc);
    CHECK(par == ser);
    const auto want = oracle::cooccurrence(projected);
    std::size_t seen = 0;
    par.for_each([&](std::uint32_t x, std::uint32_t y, std::uint32_t c) {
      CHECK(x < y);
      CHECK(want.at({x, y}) == c);
      ++seen;
    });
    CHECK(seen == want.size());
  }
}

TEST_CASE("legal relation filter and order") {
  // |V_0| = 10, |V_1| = 8, R(0,1) = 6.
  std::vector<std::vector<BlockAddress>> sets;
  for (int i = 0; i < 6; ++i) sets.push_back({0, 1});
  for (int i = 0; i < 4; ++i) sets.push_back({0});
  for (int i = 0; i < 2; ++i) sets.push_back({1});
  const auto lk = lookup_of({{0, 0}, {1, 1}});
  const auto counts = count_cooccurrence(txns_of(sets), lk, 2);
  CHECK(legal_relations(counts, 0.5).size() == 1);
  CHECK(legal_relations(counts, 0.6).size() == 1);  // 6 >= 6
  CHECK(legal_relations(counts, 0.61).empty());

  // R = 4 with the same frequencies is dropped at alpha 0.5.
  sets.clear();
  for (int i = 0; i < 4; ++i) sets.push_back({0, 1});
  for (int i = 0; i < 6; ++i) sets.push_back({0});
  for (int i = 0; i < 4; ++i) sets.push_back({1});
  CHECK(legal_relations(count_cooccurrence(txns_of(sets), lk, 2), 0.5).empty());
  CHECK(legal_relations(count_cooccurrence(txns_of(sets), lk, 2), 0.0).size() == 1);

  // Order: R descending, ties by (x, y).
  const auto lk4 = lookup_of({{0, 0}, {1, 1}, {2, 2}, {3, 3}});
  const auto c4 = count_cooccurrence(txns_of({{2, 3}, {2, 3}, {0, 1}, {0, 2}, {1, 3}}), lk4, 4);
  const auto desc = legal_relations(c4, 0.0);
  REQUIRE(desc.size() == 4);
  CHECK(desc[0] == Relation{2, 3, 2});
  CHECK(desc[1] == Relation{0, 1, 1});
  CHECK(desc[2] == Relation{0, 2, 1});
  CHECK(desc[3] == Relation{1, 3, 1});
  const auto asc = legal_relations(c4, 0.0, RelationOrder::Ascending);
  CHECK(asc.back() == Relation{2, 3, 2});
  CHECK(asc.front() == Relation{0, 1, 1});
}

TEST_CASE("merge examples") {
  const auto chunks = singleton_chunks(5);
  const std::vector<Relation> one{{0, 1, 1}};
  const auto g1 = merge_groups(one, chunks, 1.0);
  CHECK(g1.groups.size() == 4);
  CHECK(g1.group_of_chunk[0] == g1.group_of_chunk[1]);

  // Build groups {0,1} and {2,3,4}, then accumulate three cross edges.
  GroupState st(5, 0.5);
  CHECK(st.process({0, 1, 9}));
  CHECK(st.process({2, 3, 9}));
  CHECK(st.process({3, 4, 9}));  // 1 >= 2*1*0.5
  CHECK(st.group_size(2) == 3);
}

TEST_CASE("merge threshold on groups of two and three") {
  GroupState st(5, 0.5);
  REQUIRE(st.process({0, 1, 9}));
  REQUIRE(st.process({2, 3, 9}));
  REQUIRE(st.process({2, 4, 9}));  // {2,3} with {4}: 1 >= 2*1*0.5
  REQUIRE(st.group_size(4) == 3);
  CHECK_FALSE(st.process({0, 2, 1}));
  CHECK_FALSE(st.process({0, 3, 1}));
  CHECK(st.counter(1, 4) == 2);
  CHECK(st.process({1, 4, 1}));  // 3 >= 2*3*0.5
  CHECK(st.group_size(0) == 5);
  CHECK(st.merges().back().counter == 3);
  CHECK_FALSE(st.process({0, 4, 1}));
  CHECK(st.skipped_same_group() == 1);
}

TEST_CASE("mu = 1 needs a complete bipartite set of edges") {
  GroupState st(4, 1.0);
  REQUIRE(st.process({0, 1, 5}));
  REQUIRE(st.process({2, 3, 5}));
  CHECK_FALSE(st.process({1, 2, 1}));
  CHECK(st.group_of(0) != st.group_of(2));
  CHECK(st.counter(0, 3) == 1);
}

TEST_CASE("merge procedure matches the brute-force oracle") {
  std::mt19937_64 rng(31337);
  for (int iter = 0; iter < 500; ++iter) {
    const std::uint32_t n = 2 + rng() % 9;
    const std::size_t nr = rng() % 21;
    std::vector<Relation> rels;
    std::vector<oracle::Rel> orels;
    for (std::size_t k = 0; k < nr; ++k) {
      auto x = static_cast<std::uint32_t>(rng() % n);
      auto y = static_cast<std::uint32_t>(rng() % n);
      if (x == y) continue;
      if (x > y) std::swap(x, y);
      rels.push_back({x, y, static_cast<std::uint32_t>(1 + rng() % 5)});
    }
    std::stable_sort(rels.begin(), rels.end(), [](const Relation& a, const Relation& b) { return a.count > b.count; });
    for (const auto& r : rels) orels.push_back({r.x, r.y});
    const double mu = static_cast<double>(rng() % 11) / 10.0;

    const auto chunks = singleton_chunks(n);
    const auto g = merge_groups(rels, chunks, mu);
    const auto want = oracle::merge_groups(n, orels, mu);
    CHECK(chunk_partition(g) == label_partition(want));

    // Audit replay, conservation, and the partition invariant.
    CHECK(label_partition(replay_group_merges(n, g.merges, mu)) == label_partition(want));
    CHECK(g.processed == g.internalized + g.live_counter_total);
    std::set<BlockAddress> seen;
    std::size_t total = 0;
    for (const auto& grp : g.groups) {
      for (auto a : grp.members) seen.insert(a);
      total += grp.members.size();
      for (auto c : grp.chunks) CHECK(g.group_of_chunk[c] == grp.id);
    }
    CHECK(seen.size() == n);
    CHECK(total == n);
    for (const auto& m : g.merges)
      CHECK(static_cast<double>(m.counter) >= static_cast<double>(m.size_x) * static_cast<double>(m.size_y) * mu);

    // Determinism.
    const auto again = merge_groups(rels, chunks, mu);
    CHECK(again.group_of_chunk == g.group_of_chunk);
  }
}

TEST_CASE("conservation holds at every step") {
  std::mt19937_64 rng(4);
  for (int iter = 0; iter < 100; ++iter) {
    const std::uint32_t n = 2 + rng() % 20;
    GroupState st(n, static_cast<double>(rng() % 11) / 10.0);
    for (int k = 0; k < 60; ++k) {
      auto x = static_cast<std::uint32_t>(rng() % n);
      auto y = static_cast<std::uint32_t>(rng() % n);
      if (x == y) continue;
      st.process({std::min(x, y), std::max(x, y), 1});
      CHECK(st.processed() == st.internalized() + st.live_counter_total());
      CHECK(st.counter(x, x) == 0);
      CHECK(st.counter(x, y) == st.counter(y, x));
    }
  }
}

TEST_CASE("replay rejects a merge below threshold") {
  std::vector<GroupMerge> audit{{0, 1, 1, 1, 1}, {0, 2, 1, 2, 1}};
  CHECK_NOTHROW(replay_group_merges(3, audit, 0.5));
  CHECK_THROWS_AS(replay_group_merges(3, audit, 1.0), InvariantError);
  audit[1].size_x = 1;
  CHECK_THROWS_AS(replay_group_merges(3, audit, 0.5), InvariantError);
}

TEST_CASE("grouping report") {
  CHECK(grouping_report(Grouping{}).group_count == 0);
  CHECK(grouping_report(Grouping{}).size_histogram.empty());

  const auto chunks = singleton_chunks(4);
  const auto singles = merge_groups({}, chunks, 0.5);
  const auto rs = grouping_report(singles);
  CHECK(rs.group_count == 4);
  CHECK(rs.chunk_count == 4);
  for (const auto& d : rs.density) CHECK_FALSE(d.has_value());

  // Three chunks joined by two processed edges: density 2/3.
  const std::vector<Relation> rels{{0, 1, 3}, {1, 2, 2}};
  const auto g = merge_groups(rels, chunks, 0.5);
  const auto r = grouping_report(g);
  CHECK(r.group_count == 2);
  CHECK(r.size_histogram.at(3) == 1);
  CHECK(r.size_histogram.at(1) == 1);
  REQUIRE(r.density[0].has_value());
  CHECK(*r.density[0] == doctest::Approx(2.0 / 3.0));
}
