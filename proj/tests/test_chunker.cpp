#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "ctdgm/chunker.hpp"
#include "ctdgm/error.hpp"
#include "oracles.hpp"

using namespace ctdgm;

namespace {

std::vector<CacheTransaction> txns_of(const std::vector<std::vector<BlockAddress>>& sets) {
  std::vector<CacheTransaction> out;
  for (std::size_t j = 0; j < sets.size(); ++j) out.push_back({static_cast<std::uint32_t>(j), sets[j], false});
  return out;
}

std::vector<std::set<BlockAddress>> partition_of(const std::vector<Chunk>& chunks) {
  std::vector<std::set<BlockAddress>> out;
  for (const auto& c : chunks) out.emplace_back(c.members.begin(), c.members.end());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("area keys") {
  ChunkerConfig cfg;
  cfg.q = 10;
  cfg.p = 3.0;
  CHECK(area_key(250, 9, cfg, 1000) == AreaKey{2, 2});
  CHECK(frequency_bin(1, 1.0001) == 0);
  CHECK(frequency_bin(1, 50.0) == 0);
  CHECK(frequency_bin(8, 3.0) == 1);
  CHECK(frequency_bin(27, 3.0) == 3);
  CHECK(frequency_bin(1024, 2.0) == 10);
  CHECK(frequency_bin(1023, 2.0) == 9);
  cfg.q = 2;
  CHECK(area_key(0, 4, cfg, 1000).addr_bin != area_key(999, 4, cfg, 1000).addr_bin);
  // Huge addresses do not overflow the bin computation.
  cfg.q = 64;
  CHECK(area_key(~0ull - 1, 1, cfg, ~0ull).addr_bin == 63);
  CHECK_THROWS_AS(area_key(5, 0, cfg, 1000), DataError);
  CHECK(area_key(1000, 1, cfg, 1000).addr_bin == 63);
  CHECK_THROWS_AS(area_key(1001, 1, cfg, 1000), ConfigError);
}

TEST_CASE("frequency bins agree with the logarithm") {
  for (double p : {1.5, 2.0, 3.0, 10.0}) {
    for (std::size_t f = 1; f < 5000; f += 7) {
      const double l = std::log(static_cast<double>(f)) / std::log(p);
      const auto b = frequency_bin(f, p);
      // Allow the float log to sit a hair off an exact power.
      CHECK(std::abs(static_cast<double>(b) - std::floor(l + 1e-12)) <= 1.0);
      CHECK(std::pow(p, b) <= static_cast<double>(f) * (1 + 1e-12));
      CHECK(std::pow(p, b + 1) > static_cast<double>(f) * (1 - 1e-12));
    }
  }
}

TEST_CASE("config validation") {
  ChunkerConfig c;
  c.q = 0;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = {};
  c.p = 1.0;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = {};
  c.sigma = 1.5;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = {};
  CHECK_NOTHROW(validate(c));
}

TEST_CASE("pre-blocking partitions data and counts zero-frequency data") {
  ChunkerConfig cfg;
  cfg.q = 4;
  const std::vector<DatumFrequency> data{{10, 1}, {20, 3}, {30, 0}, {600, 1}, {610, 1}};
  const auto pb = pre_block(data, cfg, 1000);
  CHECK(pb.excluded == 1);
  std::size_t total = 0;
  for (const auto& [k, v] : pb.areas) {
    total += v.size();
    CHECK(std::is_sorted(v.begin(), v.end()));
  }
  CHECK(total == 4);
  CHECK(pb.areas.at(AreaKey{2, 0}) == std::vector<BlockAddress>{600, 610});
}

TEST_CASE("cluster examples") {
  const auto ctf = build_ctf(txns_of({{1, 2, 3}, {1, 2, 3}, {4}, {5}}));
  const std::vector<BlockAddress> same{1, 2};
  CHECK(cluster_area(same, ctf, 0.0).chunks.size() == 1);
  const std::vector<BlockAddress> three{1, 2, 3};
  const auto c3 = cluster_area(three, ctf, 0.0);
  REQUIRE(c3.chunks.size() == 1);
  CHECK(c3.chunks[0].members.size() == 3);
  CHECK(c3.merges.size() == 2);
  const std::vector<BlockAddress> disjoint{4, 5};
  CHECK(cluster_area(disjoint, ctf, 0.5).chunks.size() == 2);
  CHECK(cluster_area(disjoint, ctf, 1.0, DistanceMetric::SymmetricDifference).chunks.size() == 2);
}

TEST_CASE("chunk feature is the OR of member rows") {
  // 1: {0,1}, 2: {0,1,2}. d=1 <= (2+3)/2*0.5 = 1.25.
  const auto ctf = build_ctf(txns_of({{1, 2}, {1, 2}, {2}}));
  const std::vector<BlockAddress> area{1, 2};
  const auto r = cluster_area(area, ctf, 0.5);
  REQUIRE(r.chunks.size() == 1);
  CHECK(r.chunks[0].feature.bits == std::vector<std::uint32_t>{0, 1, 2});
  REQUIRE(r.merges.size() == 1);
  CHECK(r.merges[0].distance == 1);
  CHECK(r.merges[0].threshold == doctest::Approx(1.25));
}

TEST_CASE("chunk_all edge cases") {
  ChunkerConfig cfg;
  const auto empty = chunk_all(CtfMatrix{}, cfg, 1);
  CHECK(empty.chunks.empty());
  CHECK(empty.chunk_of.empty());

  // Every datum in its own area: singletons even with identical rows.
  cfg.q = 4;
  cfg.sigma = 1.0;
  const auto ctf = build_ctf(txns_of({{0, 300, 600, 900}}));
  const auto cs = chunk_all(ctf, cfg, 1000);
  CHECK(cs.chunks.size() == 4);
  for (const auto& c : cs.chunks) CHECK(c.members.size() == 1);
}

TEST_CASE("planted co-access pairs share chunks at sigma 1") {
  // Pairs (2k, 2k+1) always appear together; distinct pairs never do.
  std::vector<std::vector<BlockAddress>> sets;
  for (BlockAddress k = 0; k < 20; ++k)
    for (int r = 0; r < 3; ++r) sets.push_back({2 * k, 2 * k + 1});
  const auto ctf = build_ctf(txns_of(sets));
  ChunkerConfig cfg;
  cfg.q = 1;
  cfg.sigma = 1.0;
  const auto cs = chunk_all(ctf, cfg, 100);
  for (BlockAddress k = 0; k < 20; ++k) CHECK(cs.chunk_of.at(2 * k) == cs.chunk_of.at(2 * k + 1));
  // Brute-force pairwise check: only planted partners satisfy the predicate.
  for (BlockAddress a = 0; a < 40; ++a)
    for (BlockAddress b = a + 1; b < 40; ++b)
      CHECK(strong_relation(ctf.vector_of(a), ctf.vector_of(b), 1.0) == (b == a + 1 && a % 2 == 0));
}

TEST_CASE("greedy clustering matches the brute-force oracle") {
  std::mt19937_64 rng(2024);
  for (int iter = 0; iter < 400; ++iter) {
    const std::size_t nt = 2 + rng() % 10;
    const std::size_t nd = 2 + rng() % 12;
    std::vector<std::vector<BlockAddress>> sets(nt);
    for (BlockAddress a = 0; a < nd; ++a)
      for (std::size_t j = 0; j < nt; ++j)
        if (rng() % 3 == 0) sets[j].push_back(a * 8);
    for (std::size_t j = 0; j < nt; ++j)
      if (sets[j].empty()) sets[j].push_back((rng() % nd) * 8);
    const auto ctf = build_ctf(txns_of(sets));
    const double sigma = static_cast<double>(rng() % 11) / 10.0;

    std::map<oracle::Addr, std::set<std::uint32_t>> rows;
    for (std::size_t i = 0; i < ctf.num_data(); ++i) {
      const auto r = ctf.row(i);
      rows[ctf.addresses()[i]] = std::set<std::uint32_t>(r.begin(), r.end());
    }
    const auto want = oracle::greedy_cluster(rows, sigma);
    const std::vector<BlockAddress> area(ctf.addresses().begin(), ctf.addresses().end());
    const auto got = cluster_area(area, ctf, sigma);
    CHECK(partition_of(got.chunks) == want);

    // Audit replay reproduces the partition and every merge passed the test.
    const auto replay = replay_chunk_merges(area, got.merges, ctf, sigma);
    std::vector<std::set<BlockAddress>> rp;
    for (const auto& p : replay) rp.emplace_back(p.begin(), p.end());
    std::sort(rp.begin(), rp.end());
    CHECK(rp == want);
    for (const auto& m : got.merges) CHECK(static_cast<double>(m.distance) <= m.threshold);
  }
}

TEST_CASE("chunk_all invariants and parallel equals serial") {
  std::mt19937_64 rng(77);
  for (int iter = 0; iter < 50; ++iter) {
    std::vector<std::vector<BlockAddress>> sets(30);
    for (auto& s : sets) {
      std::set<BlockAddress> m;
      const auto base = (rng() % 50) * 4096;
      for (int k = 0; k < 6; ++k) m.insert(base + (rng() % 8) * 4096);
      s.assign(m.begin(), m.end());
    }
    const auto ctf = build_ctf(txns_of(sets));
    ChunkerConfig cfg;
    cfg.q = 1 + rng() % 8;
    cfg.p = 1.5 + static_cast<double>(rng() % 3);
    cfg.sigma = static_cast<double>(rng() % 11) / 10.0;
    const std::uint64_t Q = 60 * 4096;
    const auto par = chunk_all(ctf, cfg, Q);
    const auto ser = chunk_all_serial(ctf, cfg, Q);
    REQUIRE(par.chunks.size() == ser.chunks.size());
    std::size_t members = 0;
    for (std::size_t i = 0; i < par.chunks.size(); ++i) {
      const auto& c = par.chunks[i];
      CHECK(c.id == i);
      CHECK(c.members == ser.chunks[i].members);
      CHECK(c.feature == ser.chunks[i].feature);
      CHECK_FALSE(c.members.empty());
      std::set<std::uint32_t> or_bits;
      for (auto a : c.members) {
        CHECK(par.chunk_of.at(a) == i);
        CHECK(area_key(a, ctf.vector_of(a).bits.size(), cfg, Q) == c.area);
        for (auto b : ctf.vector_of(a).bits) or_bits.insert(b);
      }
      CHECK(std::vector<std::uint32_t>(or_bits.begin(), or_bits.end()) == c.feature.bits);
      members += c.members.size();
    }
    CHECK(members == ctf.num_data());
    CHECK(par.chunk_of.size() == ctf.num_data());
  }
}

TEST_CASE("replay rejects a tampered audit") {
  const auto ctf = build_ctf(txns_of({{1, 2}, {1, 2}, {3}}));
  const std::vector<BlockAddress> area{1, 2, 3};
  auto r = cluster_area(area, ctf, 0.2);
  REQUIRE(r.merges.size() == 1);
  auto bad = r.merges;
  bad[0].right = 3;
  CHECK_THROWS_AS(replay_chunk_merges(area, bad, ctf, 0.2), InvariantError);
  bad = r.merges;
  bad[0].distance = 5;
  CHECK_THROWS_AS(replay_chunk_merges(area, bad, ctf, 0.2), InvariantError);
}
