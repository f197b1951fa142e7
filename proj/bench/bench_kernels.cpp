// Times each OpenMP kernel against its serial reference on one synthetic
// workload and checks that both produce the same result.
//
//   ctdgm_bench [num_data] [num_accesses] [repeats]

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "ctdgm/cache_sim.hpp"
#include "ctdgm/chunker.hpp"
#include "ctdgm/ctf.hpp"
#include "ctdgm/grouper.hpp"
#include "ctdgm/locality.hpp"
#include "ctdgm/trace_io.hpp"
#include "ctdgm/transactions.hpp"

using namespace ctdgm;

namespace {

double median_seconds(int repeats, const std::function<void()>& f) {
  std::vector<double> t;
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(t.begin(), t.end());
  return t[t.size() / 2];
}

void row(const char* kernel, double serial, double parallel, bool same) {
  std::printf("%-22s %10.4f %10.4f %8.2fx  %s\n", kernel, serial, parallel, parallel > 0 ? serial / parallel : 0.0,
              same ? "match" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  const std::size_t num_data = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 50000;
  const std::size_t num_accesses = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 500000;
  const int repeats = argc > 3 ? std::atoi(argv[3]) : 3;

  SyntheticSpec spec;
  spec.num_data = num_data;
  spec.num_accesses = num_accesses;
  spec.groups = {{num_data / 20, 4, 0.8}, {num_data / 40, 8, 0.6}};
  spec.size_min = 4096;
  spec.size_max = 65536;
  spec.zipf = 0.8;
  spec.locality = 0.7;
  spec.run_order = RunOrder::Shuffled;
  spec.rng_seed = 7;
  const auto trace = synthesize_trace(spec).trace;
  const auto [train, test] = split_trace(trace, train_count_from_fraction(trace.size(), 0.7));

  std::printf("threads %d, data %zu, accesses %zu, repeats %d\n", omp_get_max_threads(), num_data, num_accesses,
              repeats);
  std::printf("%-22s %10s %10s %9s\n", "kernel", "serial_s", "omp_s", "speedup");

  const auto txns = full_transactions(extract_transactions(train, ExtractorConfig{}), false);
  const auto ctf = build_ctf(txns);
  BlockAddress hi = 0;
  for (const auto& r : train.records) hi = std::max(hi, r.block_address);
  ChunkerConfig cc;
  cc.sigma = 0.2;

  ChunkSet cs, cp;
  const double ts = median_seconds(repeats, [&] { cs = chunk_all_serial(ctf, cc, hi + 1); });
  const double tp = median_seconds(repeats, [&] { cp = chunk_all(ctf, cc, hi + 1); });
  bool same = cs.chunks.size() == cp.chunks.size();
  for (std::size_t i = 0; same && i < cs.chunks.size(); ++i) same = cs.chunks[i].members == cp.chunks[i].members;
  row("chunk_all", ts, tp, same);

  RelationCounts rs, rp;
  const auto n = cp.chunks.size();
  const double rs_t = median_seconds(repeats, [&] { rs = count_cooccurrence_serial(txns, cp.chunk_of, n); });
  const double rp_t = median_seconds(repeats, [&] { rp = count_cooccurrence(txns, cp.chunk_of, n); });
  row("count_cooccurrence", rs_t, rp_t, rs == rp);

  const auto relations = legal_relations(rp, 0.5);
  const auto grouping = merge_groups(relations, cp.chunks, 0.5);
  const auto groups = PrefetchGroups::from_grouping(grouping);
  const auto catalog = SizeCatalog::from_trace(trace);
  const std::vector<double> fractions{0.001, 0.004, 0.016, 0.064};
  const std::vector<Policy> policies{Policy::LRU, Policy::FIFO, Policy::GroupPrefetch, Policy::GroupMerged};
  std::vector<SimMetrics> ms, mp;
  const double ss = median_seconds(repeats, [&] { ms = sweep_serial(test, catalog, &groups, fractions, policies); });
  const double sp = median_seconds(repeats, [&] { mp = sweep(test, catalog, &groups, fractions, policies); });
  same = ms.size() == mp.size();
  for (std::size_t i = 0; same && i < ms.size(); ++i)
    same = ms[i].hits == mp[i].hits && ms[i].disk_ios == mp[i].disk_ios && ms[i].evictions == mp[i].evictions;
  row("sweep", ss, sp, same);

  const auto index = AccessIndex::build(train);
  const auto pairs = cooccurring_pairs(txns, 200000);
  std::vector<double> ws, wp;
  const double ws_t = median_seconds(repeats, [&] { ws = relation_strengths_serial(index, pairs); });
  const double wp_t = median_seconds(repeats, [&] { wp = relation_strengths(index, pairs); });
  row("relation_strengths", ws_t, wp_t, ws == wp);
  return 0;
}
