#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "ctdgm/ctf.hpp"

namespace ctdgm {

// Cell of the (block address x access frequency) plane. Addresses are cut
// into q equal regions of [0, Q); frequencies into log_p bins, so bins are
// narrow for rarely seen data and wide for hot data.
struct AreaKey {
  std::uint64_t addr_bin = 0;
  std::uint32_t freq_bin = 0;

  friend auto operator<=>(const AreaKey&, const AreaKey&) = default;
};

struct ChunkerConfig {
  std::uint64_t q = 64;  // address regions
  double p = 2.0;        // frequency division coefficient, > 1
  double sigma = 0.1;    // strong relation threshold in [0,1]
  DistanceMetric metric = DistanceMetric::SymmetricDifference;
};

void validate(const ChunkerConfig& cfg);

// floor(log_p(frequency)) for frequency >= 1, computed without log().
std::uint32_t frequency_bin(std::size_t frequency, double p);
AreaKey area_key(BlockAddress address, std::size_t frequency, const ChunkerConfig& cfg, std::uint64_t Q);

struct DatumFrequency {
  BlockAddress address = 0;
  std::size_t frequency = 0;  // |V|: transactions containing the datum
};

struct PreBlocking {
  std::map<AreaKey, std::vector<BlockAddress>> areas;  // ascending addresses per area
  std::size_t excluded = 0;                            // frequency 0
};

PreBlocking pre_block(std::span<const DatumFrequency> data, const ChunkerConfig& cfg, std::uint64_t Q);

struct Chunk {
  std::uint32_t id = 0;
  std::vector<BlockAddress> members;  // ascending
  CtfVector feature;                  // OR of member rows
  AreaKey area;
};

// One executed merge. Chunks are named by their smallest member address at
// merge time; popcounts are of the two features being merged.
struct ChunkMerge {
  BlockAddress left = 0;
  BlockAddress right = 0;
  std::size_t distance = 0;  // symmetric difference of the two features
  std::size_t pop_left = 0;
  std::size_t pop_right = 0;
  double threshold = 0.0;    // (pop_left + pop_right) / 2 * sigma
};

struct AreaClustering {
  std::vector<Chunk> chunks;  // ordered by smallest member; ids unassigned
  std::vector<ChunkMerge> merges;
};

// Greedy agglomerative clustering from singletons: repeatedly merge the
// qualifying pair with the smallest feature distance, ties broken by the
// (smaller min-address, larger min-address) pair, until none qualifies.
//
// With the symmetric-difference metric two chunks with disjoint features
// can never qualify (their distance is |x|+|y| > (|x|+|y|)/2), so only pairs
// sharing a transaction are ever examined. The Euclidean variant has no such
// bound and examines every pair in the area.
AreaClustering cluster_area(std::span<const BlockAddress> area_data, const CtfMatrix& ctf, double sigma,
                            DistanceMetric metric = DistanceMetric::SymmetricDifference);

struct ChunkSet {
  std::vector<Chunk> chunks;  // ids equal positions
  std::unordered_map<BlockAddress, std::uint32_t> chunk_of;
  std::vector<ChunkMerge> merges;
  std::size_t excluded = 0;

  std::optional<std::uint32_t> find(BlockAddress address) const;
};

// Pre-blocks every CTF row and clusters each area. Areas are independent;
// chunk_all runs them on OpenMP threads, chunk_all_serial is the reference.
// Chunk ids follow area order, then smallest member address.
ChunkSet chunk_all(const CtfMatrix& ctf, const ChunkerConfig& cfg, std::uint64_t Q);
ChunkSet chunk_all_serial(const CtfMatrix& ctf, const ChunkerConfig& cfg, std::uint64_t Q);

// Replays a merge audit from singletons over `data`, checking each recorded
// merge against the strong relation test on the replayed features. Returns
// the resulting partition (each part ascending, parts ordered by first
// member). Throws InvariantError on any inconsistency.
std::vector<std::vector<BlockAddress>> replay_chunk_merges(std::span<const BlockAddress> data,
                                                           std::span<const ChunkMerge> merges,
                                                           const CtfMatrix& ctf, double sigma,
                                                           DistanceMetric metric = DistanceMetric::SymmetricDifference);

}  // namespace ctdgm
