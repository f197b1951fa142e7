#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ctdgm/chunker.hpp"

namespace ctdgm {

struct GrouperConfig {
  double alpha = 0.5;
  double mu = 0.5;
};

void validate(const GrouperConfig& cfg);

// Co-occurrence counts R(Cx, Cy) for x < y, stored per x as ascending
// partner ids. Also carries |V_C|, the number of transactions containing
// each chunk.
class RelationCounts {
 public:
  RelationCounts() = default;
  RelationCounts(std::vector<std::size_t> offsets, std::vector<std::uint32_t> partners,
                 std::vector<std::uint32_t> counts, std::vector<std::size_t> chunk_frequency);

  std::size_t num_chunks() const noexcept { return chunk_frequency_.size(); }
  std::size_t num_pairs() const noexcept { return partners_.size(); }
  std::uint32_t get(std::uint32_t a, std::uint32_t b) const;
  std::span<const std::size_t> chunk_frequency() const noexcept { return chunk_frequency_; }

  template <typename F>
  void for_each(F&& f) const {
    for (std::size_t x = 0; x + 1 < offsets_.size(); ++x)
      for (std::size_t k = offsets_[x]; k < offsets_[x + 1]; ++k)
        f(static_cast<std::uint32_t>(x), partners_[k], counts_[k]);
  }

  friend bool operator==(const RelationCounts&, const RelationCounts&) = default;

 private:
  std::vector<std::size_t> offsets_{0};
  std::vector<std::uint32_t> partners_;
  std::vector<std::uint32_t> counts_;
  std::vector<std::size_t> chunk_frequency_;
};

// Projects each transaction onto chunks (deduplicated) and counts every
// unordered chunk pair once per transaction. Throws DataError naming the
// first address with no chunk.
//
// The OpenMP version walks chunks in parallel, each thread gathering a
// chunk's partners through the transactions that contain it with a dense
// scratch counter. The serial version is the direct per-transaction hash map
// reference.
RelationCounts count_cooccurrence(std::span<const CacheTransaction> transactions,
                                  const std::unordered_map<BlockAddress, std::uint32_t>& chunk_of,
                                  std::size_t num_chunks);
RelationCounts count_cooccurrence_serial(std::span<const CacheTransaction> transactions,
                                         const std::unordered_map<BlockAddress, std::uint32_t>& chunk_of,
                                         std::size_t num_chunks);

struct Relation {
  std::uint32_t x = 0;  // x < y
  std::uint32_t y = 0;
  std::uint32_t count = 0;

  friend bool operator==(const Relation&, const Relation&) = default;
};

enum class RelationOrder { Descending, Ascending };

RelationOrder parse_relation_order(std::string_view text);
std::string_view to_string(RelationOrder o);

// Keeps pairs with R >= max(|V_x|, |V_y|) * alpha, ordered by R (descending
// by default), ties by (x, y) ascending.
std::vector<Relation> legal_relations(const RelationCounts& counts, double alpha,
                                      RelationOrder order = RelationOrder::Descending);

struct GroupMerge {
  std::uint32_t chunk_x = 0;
  std::uint32_t chunk_y = 0;
  std::uint64_t counter = 0;  // R(Gx, Gy) when the merge fired
  std::size_t size_x = 0;     // |Gx| in chunks
  std::size_t size_y = 0;
};

// Disjoint-set state of the merge procedure, exposed for step-wise checks.
class GroupState {
 public:
  GroupState(std::size_t num_chunks, double mu);

  // Processes one relation. Returns true if it merged two groups.
  bool process(const Relation& r);

  std::uint32_t group_of(std::uint32_t chunk);
  std::size_t group_size(std::uint32_t chunk);
  std::uint64_t counter(std::uint32_t chunk_a, std::uint32_t chunk_b);

  std::uint64_t processed() const noexcept { return processed_; }          // cross-group relations seen
  std::uint64_t skipped_same_group() const noexcept { return skipped_; }
  std::uint64_t internalized() const noexcept { return internalized_; }    // counters absorbed by merges
  std::uint64_t live_counter_total() const noexcept { return live_total_; }
  const std::vector<GroupMerge>& merges() const noexcept { return merges_; }
  const std::vector<Relation>& processed_relations() const noexcept { return processed_relations_; }
  std::size_t num_chunks() const noexcept { return parent_.size(); }

 private:
  std::uint32_t find(std::uint32_t x);

  double mu_;
  std::vector<std::uint32_t> parent_;
  std::vector<std::size_t> size_;
  std::vector<std::unordered_map<std::uint32_t, std::uint64_t>> edges_;  // by root
  std::vector<GroupMerge> merges_;
  std::vector<Relation> processed_relations_;
  std::uint64_t processed_ = 0;
  std::uint64_t skipped_ = 0;
  std::uint64_t internalized_ = 0;
  std::uint64_t live_total_ = 0;
};

struct Group {
  std::uint32_t id = 0;
  std::vector<std::uint32_t> chunks;   // ascending
  std::vector<BlockAddress> members;   // ascending
  std::size_t internal_edges = 0;      // processed cross edges now inside the group
};

struct Grouping {
  std::vector<Group> groups;  // ordered by smallest member address; id = position
  std::vector<std::uint32_t> group_of_chunk;
  std::vector<GroupMerge> merges;
  std::uint64_t processed = 0;
  std::uint64_t internalized = 0;
  std::uint64_t live_counter_total = 0;
};

// Runs the relations through GroupState in order and expands the final
// partition to block addresses. Never-merged chunks are singleton groups.
Grouping merge_groups(std::span<const Relation> relations, std::span<const Chunk> chunks, double mu);

// Rebuilds the partition from a merge audit, checking each recorded counter
// against |Gx||Gy|mu with replayed sizes. Returns a group label per chunk
// (the smallest chunk id in its group). Throws InvariantError.
std::vector<std::uint32_t> replay_group_merges(std::size_t num_chunks, std::span<const GroupMerge> merges, double mu);

struct GroupingReport {
  std::size_t group_count = 0;
  std::size_t chunk_count = 0;
  std::size_t data_count = 0;
  std::map<std::size_t, std::size_t> size_histogram;        // data per group -> groups
  std::map<std::size_t, std::size_t> chunk_size_histogram;  // chunks per group -> groups
  std::vector<std::optional<double>> density;               // per group; nullopt for single-chunk groups
};

GroupingReport grouping_report(const Grouping& grouping);

}  // namespace ctdgm
