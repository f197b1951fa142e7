#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ctdgm/grouper.hpp"
#include "ctdgm/trace_io.hpp"

namespace ctdgm {

enum class Policy { LRU, FIFO, GroupPrefetch, GroupMerged };

Policy parse_policy(std::string_view text);
std::string_view to_string(Policy p);
std::vector<Policy> parse_policy_list(std::string_view text);

// Allocate: writes populate the cache like reads. Around: a write miss goes
// to disk without admission.
enum class WritePolicy { Allocate, Around };

WritePolicy parse_write_policy(std::string_view text);
std::string_view to_string(WritePolicy w);

// First-seen size of every distinct datum; total_bytes is the base for
// capacity fractions.
struct SizeCatalog {
  std::unordered_map<BlockAddress, std::uint64_t> size;
  std::uint64_t total_bytes = 0;

  static SizeCatalog from_trace(const Trace& trace);
  void add(const Trace& trace);
  std::uint64_t size_of(BlockAddress a, std::uint64_t fallback) const;
  std::uint64_t smallest() const;
};

// Prefetch units: only groups with two or more members.
struct PrefetchGroups {
  std::vector<std::vector<BlockAddress>> groups;  // each ascending
  std::unordered_map<BlockAddress, std::uint32_t> group_of;

  static PrefetchGroups from_grouping(const Grouping& grouping);
  static PrefetchGroups from_lists(std::vector<std::vector<BlockAddress>> lists);
  std::size_t grouped_data() const noexcept { return group_of.size(); }
};

struct SimConfig {
  Policy policy = Policy::LRU;
  std::uint64_t capacity_bytes = 0;             // used when no fraction is set
  std::optional<double> capacity_fraction;      // of catalog total_bytes
  const PrefetchGroups* groups = nullptr;       // required for group policies
  const SizeCatalog* catalog = nullptr;         // built from the trace if null
  WritePolicy write_policy = WritePolicy::Allocate;
  bool check_invariants = false;                // assert occupancy each step
  bool record_hits = false;
};

std::uint64_t resolve_capacity(const SimConfig& cfg, const SizeCatalog& catalog);

struct SimMetrics {
  Policy policy = Policy::LRU;
  std::optional<double> capacity_fraction;
  std::uint64_t capacity_bytes = 0;
  std::uint64_t accesses = 0;
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t disk_ios = 0;
  std::uint64_t prefetched_bytes = 0;
  std::uint64_t prefetch_ios = 0;   // individually fetched group members
  std::uint64_t group_fetches = 0;  // merged whole-group fetches
  std::uint64_t evictions = 0;
  std::uint64_t bypasses = 0;
  std::vector<std::uint8_t> hit_flags;  // per access, when recorded

  double hit_rate() const { return accesses ? static_cast<double>(hits) / static_cast<double>(accesses) : 0.0; }
};

SimMetrics simulate(const Trace& trace, const SimConfig& cfg);

// One run per (fraction, policy), fraction-major, in input order. The
// OpenMP version runs the configurations concurrently.
std::vector<SimMetrics> sweep(const Trace& trace, const SizeCatalog& catalog, const PrefetchGroups* groups,
                              std::span<const double> fractions, std::span<const Policy> policies,
                              WritePolicy write_policy = WritePolicy::Allocate);
std::vector<SimMetrics> sweep_serial(const Trace& trace, const SizeCatalog& catalog, const PrefetchGroups* groups,
                                     std::span<const double> fractions, std::span<const Policy> policies,
                                     WritePolicy write_policy = WritePolicy::Allocate);

// Hit rate over consecutive windows; the last partial window keeps its own
// denominator.
std::vector<double> rolling_hit_rate(const Trace& trace, SimConfig cfg, std::size_t window);
std::vector<double> window_rates(std::span<const std::uint8_t> hit_flags, std::size_t window);

void write_metrics_csv(std::ostream& out, std::span<const SimMetrics> rows);
std::string metrics_json(std::span<const SimMetrics> rows);
void write_rolling_csv(std::ostream& out, std::span<const double> series);

}  // namespace ctdgm
