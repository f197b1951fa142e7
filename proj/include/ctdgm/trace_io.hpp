#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ctdgm/config.hpp"

namespace ctdgm {

using BlockAddress = std::uint64_t;

enum class Op : std::uint8_t { Read, Write };

enum class OpsFilter { Read, Write, Both };

OpsFilter parse_ops_filter(std::string_view text);
std::string_view to_string(OpsFilter f);

// One block-layer access. A datum is identified by block_address alone;
// two accesses at the same offset with different sizes hit the same datum.
struct AccessRecord {
  std::uint64_t timestamp = 0;  // 100 ns ticks
  BlockAddress block_address = 0;
  std::uint64_t size = 0;
  Op op = Op::Read;

  friend bool operator==(const AccessRecord&, const AccessRecord&) = default;
};

// Records in ingestion order; a record's index is its access sequence number.
struct Trace {
  std::vector<AccessRecord> records;
  std::string source_label;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }
};

// Parses one line of the MSR Cambridge CSV convention:
//   Timestamp,Hostname,DiskNumber,Type,Offset,Size,ResponseTime
// Throws ParseError on a malformed line and RejectedRecord when the line is
// well formed but describes an inadmissible access (size <= 0, overflow).
AccessRecord parse_record(std::string_view line, std::size_t line_no = 1);

struct LoadOptions {
  bool skip_malformed = false;
  OpsFilter ops = OpsFilter::Both;
  std::optional<std::string> host;    // keep only this Hostname
  std::optional<std::uint32_t> disk;  // keep only this DiskNumber
};

struct LoadedTrace {
  Trace trace;
  std::size_t skipped = 0;   // malformed or rejected lines
  std::size_t filtered = 0;  // dropped by the ops/host/disk filters
};

LoadedTrace read_trace(std::istream& in, const LoadOptions& opts = {}, std::string label = "<stream>");
LoadedTrace load_trace(const std::filesystem::path& path, const LoadOptions& opts = {});

// Writes MSR-style CSV that read_trace parses back record-for-record.
void write_trace_csv(std::ostream& out, const Trace& trace);
void save_trace_csv(const std::filesystem::path& path, const Trace& trace);

// Prefix split: [0, train_count) and [train_count, size).
std::pair<Trace, Trace> split_trace(const Trace& trace, std::size_t train_count);
std::size_t train_count_from_fraction(std::size_t trace_size, double fraction);

// --- synthetic traces -------------------------------------------------------

struct PlantedGroupSpec {
  std::size_t count = 1;           // number of groups with this shape
  std::size_t size = 2;            // data per group
  double intra_probability = 1.0;  // chance an access to the group is a full run
};

enum class RunOrder { Fixed, Shuffled };

// Keys accepted in the key=value form (see parse_synthetic_spec):
//   num_data, num_accesses, groups, size_min, size_max, size_align, zipf,
//   locality, write_fraction, run_order, seed
struct SyntheticSpec {
  std::size_t num_data = 1000;
  std::size_t num_accesses = 10000;
  std::vector<PlantedGroupSpec> groups;
  std::uint64_t size_min = 4096;
  std::uint64_t size_max = 4096;
  std::uint64_t size_align = 4096;
  double zipf = 0.0;       // popularity skew over access units; 0 = uniform
  double locality = 1.0;   // fraction of groups laid out at adjacent addresses
  double write_fraction = 0.0;
  RunOrder run_order = RunOrder::Fixed;
  std::uint64_t rng_seed = 1;
};

struct SyntheticTrace {
  Trace trace;
  // Planted groups as ascending block-address lists.
  std::vector<std::vector<BlockAddress>> planted;
};

// `groups` syntax: comma list of COUNTxSIZE:PROB or SIZE:PROB, e.g. "40x3:1.0,2:0.5".
SyntheticSpec parse_synthetic_spec(const KeyValues& kv);
void validate(const SyntheticSpec& spec);

// Pure function of the spec. Randomness comes from std::mt19937_64 (whose
// output sequence is fixed by the C++ standard) with hand-written bounded
// integer and [0,1) mappings, so output is identical across platforms.
SyntheticTrace synthesize_trace(const SyntheticSpec& spec);

}  // namespace ctdgm
