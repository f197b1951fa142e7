#pragma once

#include <cstdint>
#include <deque>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ctdgm/trace_io.hpp"

namespace ctdgm {

// Snapshot: emit the FIFO window contents and clear the window.
// Cumulative: emit every address admitted since the previous emission,
// including ones already evicted, and keep the window.
enum class ExtractMode { Snapshot, Cumulative };

ExtractMode parse_extract_mode(std::string_view text);
std::string_view to_string(ExtractMode m);

struct ExtractorConfig {
  std::uint64_t window_bytes = 1ull << 20;  // M
  ExtractMode mode = ExtractMode::Cumulative;
};

void validate(const ExtractorConfig& cfg);

struct CacheTransaction {
  std::uint32_t index = 0;
  std::vector<BlockAddress> members;  // insertion order, no duplicates
  bool partial = false;               // end-of-trace residue

  friend bool operator==(const CacheTransaction&, const CacheTransaction&) = default;
};

struct WindowEntry {
  BlockAddress block_address = 0;
  std::uint64_t admitted_size = 0;
};

// Read-only view of the extractor's FIFO. `occupied` is Counter and
// `evicted_since_emit` is Out.
struct FifoWindow {
  std::deque<WindowEntry> entries;
  std::uint64_t occupied = 0;
  std::uint64_t evicted_since_emit = 0;
};

class TransactionExtractor {
 public:
  explicit TransactionExtractor(ExtractorConfig cfg);

  // Feeds one access. Returns true if it completed a transaction.
  bool access(BlockAddress address, std::uint64_t size);

  // Emits the pending residue (if any) as a partial transaction.
  void finish();

  const FifoWindow& window() const noexcept { return window_; }
  const std::vector<CacheTransaction>& transactions() const noexcept { return emitted_; }
  std::vector<CacheTransaction> take() { return std::move(emitted_); }
  const ExtractorConfig& config() const noexcept { return cfg_; }

 private:
  void emit(bool partial);

  ExtractorConfig cfg_;
  FifoWindow window_;
  std::unordered_set<BlockAddress> resident_;
  // Cumulative mode: admitted since the last emission.
  std::vector<BlockAddress> pending_;
  std::unordered_set<BlockAddress> pending_set_;
  std::vector<CacheTransaction> emitted_;
  bool finished_ = false;
};

// Replays the whole trace; the final entry is flagged partial when the trace
// ends with a non-empty residue.
std::vector<CacheTransaction> extract_transactions(const Trace& trace, const ExtractorConfig& cfg);

// Drops the trailing partial transaction unless asked to keep it.
std::vector<CacheTransaction> full_transactions(std::vector<CacheTransaction> txns, bool include_partial);

}  // namespace ctdgm
