#include "ctdgm/transactions.hpp"

#include "ctdgm/error.hpp"

namespace ctdgm {

ExtractMode parse_extract_mode(std::string_view text) {
  if (text == "snapshot") return ExtractMode::Snapshot;
  if (text == "cumulative") return ExtractMode::Cumulative;
  throw ConfigError("mode must be snapshot|cumulative, got '" + std::string(text) + "'");
}

std::string_view to_string(ExtractMode m) { return m == ExtractMode::Snapshot ? "snapshot" : "cumulative"; }

void validate(const ExtractorConfig& cfg) {
  if (cfg.window_bytes == 0) throw ConfigError("window size M must be positive");
}

TransactionExtractor::TransactionExtractor(ExtractorConfig cfg) : cfg_(cfg) { validate(cfg_); }

bool TransactionExtractor::access(BlockAddress address, std::uint64_t size) {
  if (finished_) throw InvariantError("access after finish()");
  // A resident address changes nothing, not even Counter.
  if (resident_.contains(address)) return false;

  window_.entries.push_back({address, size});
  window_.occupied += size;
  resident_.insert(address);
  if (cfg_.mode == ExtractMode::Cumulative && pending_set_.insert(address).second) pending_.push_back(address);

  while (window_.occupied > cfg_.window_bytes) {
    const auto head = window_.entries.front();
    window_.entries.pop_front();
    resident_.erase(head.block_address);
    window_.occupied -= head.admitted_size;
    window_.evicted_since_emit += head.admitted_size;
  }
  if (window_.evicted_since_emit >= cfg_.window_bytes) {
    window_.evicted_since_emit = 0;
    emit(false);
    return true;
  }
  return false;
}

void TransactionExtractor::emit(bool partial) {
  CacheTransaction t;
  t.index = static_cast<std::uint32_t>(emitted_.size());
  t.partial = partial;
  if (cfg_.mode == ExtractMode::Snapshot) {
    t.members.reserve(window_.entries.size());
    for (const auto& e : window_.entries) t.members.push_back(e.block_address);
    // Clearing the cache also zeroes Counter so occupied stays the sum of
    // resident sizes.
    window_.entries.clear();
    window_.occupied = 0;
    resident_.clear();
  } else {
    t.members = std::move(pending_);
    pending_.clear();
    pending_set_.clear();
  }
  emitted_.push_back(std::move(t));
}

void TransactionExtractor::finish() {
  if (finished_) return;
  finished_ = true;
  const bool residue = cfg_.mode == ExtractMode::Snapshot ? !window_.entries.empty() : !pending_.empty();
  if (residue) emit(true);
}

std::vector<CacheTransaction> extract_transactions(const Trace& trace, const ExtractorConfig& cfg) {
  TransactionExtractor ex(cfg);
  for (const auto& r : trace.records) ex.access(r.block_address, r.size);
  ex.finish();
  return ex.take();
}

std::vector<CacheTransaction> full_transactions(std::vector<CacheTransaction> txns, bool include_partial) {
  if (!include_partial && !txns.empty() && txns.back().partial) txns.pop_back();
  return txns;
}

}  // namespace ctdgm
