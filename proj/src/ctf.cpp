#include "ctdgm/ctf.hpp"

#include <algorithm>
#include <cmath>

#include "ctdgm/error.hpp"

namespace ctdgm {

DistanceMetric parse_distance_metric(std::string_view text) {
  if (text == "symdiff" || text == "hamming") return DistanceMetric::SymmetricDifference;
  if (text == "euclidean") return DistanceMetric::Euclidean;
  throw ConfigError("distance must be symdiff|euclidean, got '" + std::string(text) + "'");
}

std::string_view to_string(DistanceMetric m) {
  return m == DistanceMetric::Euclidean ? "euclidean" : "symdiff";
}

std::size_t symmetric_difference_size(CtfBits a, CtfBits b) {
  std::size_t common = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++common;
      ++i;
      ++j;
    }
  }
  return a.size() + b.size() - 2 * common;
}

std::vector<std::uint32_t> bitwise_or(CtfBits a, CtfBits b) {
  std::vector<std::uint32_t> out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

bool shares_any(CtfBits a, CtfBits b) {
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      return true;
    }
  }
  return false;
}

void validate_sigma(double sigma) {
  if (!(sigma >= 0.0 && sigma <= 1.0)) throw ConfigError("sigma must be in [0,1], got " + std::to_string(sigma));
}

bool strong_relation_counts(std::size_t symdiff, std::size_t pop_x, std::size_t pop_y, double sigma,
                            DistanceMetric metric) {
  const double bound = static_cast<double>(pop_x + pop_y) / 2.0 * sigma;
  const double d = metric == DistanceMetric::Euclidean ? std::sqrt(static_cast<double>(symdiff))
                                                       : static_cast<double>(symdiff);
  return d <= bound;
}

namespace {
void check_dims(const CtfVector& x, const CtfVector& y) {
  if (x.dimension != y.dimension)
    throw ConfigError("CTF dimension mismatch: " + std::to_string(x.dimension) + " vs " +
                      std::to_string(y.dimension));
}
}  // namespace

std::size_t distance(const CtfVector& x, const CtfVector& y) {
  check_dims(x, y);
  return symmetric_difference_size(x.bits, y.bits);
}

double metric_distance(const CtfVector& x, const CtfVector& y, DistanceMetric metric) {
  const auto d = static_cast<double>(distance(x, y));
  return metric == DistanceMetric::Euclidean ? std::sqrt(d) : d;
}

bool strong_relation(const CtfVector& x, const CtfVector& y, double sigma, DistanceMetric metric) {
  validate_sigma(sigma);
  return strong_relation_counts(distance(x, y), x.bits.size(), y.bits.size(), sigma, metric);
}

CtfBits CtfMatrix::row(std::size_t i) const {
  return CtfBits(indices_).subspan(offsets_[i], offsets_[i + 1] - offsets_[i]);
}

std::optional<std::size_t> CtfMatrix::find(BlockAddress address) const {
  auto it = lookup_.find(address);
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

CtfVector CtfMatrix::vector_of(BlockAddress address) const {
  auto i = find(address);
  if (!i) throw DataError("no CTF row for block address " + std::to_string(address));
  auto r = row(*i);
  return CtfVector{{r.begin(), r.end()}, num_transactions_};
}

std::vector<std::vector<BlockAddress>> CtfMatrix::reconstruct_transactions() const {
  std::vector<std::vector<BlockAddress>> out(num_transactions_);
  for (std::size_t i = 0; i < addresses_.size(); ++i)
    for (auto j : row(i)) out[j].push_back(addresses_[i]);
  return out;
}

void CtfMatrix::index_addresses() {
  lookup_.clear();
  lookup_.reserve(addresses_.size());
  for (std::size_t i = 0; i < addresses_.size(); ++i) lookup_.emplace(addresses_[i], static_cast<std::uint32_t>(i));
}

CtfMatrix CtfMatrix::from_rows(std::uint32_t num_transactions, std::vector<BlockAddress> addresses,
                               std::vector<std::vector<std::uint32_t>> rows) {
  if (addresses.size() != rows.size()) throw DataError("CTF rows and addresses differ in length");
  std::vector<std::size_t> order(addresses.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return addresses[a] < addresses[b]; });
  CtfMatrix m;
  m.num_transactions_ = num_transactions;
  for (auto i : order) {
    auto& r = rows[i];
    if (!std::is_sorted(r.begin(), r.end()) || std::adjacent_find(r.begin(), r.end()) != r.end())
      throw DataError("CTF row for " + std::to_string(addresses[i]) + " is not strictly ascending");
    if (!r.empty() && r.back() >= num_transactions)
      throw DataError("CTF row for " + std::to_string(addresses[i]) + " exceeds the transaction count");
    if (!m.addresses_.empty() && m.addresses_.back() == addresses[i])
      throw DataError("duplicate CTF row for " + std::to_string(addresses[i]));
    m.addresses_.push_back(addresses[i]);
    m.indices_.insert(m.indices_.end(), r.begin(), r.end());
    m.offsets_.push_back(m.indices_.size());
  }
  m.index_addresses();
  return m;
}

CtfMatrix build_ctf(std::span<const CacheTransaction> transactions) {
  CtfMatrix m;
  m.num_transactions_ = static_cast<std::uint32_t>(transactions.size());
  std::size_t total = 0;
  for (std::size_t j = 0; j < transactions.size(); ++j) {
    if (transactions[j].index != j)
      throw DataError("transaction indices must be consecutive from 0; found " +
                      std::to_string(transactions[j].index) + " at position " + std::to_string(j));
    total += transactions[j].members.size();
  }

  std::vector<BlockAddress> all;
  all.reserve(total);
  for (const auto& t : transactions) all.insert(all.end(), t.members.begin(), t.members.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  m.addresses_ = std::move(all);
  m.index_addresses();

  std::vector<std::size_t> counts(m.addresses_.size() + 1, 0);
  for (const auto& t : transactions)
    for (auto a : t.members) ++counts[m.lookup_.at(a) + 1];
  for (std::size_t i = 1; i < counts.size(); ++i) counts[i] += counts[i - 1];
  m.offsets_ = counts;
  m.indices_.assign(total, 0);
  // Transactions are visited in index order, so every row fills ascending.
  std::vector<std::size_t> cursor(counts.begin(), counts.end() - 1);
  for (const auto& t : transactions)
    for (auto a : t.members) {
      auto& c = cursor[m.lookup_.at(a)];
      if (c > m.offsets_[m.lookup_.at(a)] && m.indices_[c - 1] == t.index)
        throw DataError("transaction " + std::to_string(t.index) + " lists " + std::to_string(a) + " twice");
      m.indices_[c++] = t.index;
    }
  return m;
}

}  // namespace ctdgm
