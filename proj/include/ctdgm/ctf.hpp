#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ctdgm/transactions.hpp"

namespace ctdgm {

// Symmetric-difference count is the default: both sides of the strong
// relation test are then transaction counts. Euclidean (its square root)
// is kept for sensitivity checks.
enum class DistanceMetric { SymmetricDifference, Euclidean };

DistanceMetric parse_distance_metric(std::string_view text);
std::string_view to_string(DistanceMetric m);

// Sparse binary feature: ascending transaction indices where a datum (or
// chunk) appears, over `dimension` transactions.
struct CtfVector {
  std::vector<std::uint32_t> bits;
  std::uint32_t dimension = 0;

  friend bool operator==(const CtfVector&, const CtfVector&) = default;
};

using CtfBits = std::span<const std::uint32_t>;

std::size_t symmetric_difference_size(CtfBits a, CtfBits b);
std::vector<std::uint32_t> bitwise_or(CtfBits a, CtfBits b);
bool shares_any(CtfBits a, CtfBits b);

// Core of the strong relation test on precomputed counts:
//   dist(x,y) <= (|x| + |y|) / 2 * sigma
bool strong_relation_counts(std::size_t symdiff, std::size_t pop_x, std::size_t pop_y, double sigma,
                            DistanceMetric metric = DistanceMetric::SymmetricDifference);

std::size_t distance(const CtfVector& x, const CtfVector& y);
double metric_distance(const CtfVector& x, const CtfVector& y, DistanceMetric metric);
bool strong_relation(const CtfVector& x, const CtfVector& y, double sigma,
                     DistanceMetric metric = DistanceMetric::SymmetricDifference);
inline std::size_t access_frequency(const CtfVector& x) { return x.bits.size(); }

void validate_sigma(double sigma);

// Per-datum CTF rows in CSR layout, rows ordered by ascending address.
class CtfMatrix {
 public:
  CtfMatrix() = default;

  std::uint32_t num_transactions() const noexcept { return num_transactions_; }
  std::size_t num_data() const noexcept { return addresses_.size(); }
  std::span<const BlockAddress> addresses() const noexcept { return addresses_; }
  CtfBits row(std::size_t i) const;
  std::optional<std::size_t> find(BlockAddress address) const;
  CtfVector vector_of(BlockAddress address) const;

  // Member sets per transaction, rebuilt from the rows (ascending address).
  std::vector<std::vector<BlockAddress>> reconstruct_transactions() const;

  // Rows given directly, e.g. when reading a serialized matrix.
  static CtfMatrix from_rows(std::uint32_t num_transactions, std::vector<BlockAddress> addresses,
                             std::vector<std::vector<std::uint32_t>> rows);

 private:
  friend CtfMatrix build_ctf(std::span<const CacheTransaction> transactions);
  void index_addresses();

  std::uint32_t num_transactions_ = 0;
  std::vector<BlockAddress> addresses_;
  std::vector<std::size_t> offsets_{0};
  std::vector<std::uint32_t> indices_;
  std::unordered_map<BlockAddress, std::uint32_t> lookup_;
};

CtfMatrix build_ctf(std::span<const CacheTransaction> transactions);

}  // namespace ctdgm
