#pragma once

#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ctdgm/chunker.hpp"
#include "ctdgm/ctf.hpp"
#include "ctdgm/grouper.hpp"
#include "ctdgm/transactions.hpp"

namespace ctdgm {

std::string sha256_hex(std::string_view data);
std::string file_sha256(const std::filesystem::path& path);
// Digest of the record fields in order (label excluded).
std::string trace_digest(const Trace& trace);

// Artifact files start with "# ctdgm <kind>" followed by "# key=value"
// lines. `config_hash` is derived from the other keys, which carry every
// parameter of the artifact's lineage.
class ArtifactHeader {
 public:
  ArtifactHeader() = default;
  explicit ArtifactHeader(std::string kind) : kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }
  void set(std::string key, std::string value);
  std::optional<std::string> get(std::string_view key) const;
  std::string require(std::string_view key) const;
  const std::vector<std::pair<std::string, std::string>>& params() const noexcept { return params_; }

  // Copies every parameter of an upstream header.
  void inherit(const ArtifactHeader& upstream);

  std::string config_hash() const;
  void write(std::ostream& out) const;
  static ArtifactHeader read(std::istream& in, std::string_view expected_kind);

  // Throws if the stored config_hash does not match the parameters.
  void verify() const;

 private:
  std::string kind_;
  std::vector<std::pair<std::string, std::string>> params_;
  std::optional<std::string> stored_hash_;
};

// Throws DataError unless both headers agree on every key they share.
void require_same_lineage(const ArtifactHeader& a, const ArtifactHeader& b);

struct TransactionLog {
  ArtifactHeader header;
  std::vector<CacheTransaction> transactions;
};

// txn_id<TAB>addr1,addr2,...  (a trailing partial transaction is marked by
// the header key partial_last=1)
void write_transactions(std::ostream& out, const ArtifactHeader& header, std::span<const CacheTransaction> txns);
TransactionLog read_transactions(std::istream& in);

struct CtfFile {
  ArtifactHeader header;
  CtfMatrix matrix;
};

// addr<TAB>idx1,idx2,...
void write_ctf(std::ostream& out, const ArtifactHeader& header, const CtfMatrix& matrix);
CtfFile read_ctf(std::istream& in);

struct ChunkFile {
  ArtifactHeader header;
  std::vector<std::vector<BlockAddress>> chunks;  // by chunk id
};

// chunk_id<TAB>addr1,addr2,...
void write_chunks(std::ostream& out, const ArtifactHeader& header, std::span<const Chunk> chunks);
ChunkFile read_chunks(std::istream& in);

struct GroupingFile {
  ArtifactHeader header;
  std::vector<std::vector<BlockAddress>> groups;  // by group id
};

// group_id,block_address
void write_grouping(std::ostream& out, const ArtifactHeader& header, const Grouping& grouping);
GroupingFile read_grouping(std::istream& in);

// Opens `path` or throws DataError.
std::ifstream open_input(const std::filesystem::path& path);

}  // namespace ctdgm
