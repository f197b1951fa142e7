#include "ctdgm/artifacts.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include "ctdgm/config.hpp"
#include "ctdgm/error.hpp"

namespace ctdgm {

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) throw Error("sha256 init failed");
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx_, data, n) != 1) throw Error("sha256 update failed");
  }

  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_, md.data(), &len) != 1) throw Error("sha256 final failed");
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out.push_back(digits[md[i] >> 4]);
      out.push_back(digits[md[i] & 0xf]);
    }
    return out;
  }

 private:
  EVP_MD_CTX* ctx_;
};

template <typename T>
T parse_number(std::string_view s, std::size_t line_no, std::string_view what) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty())
    throw ParseError(line_no, "bad " + std::string(what) + " '" + std::string(s) + "'");
  return v;
}

template <typename T>
std::vector<T> parse_numbers(std::string_view s, std::size_t line_no, std::string_view what) {
  std::vector<T> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(',', start);
    out.push_back(parse_number<T>(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start),
                                  line_no, what));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename Range>
void write_joined(std::ostream& out, const Range& r) {
  bool first = true;
  for (const auto& v : r) {
    if (!first) out << ',';
    out << v;
    first = false;
  }
}

// Reads "key<TAB>list" body lines, skipping '#' lines.
template <typename F>
void for_each_tab_line(std::istream& in, F&& f) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (line.back() == '\r') line.pop_back();
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(line_no, "expected key<TAB>list");
    f(std::string_view(line).substr(0, tab), std::string_view(line).substr(tab + 1), line_no);
  }
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  Sha256 h;
  h.update(data.data(), data.size());
  return h.hex();
}

std::string file_sha256(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  Sha256 h;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

std::string trace_digest(const Trace& trace) {
  Sha256 h;
  std::array<unsigned char, 25> rec{};
  auto put = [&](std::size_t off, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) rec[off + i] = static_cast<unsigned char>(v >> (8 * i));
  };
  for (const auto& r : trace.records) {
    put(0, r.timestamp);
    put(8, r.block_address);
    put(16, r.size);
    rec[24] = r.op == Op::Read ? 0 : 1;
    h.update(rec.data(), rec.size());
  }
  return h.hex();
}

void ArtifactHeader::set(std::string key, std::string value) {
  for (auto& [k, v] : params_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  params_.emplace_back(std::move(key), std::move(value));
}

std::optional<std::string> ArtifactHeader::get(std::string_view key) const {
  for (const auto& [k, v] : params_)
    if (k == key) return v;
  return std::nullopt;
}

std::string ArtifactHeader::require(std::string_view key) const {
  auto v = get(key);
  if (!v) throw DataError(kind_ + " header lacks '" + std::string(key) + "'");
  return *v;
}

void ArtifactHeader::inherit(const ArtifactHeader& upstream) {
  for (const auto& [k, v] : upstream.params_) set(k, v);
}

std::string ArtifactHeader::config_hash() const {
  std::map<std::string, std::string> sorted(params_.begin(), params_.end());
  std::string canon;
  for (const auto& [k, v] : sorted) canon += k + "=" + v + "\n";
  return sha256_hex(canon).substr(0, 16);
}

void ArtifactHeader::write(std::ostream& out) const {
  out << "# ctdgm " << kind_ << '\n';
  for (const auto& [k, v] : params_) out << "# " << k << '=' << v << '\n';
  out << "# config_hash=" << config_hash() << '\n';
}

ArtifactHeader ArtifactHeader::read(std::istream& in, std::string_view expected_kind) {
  ArtifactHeader h;
  std::string line;
  if (!std::getline(in, line) || line.rfind("# ctdgm ", 0) != 0)
    throw DataError("missing ctdgm header (expected " + std::string(expected_kind) + ")");
  h.kind_ = std::string(trim(std::string_view(line).substr(8)));
  if (h.kind_ != expected_kind)
    throw DataError("expected a " + std::string(expected_kind) + " artifact, found " + h.kind_);
  while (in.peek() == '#') {
    std::getline(in, line);
    auto body = trim(std::string_view(line).substr(1));
    auto eq = body.find('=');
    if (eq == std::string_view::npos) continue;
    std::string key(body.substr(0, eq));
    std::string value(body.substr(eq + 1));
    if (key == "config_hash") {
      h.stored_hash_ = value;
    } else {
      h.params_.emplace_back(std::move(key), std::move(value));
    }
  }
  h.verify();
  return h;
}

void ArtifactHeader::verify() const {
  if (!stored_hash_) throw DataError(kind_ + " header has no config_hash");
  if (*stored_hash_ != config_hash())
    throw DataError(kind_ + " header config_hash " + *stored_hash_ + " does not match its parameters (" +
                    config_hash() + ")");
}

void require_same_lineage(const ArtifactHeader& a, const ArtifactHeader& b) {
  for (const auto& [k, v] : a.params()) {
    auto other = b.get(k);
    if (other && *other != v)
      throw DataError("artifacts come from different configs: " + a.kind() + " has " + k + "=" + v + " but " +
                      b.kind() + " has " + k + "=" + *other);
  }
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  return in;
}

void write_transactions(std::ostream& out, const ArtifactHeader& header, std::span<const CacheTransaction> txns) {
  ArtifactHeader h = header;
  h.set("transactions", std::to_string(txns.size()));
  h.set("partial_last", !txns.empty() && txns.back().partial ? "1" : "0");
  h.write(out);
  for (const auto& t : txns) {
    out << t.index << '\t';
    write_joined(out, t.members);
    out << '\n';
  }
}

TransactionLog read_transactions(std::istream& in) {
  TransactionLog log;
  log.header = ArtifactHeader::read(in, "transactions");
  for_each_tab_line(in, [&](std::string_view id, std::string_view list, std::size_t line_no) {
    CacheTransaction t;
    t.index = parse_number<std::uint32_t>(id, line_no, "transaction id");
    t.members = parse_numbers<BlockAddress>(list, line_no, "block address");
    log.transactions.push_back(std::move(t));
  });
  if (log.header.get("partial_last") == "1" && !log.transactions.empty()) log.transactions.back().partial = true;
  const auto declared = log.header.get("transactions");
  if (declared && std::to_string(log.transactions.size()) != *declared)
    throw DataError("transaction log is truncated: header says " + *declared);
  return log;
}

void write_ctf(std::ostream& out, const ArtifactHeader& header, const CtfMatrix& matrix) {
  ArtifactHeader h = header;
  h.set("num_transactions", std::to_string(matrix.num_transactions()));
  h.write(out);
  for (std::size_t i = 0; i < matrix.num_data(); ++i) {
    out << matrix.addresses()[i] << '\t';
    write_joined(out, matrix.row(i));
    out << '\n';
  }
}

CtfFile read_ctf(std::istream& in) {
  CtfFile f;
  f.header = ArtifactHeader::read(in, "ctf");
  const auto n = parse_number<std::uint32_t>(f.header.require("num_transactions"), 0, "num_transactions");
  std::vector<BlockAddress> addrs;
  std::vector<std::vector<std::uint32_t>> rows;
  for_each_tab_line(in, [&](std::string_view a, std::string_view list, std::size_t line_no) {
    addrs.push_back(parse_number<BlockAddress>(a, line_no, "block address"));
    rows.push_back(parse_numbers<std::uint32_t>(list, line_no, "transaction index"));
  });
  f.matrix = CtfMatrix::from_rows(n, std::move(addrs), std::move(rows));
  return f;
}

void write_chunks(std::ostream& out, const ArtifactHeader& header, std::span<const Chunk> chunks) {
  ArtifactHeader h = header;
  h.set("chunks", std::to_string(chunks.size()));
  h.write(out);
  for (const auto& c : chunks) {
    out << c.id << '\t';
    write_joined(out, c.members);
    out << '\n';
  }
}

ChunkFile read_chunks(std::istream& in) {
  ChunkFile f;
  f.header = ArtifactHeader::read(in, "chunks");
  for_each_tab_line(in, [&](std::string_view id, std::string_view list, std::size_t line_no) {
    const auto cid = parse_number<std::uint32_t>(id, line_no, "chunk id");
    if (cid != f.chunks.size()) throw ParseError(line_no, "chunk ids must be consecutive from 0");
    f.chunks.push_back(parse_numbers<BlockAddress>(list, line_no, "block address"));
  });
  return f;
}

void write_grouping(std::ostream& out, const ArtifactHeader& header, const Grouping& grouping) {
  ArtifactHeader h = header;
  h.set("groups", std::to_string(grouping.groups.size()));
  h.write(out);
  out << "group_id,block_address\n";
  for (const auto& g : grouping.groups)
    for (auto a : g.members) out << g.id << ',' << a << '\n';
}

GroupingFile read_grouping(std::istream& in) {
  GroupingFile f;
  f.header = ArtifactHeader::read(in, "grouping");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#' || line == "group_id,block_address") continue;
    auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError(line_no, "expected group_id,block_address");
    const auto g = parse_number<std::uint32_t>(std::string_view(line).substr(0, comma), line_no, "group id");
    const auto a = parse_number<BlockAddress>(std::string_view(line).substr(comma + 1), line_no, "block address");
    if (g >= f.groups.size()) f.groups.resize(g + 1);
    f.groups[g].push_back(a);
  }
  return f;
}

}  // namespace ctdgm
