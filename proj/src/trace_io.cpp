#include "ctdgm/trace_io.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "ctdgm/error.hpp"

namespace ctdgm {

namespace {

constexpr std::size_t kFieldCount = 7;

struct ParsedLine {
  AccessRecord record;
  std::string_view host;
  std::string_view disk;
};

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}

template <typename T>
bool parse_int(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

std::array<std::string_view, kFieldCount> split_fields(std::string_view line, std::size_t line_no) {
  std::array<std::string_view, kFieldCount> fields{};
  std::size_t n = 0;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (n == kFieldCount)
      throw ParseError(line_no, "expected 7 comma-separated fields, got more");
    fields[n++] = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  if (n != kFieldCount)
    throw ParseError(line_no, "expected 7 comma-separated fields, got " + std::to_string(n));
  return fields;
}

ParsedLine parse_line(std::string_view line, std::size_t line_no) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  auto f = split_fields(line, line_no);
  ParsedLine out;
  if (!parse_int(f[0], out.record.timestamp)) throw ParseError(line_no, "non-numeric timestamp");
  auto type = trim(f[3]);
  if (iequals(type, "read")) {
    out.record.op = Op::Read;
  } else if (iequals(type, "write")) {
    out.record.op = Op::Write;
  } else {
    throw ParseError(line_no, "unknown access type '" + std::string(type) + "'");
  }
  if (!parse_int(f[4], out.record.block_address)) throw ParseError(line_no, "non-numeric offset");
  std::int64_t size = 0;
  if (!parse_int(f[5], size)) throw ParseError(line_no, "non-numeric size");
  if (size <= 0) throw RejectedRecord(line_no, "size must be positive, got " + std::to_string(size));
  out.record.size = static_cast<std::uint64_t>(size);
  if (out.record.block_address > std::numeric_limits<std::uint64_t>::max() - out.record.size)
    throw RejectedRecord(line_no, "offset + size overflows");
  out.host = trim(f[1]);
  out.disk = trim(f[2]);
  return out;
}

bool looks_like_header(std::string_view line) {
  auto comma = line.find(',');
  std::uint64_t ts = 0;
  return !parse_int(line.substr(0, comma), ts);
}

}  // namespace

OpsFilter parse_ops_filter(std::string_view text) {
  if (iequals(text, "read")) return OpsFilter::Read;
  if (iequals(text, "write")) return OpsFilter::Write;
  if (iequals(text, "both")) return OpsFilter::Both;
  throw ConfigError("ops filter must be read|write|both, got '" + std::string(text) + "'");
}

std::string_view to_string(OpsFilter f) {
  switch (f) {
    case OpsFilter::Read: return "read";
    case OpsFilter::Write: return "write";
    case OpsFilter::Both: return "both";
  }
  return "both";
}

AccessRecord parse_record(std::string_view line, std::size_t line_no) {
  return parse_line(line, line_no).record;
}

LoadedTrace read_trace(std::istream& in, const LoadOptions& opts, std::string label) {
  LoadedTrace out;
  out.trace.source_label = std::move(label);
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (first) {
      first = false;
      if (looks_like_header(line)) continue;
    }
    ParsedLine parsed;
    try {
      parsed = parse_line(line, line_no);
    } catch (const DataError&) {
      if (!opts.skip_malformed) throw;
      ++out.skipped;
      continue;
    }
    const auto& r = parsed.record;
    bool keep = opts.ops == OpsFilter::Both || (opts.ops == OpsFilter::Read && r.op == Op::Read) ||
                (opts.ops == OpsFilter::Write && r.op == Op::Write);
    if (keep && opts.host && parsed.host != *opts.host) keep = false;
    if (keep && opts.disk) {
      std::uint32_t disk = 0;
      keep = parse_int(parsed.disk, disk) && disk == *opts.disk;
    }
    if (!keep) {
      ++out.filtered;
      continue;
    }
    out.trace.records.push_back(r);
  }
  if (out.trace.empty()) throw EmptyTraceError("trace '" + out.trace.source_label + "' has no valid records");
  return out;
}

LoadedTrace load_trace(const std::filesystem::path& path, const LoadOptions& opts) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read trace file " + path.string());
  return read_trace(in, opts, path.filename().string());
}

void write_trace_csv(std::ostream& out, const Trace& trace) {
  std::string host = trace.source_label.empty() ? std::string("trace") : trace.source_label;
  std::replace_if(host.begin(), host.end(), [](char c) { return c == ',' || c == '\n' || c == '\r'; }, '_');
  for (const auto& r : trace.records) {
    out << r.timestamp << ',' << host << ",0," << (r.op == Op::Read ? "Read" : "Write") << ','
        << r.block_address << ',' << r.size << ",0\n";
  }
}

void save_trace_csv(const std::filesystem::path& path, const Trace& trace) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_trace_csv(out, trace);
}

std::pair<Trace, Trace> split_trace(const Trace& trace, std::size_t train_count) {
  if (train_count == 0 || train_count >= trace.size())
    throw ConfigError("train_count must be in (0, " + std::to_string(trace.size()) + "), got " +
                      std::to_string(train_count));
  Trace train{{trace.records.begin(), trace.records.begin() + static_cast<std::ptrdiff_t>(train_count)},
              trace.source_label + "[train]"};
  Trace test{{trace.records.begin() + static_cast<std::ptrdiff_t>(train_count), trace.records.end()},
             trace.source_label + "[test]"};
  return {std::move(train), std::move(test)};
}

std::size_t train_count_from_fraction(std::size_t trace_size, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ConfigError("train_fraction must be in (0,1), got " + std::to_string(fraction));
  return static_cast<std::size_t>(std::floor(static_cast<double>(trace_size) * fraction));
}

}  // namespace ctdgm
