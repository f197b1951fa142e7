#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "ctdgm/error.hpp"
#include "ctdgm/trace_io.hpp"

using namespace ctdgm;

TEST_CASE("parse_record follows the MSR column order") {
  const auto r = parse_record("128166372003061629,hm,0,Read,383496192,32768,1331");
  CHECK(r.timestamp == 128166372003061629ull);
  CHECK(r.block_address == 383496192ull);
  CHECK(r.size == 32768);
  CHECK(r.op == Op::Read);

  const auto w = parse_record("1,h,0,Write,0,4096,0");
  CHECK(w == AccessRecord{1, 0, 4096, Op::Write});
  CHECK(parse_record("1,h,0,wRiTe,0,1,0\r").op == Op::Write);
}

TEST_CASE("parse_record rejects bad lines with their line number") {
  CHECK_THROWS_AS(parse_record("1,h,0,Read,0,-5,0"), RejectedRecord);
  CHECK_THROWS_AS(parse_record("1,h,0,Read,0,0,0"), RejectedRecord);
  CHECK_THROWS_AS(parse_record("1,h,0,Read,18446744073709551615,2,0"), RejectedRecord);
  CHECK_THROWS_AS(parse_record("1,h,0,Read,0,4096"), ParseError);
  CHECK_THROWS_AS(parse_record("1,h,0,Read,0,4096,0,9"), ParseError);
  CHECK_THROWS_AS(parse_record("1,h,0,Trim,0,4096,0"), ParseError);
  CHECK_THROWS_AS(parse_record("1,h,0,Read,abc,4096,0"), ParseError);
  try {
    parse_record("1,h,0,Read,x,1,0", 42);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 42);
  }
}

TEST_CASE("read_trace keeps file order, skips a header and counts skipped lines") {
  std::istringstream three("3,h,0,Read,30,1,0\n1,h,0,Read,10,1,0\n2,h,0,Write,20,1,0\n");
  const auto t = read_trace(three).trace;
  REQUIRE(t.size() == 3);
  CHECK(t.records[0].block_address == 30);
  CHECK(t.records[1].block_address == 10);
  CHECK(t.records[2].op == Op::Write);

  std::istringstream with_header("Timestamp,Hostname,DiskNumber,Type,Offset,Size,ResponseTime\n1,h,0,Read,0,8,0\n");
  CHECK(read_trace(with_header).trace.size() == 1);

  const std::string bad = "1,h,0,Read,0,8,0\n2,h,0,Read,zz,8,0\n3,h,0,Read,16,8,0\n";
  std::istringstream strict(bad);
  CHECK_THROWS_AS(read_trace(strict), ParseError);
  std::istringstream lenient(bad);
  const auto loaded = read_trace(lenient, LoadOptions{.skip_malformed = true});
  CHECK(loaded.trace.size() == 2);
  CHECK(loaded.skipped == 1);
}

TEST_CASE("empty or fully filtered traces raise EmptyTraceError") {
  std::istringstream empty("");
  CHECK_THROWS_AS(read_trace(empty), EmptyTraceError);
  std::istringstream writes("1,h,0,Write,0,8,0\n");
  CHECK_THROWS_AS(read_trace(writes, LoadOptions{.ops = OpsFilter::Read}), EmptyTraceError);
  CHECK_THROWS_AS(load_trace("/nonexistent/trace.csv"), DataError);
}

TEST_CASE("ops, host and disk filters") {
  const std::string text = "1,a,0,Read,0,8,0\n2,a,1,Write,8,8,0\n3,b,0,Read,16,8,0\n";
  std::istringstream r(text);
  auto reads = read_trace(r, LoadOptions{.ops = OpsFilter::Read});
  CHECK(reads.trace.size() == 2);
  CHECK(reads.filtered == 1);
  std::istringstream h(text);
  CHECK(read_trace(h, LoadOptions{.host = std::string("a")}).trace.size() == 2);
  std::istringstream d(text);
  CHECK(read_trace(d, LoadOptions{.disk = 1u}).trace.size() == 1);
  CHECK(parse_ops_filter("READ") == OpsFilter::Read);
  CHECK_THROWS_AS(parse_ops_filter("all"), ConfigError);
}

TEST_CASE("CSV round trip is record-wise identical") {
  std::mt19937_64 rng(5);
  Trace t;
  t.source_label = "x,y";
  for (int i = 0; i < 500; ++i)
    t.records.push_back({rng() >> 8, (rng() >> 20) * 512, 1 + rng() % 100000, rng() % 2 ? Op::Read : Op::Write});
  std::stringstream buf;
  write_trace_csv(buf, t);
  const auto back = read_trace(buf).trace;
  CHECK(back.records == t.records);

  const auto path = std::filesystem::temp_directory_path() / "ctdgm_roundtrip.csv";
  save_trace_csv(path, t);
  CHECK(load_trace(path).trace.records == t.records);
  std::filesystem::remove(path);
}

TEST_CASE("split_trace is a prefix split that partitions the input") {
  Trace t;
  for (std::uint64_t i = 0; i < 10; ++i) t.records.push_back({i, i * 10, 1, Op::Read});
  auto [a, b] = split_trace(t, 3);
  CHECK(a.size() == 3);
  CHECK(b.size() == 7);
  CHECK(a.records.front().timestamp == 0);
  CHECK(b.records.front().timestamp == 3);
  auto joined = a.records;
  joined.insert(joined.end(), b.records.begin(), b.records.end());
  CHECK(joined == t.records);
  CHECK_THROWS_AS(split_trace(t, 10), ConfigError);
  CHECK_THROWS_AS(split_trace(t, 0), ConfigError);
  CHECK(train_count_from_fraction(10, 0.7) == 7);
  CHECK_THROWS_AS(train_count_from_fraction(10, 1.0), ConfigError);
}
