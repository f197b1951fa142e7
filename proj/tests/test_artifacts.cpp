#include <doctest.h>

#include <sstream>

#include "ctdgm/artifacts.hpp"
#include "ctdgm/error.hpp"

using namespace ctdgm;

namespace {

ArtifactHeader sample_header(std::string kind = "transactions") {
  ArtifactHeader h(std::move(kind));
  h.set("M", "1048576");
  h.set("mode", "cumulative");
  h.set("input", "x.csv");
  return h;
}

std::string with_line_replaced(std::string text, const std::string& from, const std::string& to) {
  const auto pos = text.find(from);
  REQUIRE(pos != std::string::npos);
  return text.replace(pos, from.size(), to);
}

}  // namespace

TEST_CASE("sha256 known answers") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("trace digest covers every field and ignores the label") {
  Trace a;
  a.records = {{1, 4096, 512, Op::Read}, {2, 8192, 1024, Op::Write}};
  Trace b = a;
  b.source_label = "other";
  CHECK(trace_digest(a) == trace_digest(b));
  b.records[1].op = Op::Read;
  CHECK(trace_digest(a) != trace_digest(b));
  b = a;
  b.records[0].timestamp = 9;
  CHECK(trace_digest(a) != trace_digest(b));
}

TEST_CASE("header hash is order independent and tamper evident") {
  ArtifactHeader a("ctf");
  a.set("x", "1");
  a.set("y", "2");
  ArtifactHeader b("ctf");
  b.set("y", "2");
  b.set("x", "1");
  CHECK(a.config_hash() == b.config_hash());
  CHECK(a.config_hash().size() == 16);
  b.set("x", "3");
  CHECK(a.config_hash() != b.config_hash());

  std::ostringstream out;
  a.write(out);
  std::istringstream in(out.str());
  const auto r = ArtifactHeader::read(in, "ctf");
  CHECK(r.config_hash() == a.config_hash());
  CHECK(r.require("y") == "2");
  CHECK_FALSE(r.get("z").has_value());
  CHECK_THROWS_AS(r.require("z"), DataError);

  std::istringstream wrong_kind(out.str());
  CHECK_THROWS_AS(ArtifactHeader::read(wrong_kind, "chunks"), DataError);
  std::istringstream tampered(with_line_replaced(out.str(), "# y=2", "# y=5"));
  CHECK_THROWS_AS(ArtifactHeader::read(tampered, "ctf"), DataError);
}

TEST_CASE("lineage checks") {
  const auto up = sample_header();
  ArtifactHeader down("ctf");
  down.inherit(up);
  down.set("include_partial", "0");
  CHECK_NOTHROW(require_same_lineage(up, down));
  auto other = sample_header();
  other.set("M", "2097152");
  CHECK_THROWS_AS(require_same_lineage(other, down), DataError);
}

TEST_CASE("transaction log round trip") {
  auto h = sample_header();
  const std::vector<CacheTransaction> txns{{0, {5, 1, 9}, false}, {1, {7}, false}, {2, {3, 4}, true}};
  h.set("transactions", "3");
  h.set("partial_last", "1");
  std::ostringstream out;
  write_transactions(out, h, txns);
  std::istringstream in(out.str());
  const auto log = read_transactions(in);
  CHECK(log.transactions == txns);
  CHECK(log.header.config_hash() == h.config_hash());

  std::istringstream garbage(with_line_replaced(out.str(), "1\t7", "1\tseven"));
  CHECK_THROWS_AS(read_transactions(garbage), DataError);
}

TEST_CASE("ctf round trip") {
  const std::vector<CacheTransaction> txns{{0, {5, 1}, false}, {1, {1, 9}, false}};
  const auto m = build_ctf(txns);
  ArtifactHeader h("ctf");
  h.set("k", "v");
  std::ostringstream out;
  write_ctf(out, h, m);
  std::istringstream in(out.str());
  const auto f = read_ctf(in);
  CHECK(f.matrix.num_transactions() == 2);
  CHECK(f.matrix.reconstruct_transactions() == m.reconstruct_transactions());
  CHECK(f.matrix.vector_of(1).bits == std::vector<std::uint32_t>{0, 1});
}

TEST_CASE("chunks and grouping round trip") {
  std::vector<Chunk> chunks(2);
  chunks[0].id = 0;
  chunks[0].members = {1, 2};
  chunks[1].id = 1;
  chunks[1].members = {7};
  ArtifactHeader h("chunks");
  h.set("sigma", "0.1");
  std::ostringstream out;
  write_chunks(out, h, chunks);
  std::istringstream in(out.str());
  const auto cf = read_chunks(in);
  REQUIRE(cf.chunks.size() == 2);
  CHECK(cf.chunks[0] == std::vector<BlockAddress>{1, 2});
  CHECK(cf.chunks[1] == std::vector<BlockAddress>{7});
  std::istringstream gap(with_line_replaced(out.str(), "1\t7", "3\t7"));
  CHECK_THROWS_AS(read_chunks(gap), DataError);

  Grouping g;
  g.groups.resize(2);
  g.groups[0].id = 0;
  g.groups[0].members = {1, 2, 7};
  g.groups[1].id = 1;
  g.groups[1].members = {40};
  ArtifactHeader gh("grouping");
  gh.set("mu", "0.5");
  std::ostringstream gout;
  write_grouping(gout, gh, g);
  CHECK(gout.str().find("group_id,block_address\n0,1\n0,2\n0,7\n1,40\n") != std::string::npos);
  std::istringstream gin(gout.str());
  const auto gf = read_grouping(gin);
  REQUIRE(gf.groups.size() == 2);
  CHECK(gf.groups[0] == std::vector<BlockAddress>{1, 2, 7});
  CHECK(gf.groups[1] == std::vector<BlockAddress>{40});
}

TEST_CASE("missing input file") {
  CHECK_THROWS_AS(open_input("/nonexistent/definitely/missing.tsv"), DataError);
}
