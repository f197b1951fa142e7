// Command-line front end: one subcommand per pipeline stage plus the
// end-to-end `pipeline` and `sweep` drivers.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ctdgm/artifacts.hpp"
#include "ctdgm/cache_sim.hpp"
#include "ctdgm/chunker.hpp"
#include "ctdgm/config.hpp"
#include "ctdgm/ctf.hpp"
#include "ctdgm/error.hpp"
#include "ctdgm/grouper.hpp"
#include "ctdgm/locality.hpp"
#include "ctdgm/pipeline.hpp"
#include "ctdgm/trace_io.hpp"
#include "ctdgm/transactions.hpp"

namespace fs = std::filesystem;
using namespace ctdgm;

namespace {

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

struct TraceInput {
  std::vector<std::string> files;
  std::string synthetic;
  std::uint64_t seed = 1;
  bool skip_malformed = false;
  std::string ops = "both";
  std::string host;
  std::optional<std::uint32_t> disk;

  void add_to(CLI::App* cmd, bool allow_synthetic) {
    cmd->add_option("--trace", files, "MSR-format CSV file(s), concatenated in order");
    if (allow_synthetic) {
      cmd->add_option("--synthetic", synthetic, "synthetic trace spec (key=value file)");
      cmd->add_option("--seed", seed, "seed for the synthetic generator");
    }
    cmd->add_flag("--skip_malformed", skip_malformed, "skip and count malformed lines instead of failing");
    cmd->add_option("--ops", ops, "read|write|both");
    cmd->add_option("--host", host, "keep only this Hostname");
    cmd->add_option("--disk", disk, "keep only this DiskNumber");
  }

  PipelineConfig as_config() const {
    PipelineConfig c;
    for (const auto& f : files) c.traces.emplace_back(f);
    if (!synthetic.empty()) c.synthetic = synthetic;
    c.seed = seed;
    c.load.skip_malformed = skip_malformed;
    c.load.ops = parse_ops_filter(ops);
    if (!host.empty()) c.load.host = host;
    c.load.disk = disk;
    if (c.traces.empty() == !c.synthetic) throw ConfigError("give either --trace or --synthetic");
    return c;
  }

  Trace load() const { return load_input(as_config()); }
};

void print_report(const GroupingReport& r) {
  std::cout << "groups " << r.group_count << "  chunks " << r.chunk_count << "  data " << r.data_count << '\n';
  std::cout << "group size histogram (data per group: groups)\n";
  for (const auto& [size, n] : r.size_histogram) std::cout << "  " << size << ": " << n << '\n';
}

// ---------------------------------------------------------------- ingest

struct IngestArgs {
  TraceInput input;
  std::string out_dir;
  std::optional<std::size_t> train_count;
  std::optional<double> train_fraction;
};

void run_ingest(const IngestArgs& a) {
  auto cfg = a.input.as_config();
  std::size_t skipped = 0, filtered = 0;
  Trace trace;
  std::vector<std::vector<BlockAddress>> planted;
  if (cfg.synthetic) {
    auto spec = parse_synthetic_spec(KeyValues::load(*cfg.synthetic));
    spec.rng_seed = cfg.seed;
    auto syn = synthesize_trace(spec);
    trace = std::move(syn.trace);
    planted = std::move(syn.planted);
  } else {
    for (const auto& f : cfg.traces) {
      auto loaded = load_trace(f, cfg.load);
      skipped += loaded.skipped;
      filtered += loaded.filtered;
      trace.records.insert(trace.records.end(), loaded.trace.records.begin(), loaded.trace.records.end());
    }
  }
  const fs::path dir = a.out_dir;
  fs::create_directories(dir);
  if (a.train_count || a.train_fraction) {
    const auto n = a.train_count ? *a.train_count : train_count_from_fraction(trace.size(), *a.train_fraction);
    auto [train, test] = split_trace(trace, n);
    save_trace_csv(dir / "train.csv", train);
    save_trace_csv(dir / "test.csv", test);
    std::cout << "train " << train.size() << " records, test " << test.size() << " records\n";
  } else {
    save_trace_csv(dir / "trace.csv", trace);
    std::cout << trace.size() << " records\n";
  }
  if (!planted.empty()) {
    auto out = open_output(dir / "planted.csv");
    out << "group_id,block_address\n";
    for (std::size_t g = 0; g < planted.size(); ++g)
      for (auto addr : planted[g]) out << g << ',' << addr << '\n';
  }
  if (skipped || filtered) std::cout << "skipped " << skipped << " lines, filtered " << filtered << '\n';
}

// ---------------------------------------------------------------- extract

struct ExtractArgs {
  TraceInput input;
  std::string M = "1M";
  std::string mode = "cumulative";
  std::string out;
};

void run_extract(const ExtractArgs& a) {
  ExtractorConfig ex;
  ex.window_bytes = parse_bytes(a.M, "M");
  ex.mode = parse_extract_mode(a.mode);
  validate(ex);
  const auto cfg = a.input.as_config();
  const auto trace = load_input(cfg);
  const auto txns = extract_transactions(trace, ex);
  const auto header = make_transactions_header(trace, ex, cfg.load.ops, txns);
  auto out = open_output(a.out);
  write_transactions(out, header, txns);
  std::cout << txns.size() << " transactions" << (!txns.empty() && txns.back().partial ? " (last partial)" : "")
            << '\n';
}

// ---------------------------------------------------------------- ctf

struct CtfArgs {
  std::string transactions;
  bool include_partial = false;
  std::string out;
};

void run_ctf(const CtfArgs& a) {
  auto in = open_input(a.transactions);
  auto log = read_transactions(in);
  const auto used = full_transactions(std::move(log.transactions), a.include_partial);
  const auto ctf = build_ctf(used);
  const auto header = make_ctf_header(log.header, a.include_partial, ctf);
  auto out = open_output(a.out);
  write_ctf(out, header, ctf);
  std::cout << ctf.num_data() << " data over " << ctf.num_transactions() << " transactions\n";
}

// ---------------------------------------------------------------- chunk

struct ChunkArgs {
  std::string ctf;
  std::uint64_t q = 64;
  double p = 2.0;
  double sigma = 0.1;
  std::string distance = "symdiff";
  std::string Q;
  std::string out;
};

void run_chunk(const ChunkArgs& a) {
  ChunkerConfig cc;
  cc.q = a.q;
  cc.p = a.p;
  cc.sigma = a.sigma;
  cc.metric = parse_distance_metric(a.distance);
  validate(cc);
  auto in = open_input(a.ctf);
  auto f = read_ctf(in);
  const std::uint64_t Q =
      a.Q.empty() ? parse_u64(f.header.require("max_address"), "max_address") + 1 : parse_bytes(a.Q, "Q");
  const auto chunks = chunk_all(f.matrix, cc, Q);
  const auto header = make_chunks_header(f.header, cc, Q, chunks.chunks.size());
  auto out = open_output(a.out);
  write_chunks(out, header, chunks.chunks);
  std::cout << chunks.chunks.size() << " chunks from " << chunks.chunk_of.size() << " data\n";
}

// ---------------------------------------------------------------- group

struct GroupArgs {
  std::string transactions;
  std::string chunks;
  double alpha = 0.5;
  double mu = 0.5;
  std::string sort = "descending";
  std::string out;
};

void run_group(const GroupArgs& a) {
  GrouperConfig gc{a.alpha, a.mu};
  validate(gc);
  const auto order = parse_relation_order(a.sort);
  auto tin = open_input(a.transactions);
  auto log = read_transactions(tin);
  auto cin = open_input(a.chunks);
  auto cf = read_chunks(cin);
  if (cf.header.require("transactions_hash") != log.header.config_hash())
    throw DataError("chunks were not built from this transaction log (transactions_hash " +
                    cf.header.require("transactions_hash") + " vs " + log.header.config_hash() + ")");
  require_same_lineage(log.header, cf.header);

  const bool include_partial = cf.header.require("include_partial") == "1";
  const auto used = full_transactions(std::move(log.transactions), include_partial);
  std::vector<Chunk> chunks(cf.chunks.size());
  std::unordered_map<BlockAddress, std::uint32_t> chunk_of;
  for (std::uint32_t i = 0; i < chunks.size(); ++i) {
    chunks[i].id = i;
    chunks[i].members = std::move(cf.chunks[i]);
    for (auto addr : chunks[i].members) chunk_of[addr] = i;
  }
  const auto counts = count_cooccurrence(used, chunk_of, chunks.size());
  const auto relations = legal_relations(counts, gc.alpha, order);
  const auto grouping = merge_groups(relations, chunks, gc.mu);
  const auto header = make_grouping_header(cf.header, gc, order, grouping.groups.size());
  auto out = open_output(a.out);
  write_grouping(out, header, grouping);
  print_report(grouping_report(grouping));
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  TraceInput input;
  std::vector<std::string> catalog_traces;
  std::string grouping;
  std::string fractions = "0.001,0.002,0.004,0.008,0.016,0.032,0.064,0.128";
  std::string capacity;
  std::string policies = "lru,fifo,group-prefetch,group-merged";
  std::string write_policy = "allocate";
  std::string out;
  std::string json;
  std::size_t rolling_window = 0;
  std::string rolling_out;
  std::string rolling_policy = "group-merged";
  double rolling_fraction = 0.001;
};

void run_simulate(const SimulateArgs& a) {
  const auto policies = parse_policy_list(a.policies);
  const auto wp = parse_write_policy(a.write_policy);
  const auto fractions = parse_double_list(a.fractions, "fractions");
  for (double f : fractions)
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("capacity fraction must be in (0,1]");
  bool needs_groups = false;
  for (auto p : policies) needs_groups |= p == Policy::GroupPrefetch || p == Policy::GroupMerged;

  const auto trace = a.input.load();
  SizeCatalog catalog = SizeCatalog::from_trace(trace);
  for (const auto& f : a.catalog_traces) {
    auto c = a.input.as_config();
    c.traces = {fs::path(f)};
    catalog.add(load_input(c));
  }

  std::optional<GroupingFile> gf;
  PrefetchGroups groups;
  ArtifactHeader header("metrics");
  if (!a.grouping.empty()) {
    auto in = open_input(a.grouping);
    gf = read_grouping(in);
    groups = PrefetchGroups::from_lists(gf->groups);
    header = make_metrics_header(gf->header, trace, catalog, fractions, policies, wp);
  } else if (needs_groups) {
    throw ConfigError("group policies need --grouping");
  }

  std::vector<SimMetrics> rows;
  if (!a.capacity.empty()) {
    const auto bytes = parse_bytes(a.capacity, "capacity");
    for (auto p : policies) {
      SimConfig sc;
      sc.policy = p;
      sc.capacity_bytes = bytes;
      sc.groups = &groups;
      sc.catalog = &catalog;
      sc.write_policy = wp;
      rows.push_back(simulate(trace, sc));
    }
  } else {
    rows = sweep(trace, catalog, &groups, fractions, policies, wp);
  }

  if (!a.out.empty()) {
    auto out = open_output(a.out);
    if (gf) header.write(out);
    write_metrics_csv(out, rows);
  } else {
    write_metrics_csv(std::cout, rows);
  }
  if (!a.json.empty()) open_output(a.json) << metrics_json(rows);

  if (a.rolling_window > 0) {
    SimConfig sc;
    sc.policy = parse_policy(a.rolling_policy);
    sc.capacity_fraction = a.rolling_fraction;
    sc.groups = &groups;
    sc.catalog = &catalog;
    sc.write_policy = wp;
    const auto series = rolling_hit_rate(trace, sc, a.rolling_window);
    if (a.rolling_out.empty()) {
      write_rolling_csv(std::cout, series);
    } else {
      auto out = open_output(a.rolling_out);
      write_rolling_csv(out, series);
    }
  }
}

// ---------------------------------------------------------------- analyze

struct AnalyzeArgs {
  TraceInput input;
  std::string M = "1M";
  std::string mode = "cumulative";
  std::string limits = "20,50,100,150";
  std::size_t min_occurrences = 2;
  std::string edges;
  std::string variant = "directed";
  std::size_t max_pairs = 0;
  std::string histogram_out;
  std::string gap_out;
  std::string gap_detail_out;
};

void run_analyze(const AnalyzeArgs& a) {
  const auto trace = a.input.load();
  StrengthVariant variant;
  if (a.variant == "directed") {
    variant = StrengthVariant::Directed;
  } else if (a.variant == "symmetric") {
    variant = StrengthVariant::Symmetric;
  } else {
    throw ConfigError("--variant must be directed or symmetric");
  }
  std::vector<std::uint64_t> edges;
  for (const auto& e : split_list(a.edges)) edges.push_back(parse_bytes(e, "edge"));

  const auto hist = related_pair_distance_histogram(trace, AdjacencyRule{a.min_occurrences}, edges);
  {
    std::ofstream file;
    if (!a.histogram_out.empty()) file = open_output(a.histogram_out);
    std::ostream& out = a.histogram_out.empty() ? std::cout : file;
    out << "bucket_lo,bucket_hi,count,cdf\n";
    for (const auto& b : hist.buckets) {
      out << b.lo << ',';
      if (b.hi == UINT64_MAX) {
        out << "inf";
      } else {
        out << b.hi;
      }
      out << ',' << b.count << ',' << b.cdf << '\n';
    }
  }

  ExtractorConfig ex;
  ex.window_bytes = parse_bytes(a.M, "M");
  ex.mode = parse_extract_mode(a.mode);
  validate(ex);
  const auto txns = extract_transactions(trace, ex);
  const auto pairs = cooccurring_pairs(txns, a.max_pairs);
  const auto index = AccessIndex::build(trace);
  const auto limits = parse_double_list(a.limits, "limits");
  const auto report = access_count_gap_report(index, pairs, limits, variant);

  std::ofstream file;
  if (!a.gap_out.empty()) file = open_output(a.gap_out);
  std::ostream& out = a.gap_out.empty() ? std::cout : file;
  // An undefined fraction (no candidate pair under the limit) is left blank.
  out << "W_limit,equal_fraction\n";
  for (const auto& row : report) {
    out << row.limit << ',';
    if (row.equal_fraction) out << *row.equal_fraction;
    out << '\n';
  }
  if (a.gap_detail_out.empty()) return;
  auto detail = open_output(a.gap_detail_out);
  detail << "W_limit,pairs,equal,count_gap,gap_pairs\n";
  for (const auto& row : report)
    for (const auto& [gap, n] : row.gap_counts)
      detail << row.limit << ',' << row.pairs << ',' << row.equal << ',' << gap << ',' << n << '\n';
}

// ---------------------------------------------------------------- pipeline / sweep

struct ConfigArgs {
  std::string config;
  std::map<std::string, std::string> overrides;
  std::vector<std::string> sets;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--config", config, "key=value config file");
    cmd->add_option("--set", sets, "KEY=VALUE override (repeatable)");
    for (const auto& key : pipeline_keys()) {
      auto* opt = cmd->add_option_function<std::string>(
          "--" + key, [this, key](const std::string& v) { overrides[key] = v; }, "override config key " + key);
      opt->type_name("VALUE");
    }
  }

  PipelineConfig resolve() const {
    KeyValues kv = config.empty() ? KeyValues{} : KeyValues::load(config);
    for (const auto& s : sets) {
      auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects KEY=VALUE, got '" + s + "'");
      kv.set(std::string(trim(std::string_view(s).substr(0, eq))), std::string(trim(std::string_view(s).substr(eq + 1))));
    }
    for (const auto& [k, v] : overrides) kv.set(k, v);
    return load_pipeline_config(kv);
  }
};

void run_pipeline_cmd(const ConfigArgs& a) {
  const auto cfg = a.resolve();
  const auto m = run_pipeline(cfg);
  std::cout << "config_hash " << m.config_hash << '\n';
  for (const auto& e : m.artifacts) std::cout << "  " << e.name << "  " << e.sha256.substr(0, 16) << '\n';
  std::cout << "manifest " << (cfg.out / "manifest.json").string() << '\n';
}

struct SweepArgs {
  ConfigArgs config;
  std::string axis;
  std::string values;
  std::string csv;
  bool serial = false;
};

void run_sweep_cmd(const SweepArgs& a) {
  const auto base = a.config.resolve();
  const auto axis = parse_sweep_axis(a.axis);
  std::vector<double> values;
  for (const auto& v : split_list(a.values))
    values.push_back(axis == SweepAxis::M ? static_cast<double>(parse_bytes(v, "M")) : parse_double(v, "value"));
  for (double v : values) (void)with_axis_value(base, axis, v);
  const auto trace = load_input(base);
  const auto rows = sweep_parameters(base, trace, axis, values, !a.serial);
  const fs::path out_path = a.csv.empty() ? base.out / ("sweep_" + std::string(to_string(axis)) + ".csv") : fs::path(a.csv);
  auto out = open_output(out_path);
  write_sweep_csv(out, rows);
  write_sweep_csv(std::cout, rows);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cache-transaction based data grouping and group prefetch simulation"};
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "load, filter and split a trace (or synthesize one)");
  ingest.input.add_to(c_ingest, true);
  c_ingest->add_option("--out", ingest.out_dir, "output directory")->required();
  c_ingest->add_option("--train_count", ingest.train_count, "records in the training prefix");
  c_ingest->add_option("--train_fraction", ingest.train_fraction, "fraction of records in the training prefix");

  ExtractArgs extract;
  auto* c_extract = app.add_subcommand("extract", "extract cache transactions from a trace");
  extract.input.add_to(c_extract, true);
  c_extract->add_option("--M", extract.M, "FIFO window size in bytes (K/M/G suffixes)");
  c_extract->add_option("--mode", extract.mode, "cumulative|snapshot");
  c_extract->add_option("--out", extract.out, "transaction log")->required();

  CtfArgs ctf;
  auto* c_ctf = app.add_subcommand("ctf", "build per-datum transaction features");
  c_ctf->add_option("--transactions", ctf.transactions, "transaction log")->required();
  c_ctf->add_flag("--include_partial", ctf.include_partial, "keep the end-of-trace partial transaction");
  c_ctf->add_option("--out", ctf.out, "feature matrix")->required();

  ChunkArgs chunk;
  auto* c_chunk = app.add_subcommand("chunk", "pre-block and cluster data into chunks");
  c_chunk->add_option("--ctf", chunk.ctf, "feature matrix")->required();
  c_chunk->add_option("--q", chunk.q, "address regions");
  c_chunk->add_option("--p", chunk.p, "frequency division coefficient (> 1)");
  c_chunk->add_option("--sigma", chunk.sigma, "strong relation threshold in [0,1]");
  c_chunk->add_option("--distance", chunk.distance, "symdiff|euclidean");
  c_chunk->add_option("--Q", chunk.Q, "address space size (default: largest address + 1)");
  c_chunk->add_option("--out", chunk.out, "chunk file")->required();

  GroupArgs group;
  auto* c_group = app.add_subcommand("group", "merge chunks into groups");
  c_group->add_option("--transactions", group.transactions, "transaction log")->required();
  c_group->add_option("--chunks", group.chunks, "chunk file")->required();
  c_group->add_option("--alpha", group.alpha, "legal relation ratio in [0,1]");
  c_group->add_option("--mu", group.mu, "group merge ratio in [0,1]");
  c_group->add_option("--sort", group.sort, "descending|ascending");
  c_group->add_option("--out", group.out, "grouping CSV")->required();

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "replay a trace through the cache policies");
  sim.input.add_to(c_sim, true);
  c_sim->add_option("--catalog_trace", sim.catalog_traces, "extra traces counted in the total data size");
  c_sim->add_option("--grouping", sim.grouping, "grouping CSV (needed by group policies)");
  c_sim->add_option("--fractions", sim.fractions, "capacity fractions of the total data size");
  c_sim->add_option("--capacity", sim.capacity, "fixed capacity in bytes instead of fractions");
  c_sim->add_option("--policies", sim.policies, "lru,fifo,group-prefetch,group-merged");
  c_sim->add_option("--write_policy", sim.write_policy, "allocate|around");
  c_sim->add_option("--out", sim.out, "metrics CSV (default stdout)");
  c_sim->add_option("--json", sim.json, "metrics JSON");
  c_sim->add_option("--rolling_window", sim.rolling_window, "accesses per rolling hit-rate window");
  c_sim->add_option("--rolling_out", sim.rolling_out, "rolling series CSV (default stdout)");
  c_sim->add_option("--rolling_policy", sim.rolling_policy, "policy for the rolling series");
  c_sim->add_option("--rolling_fraction", sim.rolling_fraction, "capacity fraction for the rolling series");

  AnalyzeArgs analyze;
  auto* c_an = app.add_subcommand("analyze", "locality statistics: related-pair distances and W gap report");
  analyze.input.add_to(c_an, true);
  c_an->add_option("--M", analyze.M, "window for candidate pairs");
  c_an->add_option("--mode", analyze.mode, "cumulative|snapshot");
  c_an->add_option("--limits", analyze.limits, "W limits");
  c_an->add_option("--min_occurrences", analyze.min_occurrences, "minimum leader occurrences");
  c_an->add_option("--edges", analyze.edges, "histogram bucket edges (default powers of two)");
  c_an->add_option("--variant", analyze.variant, "directed|symmetric");
  c_an->add_option("--max_pairs", analyze.max_pairs, "cap on candidate pairs (0 = all)");
  c_an->add_option("--histogram_out", analyze.histogram_out, "distance histogram CSV");
  c_an->add_option("--gap_out", analyze.gap_out, "gap report CSV");
  c_an->add_option("--gap_detail_out", analyze.gap_detail_out, "per-limit access count gap counts CSV");

  ConfigArgs pipe;
  auto* c_pipe = app.add_subcommand("pipeline", "run every stage and write all artifacts");
  pipe.add_to(c_pipe);

  SweepArgs sweep_args;
  auto* c_sweep = app.add_subcommand("sweep", "grouping reports over one parameter axis");
  sweep_args.config.add_to(c_sweep);
  c_sweep->add_option("--axis", sweep_args.axis, "sigma|mu|M")->required();
  c_sweep->add_option("--values", sweep_args.values, "comma-separated axis values")->required();
  c_sweep->add_option("--csv", sweep_args.csv, "output CSV (default OUT/sweep_AXIS.csv)");
  c_sweep->add_flag("--serial", sweep_args.serial, "run values one after another");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (c_ingest->parsed()) run_ingest(ingest);
    else if (c_extract->parsed()) run_extract(extract);
    else if (c_ctf->parsed()) run_ctf(ctf);
    else if (c_chunk->parsed()) run_chunk(chunk);
    else if (c_group->parsed()) run_group(group);
    else if (c_sim->parsed()) run_simulate(sim);
    else if (c_an->parsed()) run_analyze(analyze);
    else if (c_pipe->parsed()) run_pipeline_cmd(pipe);
    else if (c_sweep->parsed()) run_sweep_cmd(sweep_args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const InvariantError& e) {
    std::cerr << "invariant violated: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
