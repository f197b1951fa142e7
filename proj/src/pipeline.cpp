#include "ctdgm/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <exception>
#include <fstream>
#include <functional>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ctdgm/error.hpp"

namespace ctdgm {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt_double(v[i]);
  return out;
}

std::string join_policies(const std::vector<Policy>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::string(to_string(v[i]));
  return out;
}

template <typename F>
auto in_stage(std::string_view stage, F&& f) -> decltype(f()) {
  const std::string prefix = std::string(stage) + ": ";
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const DataError& e) {
    throw DataError(prefix + e.what());
  } catch (const InvariantError& e) {
    throw InvariantError(prefix + e.what());
  } catch (const Error& e) {
    throw Error(prefix + e.what());
  } catch (const std::bad_alloc&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(prefix + e.what());
  }
}

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void write_file_atomically(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  auto tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    body(out);
    out.flush();
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

const std::vector<std::string>& pipeline_keys() {
  static const std::vector<std::string> keys{
      "trace", "synthetic", "skip_malformed", "ops",   "host",      "disk",     "train_count",
      "train_fraction", "M", "mode", "include_partial", "q", "p", "sigma", "distance", "Q", "alpha", "mu",
      "sort", "fractions", "policies", "write_policy", "out", "seed", "verify"};
  return keys;
}

PipelineConfig load_pipeline_config(const KeyValues& kv) {
  const auto& known = pipeline_keys();
  for (const auto& [k, v] : kv.entries())
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("unknown config key '" + k + "'");

  PipelineConfig c;
  if (auto t = kv.get("trace"); t && !trim(*t).empty())
    for (const auto& part : split_list(*t)) c.traces.emplace_back(part);
  if (auto s = kv.get("synthetic"); s && !trim(*s).empty()) c.synthetic = std::string(trim(*s));
  c.load.skip_malformed = kv.get_bool("skip_malformed", false);
  c.load.ops = parse_ops_filter(kv.get_string("ops", "both"));
  if (auto h = kv.get("host"); h && !h->empty()) c.load.host = *h;
  if (kv.contains("disk")) c.load.disk = static_cast<std::uint32_t>(kv.get_u64("disk", 0));
  if (kv.contains("train_count")) c.train_count = kv.get_u64("train_count", 0);
  c.train_fraction = kv.get_double("train_fraction", c.train_fraction);
  c.extractor.window_bytes = kv.get_bytes("M", c.extractor.window_bytes);
  c.extractor.mode = parse_extract_mode(kv.get_string("mode", "cumulative"));
  c.include_partial = kv.get_bool("include_partial", false);
  c.chunker.q = kv.get_u64("q", c.chunker.q);
  c.chunker.p = kv.get_double("p", c.chunker.p);
  c.chunker.sigma = kv.get_double("sigma", c.chunker.sigma);
  c.chunker.metric = parse_distance_metric(kv.get_string("distance", "symdiff"));
  c.Q = kv.get_bytes("Q", 0);
  c.grouper.alpha = kv.get_double("alpha", c.grouper.alpha);
  c.grouper.mu = kv.get_double("mu", c.grouper.mu);
  c.order = parse_relation_order(kv.get_string("sort", "descending"));
  if (kv.contains("fractions")) c.fractions = parse_double_list(*kv.get("fractions"), "fractions");
  if (kv.contains("policies")) c.policies = parse_policy_list(*kv.get("policies"));
  c.write_policy = parse_write_policy(kv.get_string("write_policy", "allocate"));
  c.out = kv.get_string("out", c.out.string());
  c.seed = kv.get_u64("seed", c.seed);
  c.verify = kv.get_bool("verify", true);
  validate(c);
  return c;
}

void validate(const PipelineConfig& c) {
  if (c.traces.empty() == !c.synthetic.has_value())
    throw ConfigError("exactly one of 'trace' or 'synthetic' must be given");
  if (!c.train_count && !(c.train_fraction > 0.0 && c.train_fraction < 1.0))
    throw ConfigError("train_fraction must be in (0,1), got " + fmt_double(c.train_fraction));
  if (c.train_count && *c.train_count == 0) throw ConfigError("train_count must be positive");
  validate(c.extractor);
  validate(c.chunker);
  validate(c.grouper);
  if (c.fractions.empty()) throw ConfigError("fractions must not be empty");
  for (double f : c.fractions)
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("capacity fraction must be in (0,1], got " + fmt_double(f));
  if (c.policies.empty()) throw ConfigError("policies must not be empty");
}

std::map<std::string, std::string> canonical_parameters(const PipelineConfig& c) {
  std::map<std::string, std::string> m;
  std::string traces;
  for (std::size_t i = 0; i < c.traces.size(); ++i) traces += (i ? "," : "") + c.traces[i].string();
  m["trace"] = traces;
  m["synthetic"] = c.synthetic ? c.synthetic->string() : "";
  m["skip_malformed"] = c.load.skip_malformed ? "1" : "0";
  m["ops"] = to_string(c.load.ops);
  m["host"] = c.load.host.value_or("");
  m["disk"] = c.load.disk ? std::to_string(*c.load.disk) : "";
  m["train_count"] = c.train_count ? std::to_string(*c.train_count) : "";
  m["train_fraction"] = c.train_count ? "" : fmt_double(c.train_fraction);
  m["M"] = std::to_string(c.extractor.window_bytes);
  m["mode"] = to_string(c.extractor.mode);
  m["include_partial"] = c.include_partial ? "1" : "0";
  m["q"] = std::to_string(c.chunker.q);
  m["p"] = fmt_double(c.chunker.p);
  m["sigma"] = fmt_double(c.chunker.sigma);
  m["distance"] = to_string(c.chunker.metric);
  m["Q"] = c.Q ? std::to_string(c.Q) : "auto";
  m["alpha"] = fmt_double(c.grouper.alpha);
  m["mu"] = fmt_double(c.grouper.mu);
  m["sort"] = to_string(c.order);
  m["fractions"] = join_doubles(c.fractions);
  m["policies"] = join_policies(c.policies);
  m["write_policy"] = to_string(c.write_policy);
  m["seed"] = c.synthetic ? std::to_string(c.seed) : "";
  return m;
}

std::string pipeline_config_hash(const PipelineConfig& cfg) {
  std::string canon;
  for (const auto& [k, v] : canonical_parameters(cfg)) canon += k + "=" + v + "\n";
  return sha256_hex(canon).substr(0, 16);
}

Trace load_input(const PipelineConfig& cfg) {
  if (cfg.synthetic) {
    auto spec = parse_synthetic_spec(KeyValues::load(*cfg.synthetic));
    spec.rng_seed = cfg.seed;
    auto syn = synthesize_trace(spec);
    syn.trace.source_label = "synthetic:" + cfg.synthetic->filename().string() + ":seed=" + std::to_string(cfg.seed);
    return std::move(syn.trace);
  }
  Trace all;
  for (const auto& path : cfg.traces) {
    auto loaded = load_trace(path, cfg.load);
    if (!all.source_label.empty()) all.source_label += "+";
    all.source_label += path.filename().string();
    all.records.insert(all.records.end(), loaded.trace.records.begin(), loaded.trace.records.end());
  }
  return all;
}

std::uint64_t resolve_Q(const PipelineConfig& cfg, const Trace& train) {
  if (cfg.Q) return cfg.Q;
  BlockAddress hi = 0;
  for (const auto& r : train.records) hi = std::max(hi, r.block_address);
  return hi + 1;
}

ArtifactHeader make_transactions_header(const Trace& train, const ExtractorConfig& ex, OpsFilter ops,
                                        std::span<const CacheTransaction> txns) {
  ArtifactHeader h("transactions");
  h.set("input", train.source_label);
  h.set("input_digest", trace_digest(train));
  h.set("input_records", std::to_string(train.size()));
  BlockAddress hi = 0;
  for (const auto& r : train.records) hi = std::max(hi, r.block_address);
  h.set("max_address", std::to_string(hi));
  h.set("ops", std::string(to_string(ops)));
  h.set("M", std::to_string(ex.window_bytes));
  h.set("mode", std::string(to_string(ex.mode)));
  h.set("transactions", std::to_string(txns.size()));
  h.set("partial_last", !txns.empty() && txns.back().partial ? "1" : "0");
  return h;
}

ArtifactHeader make_ctf_header(const ArtifactHeader& txn, bool include_partial, const CtfMatrix& ctf) {
  ArtifactHeader h("ctf");
  h.inherit(txn);
  h.set("transactions_hash", txn.config_hash());
  h.set("include_partial", include_partial ? "1" : "0");
  h.set("num_transactions", std::to_string(ctf.num_transactions()));
  return h;
}

ArtifactHeader make_chunks_header(const ArtifactHeader& ctf, const ChunkerConfig& cc, std::uint64_t Q,
                                  std::size_t num_chunks) {
  ArtifactHeader h("chunks");
  h.inherit(ctf);
  h.set("ctf_hash", ctf.config_hash());
  h.set("q", std::to_string(cc.q));
  h.set("p", fmt_double(cc.p));
  h.set("sigma", fmt_double(cc.sigma));
  h.set("distance", std::string(to_string(cc.metric)));
  h.set("Q", std::to_string(Q));
  h.set("chunks", std::to_string(num_chunks));
  return h;
}

ArtifactHeader make_grouping_header(const ArtifactHeader& chunks, const GrouperConfig& gc, RelationOrder order,
                                    std::size_t num_groups) {
  ArtifactHeader h("grouping");
  h.inherit(chunks);
  h.set("chunks_hash", chunks.config_hash());
  h.set("alpha", fmt_double(gc.alpha));
  h.set("mu", fmt_double(gc.mu));
  h.set("sort", std::string(to_string(order)));
  h.set("groups", std::to_string(num_groups));
  return h;
}

ArtifactHeader make_metrics_header(const ArtifactHeader& grouping, const Trace& test, const SizeCatalog& catalog,
                                   const std::vector<double>& fractions, const std::vector<Policy>& policies,
                                   WritePolicy wp) {
  ArtifactHeader h("metrics");
  h.inherit(grouping);
  h.set("grouping_hash", grouping.config_hash());
  h.set("test_input", test.source_label);
  h.set("test_digest", trace_digest(test));
  h.set("test_records", std::to_string(test.size()));
  h.set("catalog_bytes", std::to_string(catalog.total_bytes));
  h.set("fractions", join_doubles(fractions));
  h.set("policies", join_policies(policies));
  h.set("write_policy", std::string(to_string(wp)));
  return h;
}

StageOutputs run_stages(const PipelineConfig& cfg, const Trace& full, const StageOptions& opts,
                        const std::function<void(std::string_view, const StageOutputs&)>& on_stage) {
  in_stage("config", [&] { validate(cfg); });
  StageOutputs o;
  auto done = [&](std::string_view stage, Clock::time_point t0) {
    o.seconds[std::string(stage)] = since(t0);
    if (on_stage) in_stage(stage, [&] { on_stage(stage, o); });
  };

  auto t0 = Clock::now();
  in_stage("split", [&] {
    const auto n = cfg.train_count ? *cfg.train_count : train_count_from_fraction(full.size(), cfg.train_fraction);
    std::tie(o.train, o.test) = split_trace(full, n);
  });
  done("split", t0);

  t0 = Clock::now();
  in_stage("extract", [&] {
    o.transactions = extract_transactions(o.train, cfg.extractor);
    o.transactions_header = make_transactions_header(o.train, cfg.extractor, cfg.load.ops, o.transactions);
  });
  done("extract", t0);

  t0 = Clock::now();
  std::vector<CacheTransaction> used;
  in_stage("ctf", [&] {
    used = full_transactions(o.transactions, cfg.include_partial);
    o.ctf = build_ctf(used);
    o.ctf_header = make_ctf_header(o.transactions_header, cfg.include_partial, o.ctf);
  });
  done("ctf", t0);

  t0 = Clock::now();
  in_stage("chunk", [&] {
    o.Q = resolve_Q(cfg, o.train);
    o.chunks = opts.parallel ? chunk_all(o.ctf, cfg.chunker, o.Q) : chunk_all_serial(o.ctf, cfg.chunker, o.Q);
    o.chunks_header = make_chunks_header(o.ctf_header, cfg.chunker, o.Q, o.chunks.chunks.size());
  });
  done("chunk", t0);

  t0 = Clock::now();
  in_stage("group", [&] {
    const auto n = o.chunks.chunks.size();
    const auto counts = opts.parallel ? count_cooccurrence(used, o.chunks.chunk_of, n)
                                      : count_cooccurrence_serial(used, o.chunks.chunk_of, n);
    o.relations = legal_relations(counts, cfg.grouper.alpha, cfg.order);
    o.grouping = merge_groups(o.relations, o.chunks.chunks, cfg.grouper.mu);
    o.report = grouping_report(o.grouping);
    o.grouping_header = make_grouping_header(o.chunks_header, cfg.grouper, cfg.order, o.grouping.groups.size());
  });
  done("group", t0);

  if (!opts.simulate) return o;

  t0 = Clock::now();
  in_stage("simulate", [&] {
    const auto catalog = SizeCatalog::from_trace(full);
    const auto groups = PrefetchGroups::from_grouping(o.grouping);
    o.metrics = opts.parallel
                    ? sweep(o.test, catalog, &groups, cfg.fractions, cfg.policies, cfg.write_policy)
                    : sweep_serial(o.test, catalog, &groups, cfg.fractions, cfg.policies, cfg.write_policy);
    o.metrics_header =
        make_metrics_header(o.grouping_header, o.test, catalog, cfg.fractions, cfg.policies, cfg.write_policy);
  });
  done("simulate", t0);
  return o;
}

StageOutputs run_stages(const PipelineConfig& cfg, const Trace& full, const StageOptions& opts) {
  return run_stages(cfg, full, opts, {});
}

void verify_outputs(const PipelineConfig& cfg, const StageOutputs& o) {
  // Chunks: the merge audit replays to the same partition, and every chunk
  // stays inside one pre-block area.
  std::vector<BlockAddress> transacted;
  for (std::size_t i = 0; i < o.ctf.num_data(); ++i)
    if (!o.ctf.row(i).empty()) transacted.push_back(o.ctf.addresses()[i]);
  auto replayed = replay_chunk_merges(transacted, o.chunks.merges, o.ctf, cfg.chunker.sigma, cfg.chunker.metric);
  std::vector<std::vector<BlockAddress>> chunk_parts;
  for (const auto& c : o.chunks.chunks) {
    chunk_parts.push_back(c.members);
    for (auto a : c.members) {
      const auto key = area_key(a, o.ctf.vector_of(a).bits.size(), cfg.chunker, o.Q);
      if (key != c.area) throw InvariantError("chunk " + std::to_string(c.id) + " spans two pre-block areas");
    }
  }
  std::sort(chunk_parts.begin(), chunk_parts.end());
  std::sort(replayed.begin(), replayed.end());
  if (chunk_parts != replayed) throw InvariantError("chunk merge audit does not replay to the chunk partition");

  // Groups: every transacted datum in exactly one group.
  std::unordered_map<BlockAddress, std::size_t> seen;
  for (const auto& g : o.grouping.groups)
    for (auto a : g.members) ++seen[a];
  for (auto a : transacted) {
    auto it = seen.find(a);
    if (it == seen.end()) throw InvariantError("datum " + std::to_string(a) + " is in no group");
    if (it->second != 1) throw InvariantError("datum " + std::to_string(a) + " is in several groups");
  }
  if (seen.size() != transacted.size()) throw InvariantError("grouping contains data that was never transacted");

  // Group merge audit replays to the same partition (labels agree up to renaming).
  const auto labels = replay_group_merges(o.chunks.chunks.size(), o.grouping.merges, cfg.grouper.mu);
  std::unordered_map<std::uint32_t, std::uint32_t> label_to_group;
  std::unordered_map<std::uint32_t, std::uint32_t> group_to_label;
  for (std::uint32_t c = 0; c < labels.size(); ++c) {
    const auto g = o.grouping.group_of_chunk[c];
    auto [a, new_a] = label_to_group.emplace(labels[c], g);
    auto [b, new_b] = group_to_label.emplace(g, labels[c]);
    if (a->second != g || b->second != labels[c])
      throw InvariantError("group merge audit does not replay to the grouping");
  }
  if (o.grouping.processed != o.grouping.internalized + o.grouping.live_counter_total)
    throw InvariantError("group counters are not conserved");
}

std::string manifest_json(const Manifest& m) {
  nlohmann::ordered_json j;
  j["config_hash"] = m.config_hash;
  j["input_digest"] = m.input_digest;
  j["artifacts"] = nlohmann::ordered_json::array();
  for (const auto& a : m.artifacts)
    j["artifacts"].push_back({{"name", a.name}, {"kind", a.kind}, {"header_hash", a.header_hash}, {"sha256", a.sha256}});
  return j.dump(2) + "\n";
}

Manifest run_pipeline(const PipelineConfig& cfg) {
  in_stage("config", [&] { validate(cfg); });
  const auto& dir = cfg.out;
  const auto marker = dir / "pipeline.partial";
  in_stage("output", [&] {
    std::filesystem::create_directories(dir);
    std::filesystem::remove(dir / "manifest.json");
    std::filesystem::remove(marker);
  });

  Manifest manifest;
  manifest.config_hash = pipeline_config_hash(cfg);
  auto record = [&](const std::string& name, const ArtifactHeader& h) {
    manifest.artifacts.push_back({name, h.kind(), h.config_hash(), file_sha256(dir / name)});
  };

  try {
    const Trace full = in_stage("ingest", [&] { return load_input(cfg); });
    manifest.input_digest = trace_digest(full);

    auto on_stage = [&](std::string_view stage, const StageOutputs& o) {
      if (stage == "extract") {
        write_file_atomically(dir / "transactions.tsv",
                              [&](std::ostream& out) { write_transactions(out, o.transactions_header, o.transactions); });
        record("transactions.tsv", o.transactions_header);
      } else if (stage == "ctf") {
        write_file_atomically(dir / "ctf.tsv", [&](std::ostream& out) { write_ctf(out, o.ctf_header, o.ctf); });
        record("ctf.tsv", o.ctf_header);
      } else if (stage == "chunk") {
        write_file_atomically(dir / "chunks.tsv",
                              [&](std::ostream& out) { write_chunks(out, o.chunks_header, o.chunks.chunks); });
        record("chunks.tsv", o.chunks_header);
      } else if (stage == "group") {
        if (cfg.verify) in_stage("verify", [&] { verify_outputs(cfg, o); });
        write_file_atomically(dir / "grouping.csv",
                              [&](std::ostream& out) { write_grouping(out, o.grouping_header, o.grouping); });
        record("grouping.csv", o.grouping_header);
      } else if (stage == "simulate") {
        write_file_atomically(dir / "metrics.csv", [&](std::ostream& out) {
          o.metrics_header.write(out);
          write_metrics_csv(out, o.metrics);
        });
        record("metrics.csv", o.metrics_header);
        write_file_atomically(dir / "metrics.json", [&](std::ostream& out) {
          nlohmann::ordered_json j;
          nlohmann::ordered_json params;
          for (const auto& [k, v] : o.metrics_header.params()) params[k] = v;
          j["kind"] = "metrics";
          j["config_hash"] = o.metrics_header.config_hash();
          j["parameters"] = params;
          j["rows"] = nlohmann::ordered_json::parse(metrics_json(o.metrics));
          out << j.dump(2) << '\n';
        });
        record("metrics.json", o.metrics_header);
      }
    };
    run_stages(cfg, full, StageOptions{}, on_stage);
    write_file_atomically(dir / "manifest.json", [&](std::ostream& out) { out << manifest_json(manifest); });
  } catch (const std::exception& e) {
    std::ofstream m(marker, std::ios::trunc);
    m << e.what() << '\n';
    throw;
  }
  return manifest;
}

SweepAxis parse_sweep_axis(std::string_view text) {
  if (text == "sigma") return SweepAxis::Sigma;
  if (text == "mu") return SweepAxis::Mu;
  if (text == "M") return SweepAxis::M;
  throw ConfigError("unknown sweep axis '" + std::string(text) + "' (expected sigma, mu or M)");
}

std::string_view to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::Sigma: return "sigma";
    case SweepAxis::Mu: return "mu";
    case SweepAxis::M: return "M";
  }
  return "?";
}

PipelineConfig with_axis_value(const PipelineConfig& base, SweepAxis axis, double value) {
  PipelineConfig c = base;
  switch (axis) {
    case SweepAxis::Sigma: c.chunker.sigma = value; break;
    case SweepAxis::Mu: c.grouper.mu = value; break;
    case SweepAxis::M:
      if (!(value >= 1.0) || value != static_cast<double>(static_cast<std::uint64_t>(value)))
        throw ConfigError("M sweep values must be positive whole byte counts, got " + fmt_double(value));
      c.extractor.window_bytes = static_cast<std::uint64_t>(value);
      break;
  }
  validate(c);
  return c;
}

std::vector<SweepRow> sweep_parameters(const PipelineConfig& base, const Trace& full, SweepAxis axis,
                                       const std::vector<double>& values, bool parallel) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<PipelineConfig> configs;
  for (double v : values) configs.push_back(with_axis_value(base, axis, v));

  std::vector<SweepRow> rows(values.size());
  std::vector<std::exception_ptr> errors(values.size());
  // The stage kernels are the OpenMP ones in both modes. Under the outer
  // loop their nested regions get a single thread.
  auto run_one = [&](std::size_t i) {
    try {
      const auto t0 = Clock::now();
      auto o = run_stages(configs[i], full, StageOptions{.simulate = false, .parallel = true});
      rows[i] = SweepRow{axis, values[i], std::move(o.report), since(t0)};
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (parallel) {
    const auto n = static_cast<std::ptrdiff_t>(values.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) run_one(static_cast<std::size_t>(i));
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) run_one(i);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  std::set<std::size_t> sizes;
  for (const auto& r : rows)
    for (const auto& [s, n] : r.report.size_histogram) sizes.insert(s);
  out << "axis,value,groups,chunks,data,groups_ge4,seconds";
  for (auto s : sizes) out << ",size_" << s;
  out << '\n';
  for (const auto& r : rows) {
    std::size_t ge4 = 0;
    for (const auto& [s, n] : r.report.size_histogram)
      if (s >= 4) ge4 += n;
    out << to_string(r.axis) << ',' << fmt_double(r.value) << ',' << r.report.group_count << ','
        << r.report.chunk_count << ',' << r.report.data_count << ',' << ge4 << ',' << fmt_double(r.seconds);
    for (auto s : sizes) {
      auto it = r.report.size_histogram.find(s);
      out << ',' << (it == r.report.size_histogram.end() ? 0 : it->second);
    }
    out << '\n';
  }
}

}  // namespace ctdgm
