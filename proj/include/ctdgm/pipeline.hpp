#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ctdgm/artifacts.hpp"
#include "ctdgm/cache_sim.hpp"
#include "ctdgm/chunker.hpp"
#include "ctdgm/config.hpp"
#include "ctdgm/grouper.hpp"
#include "ctdgm/trace_io.hpp"
#include "ctdgm/transactions.hpp"

namespace ctdgm {

struct PipelineConfig {
  // Input: one or more MSR CSV files (concatenated in order) or a synthetic
  // spec file. Exactly one of the two must be set.
  std::vector<std::filesystem::path> traces;
  std::optional<std::filesystem::path> synthetic;
  LoadOptions load;

  std::optional<std::size_t> train_count;
  double train_fraction = 0.7;

  ExtractorConfig extractor;
  bool include_partial = false;
  ChunkerConfig chunker;
  std::uint64_t Q = 0;  // 0: one past the largest training address
  GrouperConfig grouper;
  RelationOrder order = RelationOrder::Descending;

  std::vector<double> fractions{0.001, 0.002, 0.004, 0.008, 0.016, 0.032, 0.064, 0.128};
  std::vector<Policy> policies{Policy::LRU, Policy::FIFO, Policy::GroupPrefetch, Policy::GroupMerged};
  WritePolicy write_policy = WritePolicy::Allocate;

  std::filesystem::path out = "ctdgm-out";
  std::uint64_t seed = 1;  // overrides the synthetic spec's seed
  bool verify = true;      // replay audits and check the partition
};

// Every key accepted in a pipeline config file. The CLI exposes each one as
// a --key flag.
const std::vector<std::string>& pipeline_keys();

// Parses and validates. Unknown keys and out-of-range values raise
// ConfigError.
PipelineConfig load_pipeline_config(const KeyValues& kv);
void validate(const PipelineConfig& cfg);

// Canonical key=value form of every algorithmic parameter (output location
// and the verify switch excluded).
std::map<std::string, std::string> canonical_parameters(const PipelineConfig& cfg);
std::string pipeline_config_hash(const PipelineConfig& cfg);

// Reads the configured input (trace files or synthetic spec).
Trace load_input(const PipelineConfig& cfg);

std::uint64_t resolve_Q(const PipelineConfig& cfg, const Trace& train);

struct StageOutputs {
  Trace train;
  Trace test;
  std::vector<CacheTransaction> transactions;  // as extracted, partial included
  CtfMatrix ctf;
  std::uint64_t Q = 0;
  ChunkSet chunks;
  std::vector<Relation> relations;
  Grouping grouping;
  GroupingReport report;
  std::vector<SimMetrics> metrics;
  std::map<std::string, double> seconds;  // per stage wall time

  ArtifactHeader transactions_header;
  ArtifactHeader ctf_header;
  ArtifactHeader chunks_header;
  ArtifactHeader grouping_header;
  ArtifactHeader metrics_header;
};

struct StageOptions {
  bool simulate = true;
  bool parallel = true;  // OpenMP kernels, or their serial references
};

// Runs every stage in memory on an already loaded trace. Errors are
// rethrown with the stage name prefixed, keeping their family. The callback
// runs after each stage (split, extract, ctf, chunk, group, simulate).
StageOutputs run_stages(const PipelineConfig& cfg, const Trace& full, const StageOptions& opts = {});
StageOutputs run_stages(const PipelineConfig& cfg, const Trace& full, const StageOptions& opts,
                        const std::function<void(std::string_view, const StageOutputs&)>& on_stage);

// Artifact headers. Each one inherits its upstream header and records that
// header's hash, so a stage can refuse inputs from a different lineage.
ArtifactHeader make_transactions_header(const Trace& train, const ExtractorConfig& ex, OpsFilter ops,
                                        std::span<const CacheTransaction> txns);
ArtifactHeader make_ctf_header(const ArtifactHeader& txn, bool include_partial, const CtfMatrix& ctf);
ArtifactHeader make_chunks_header(const ArtifactHeader& ctf, const ChunkerConfig& cc, std::uint64_t Q,
                                  std::size_t num_chunks);
ArtifactHeader make_grouping_header(const ArtifactHeader& chunks, const GrouperConfig& gc, RelationOrder order,
                                    std::size_t num_groups);
ArtifactHeader make_metrics_header(const ArtifactHeader& grouping, const Trace& test, const SizeCatalog& catalog,
                                   const std::vector<double>& fractions, const std::vector<Policy>& policies,
                                   WritePolicy wp);

// Partition and audit checks; throws InvariantError.
void verify_outputs(const PipelineConfig& cfg, const StageOutputs& out);

struct ManifestEntry {
  std::string name;
  std::string kind;
  std::string header_hash;
  std::string sha256;
};

struct Manifest {
  std::string config_hash;
  std::string input_digest;
  std::vector<ManifestEntry> artifacts;
};

std::string manifest_json(const Manifest& m);

// Runs the stages and writes transactions.tsv, ctf.tsv, chunks.tsv,
// grouping.csv, metrics.csv, metrics.json and manifest.json under cfg.out.
// Files are written as NAME.partial and renamed when complete; on failure
// a pipeline.partial marker names the stage and cause.
Manifest run_pipeline(const PipelineConfig& cfg);

enum class SweepAxis { Sigma, Mu, M };

SweepAxis parse_sweep_axis(std::string_view text);
std::string_view to_string(SweepAxis a);

// Applies one axis value to a copy of the config; validates it.
PipelineConfig with_axis_value(const PipelineConfig& base, SweepAxis axis, double value);

struct SweepRow {
  SweepAxis axis = SweepAxis::Sigma;
  double value = 0.0;
  GroupingReport report;
  double seconds = 0.0;  // extract through group
};

// Grouping reports per axis value (no simulation). With parallel set, values
// run concurrently; otherwise one at a time with threaded stage kernels.
std::vector<SweepRow> sweep_parameters(const PipelineConfig& base, const Trace& full, SweepAxis axis,
                                       const std::vector<double>& values, bool parallel = true);

// One row per value: axis,value,groups,chunks,data,groups_ge4,seconds,
// then size_1..size_N counts over the union of observed sizes.
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

}  // namespace ctdgm
