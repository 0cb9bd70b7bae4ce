#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "feddkc/config.hpp"
#include "feddkc/data.hpp"
#include "feddkc/federation.hpp"

namespace feddkc {

// Overrides RunConfig::output_dir when set and non-empty.
inline constexpr const char* kOutputDirEnv = "FEDDKC_OUTPUT_DIR";

// Exit statuses of the command-line entry points.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDivergence = 3;

std::string_view version();

// Dataset named by the config, before the split.
Dataset load_dataset(const DatasetSpec& spec);

// Everything one seed needs, wired from the config. Streams derived from the
// seed: split, partition, server init, server batching, and per-client init
// and batching (base + client id).
struct SeedSetup {
  std::uint64_t seed = 0;
  Dataset test;
  PartitionPlan plan;
  std::vector<ClientState> clients;
  ServerState server;
};

SeedSetup prepare_seed(const RunConfig& cfg, const Dataset& full, std::uint64_t seed);

struct SeedRun {
  std::uint64_t seed = 0;
  PartitionPlan plan;
  ExperimentResult result;
  RunSummary summary;
  std::vector<RefinementEvent> events;  // only with dump_events
  std::vector<ClientState> clients;     // final client states
  ServerModel server;
};

SeedRun run_seed(const RunConfig& cfg, const Dataset& full, std::uint64_t seed);

// Output layout:
//   <out>/manifest.json            resolved config, seeds, version, dataset identity
//   <out>/summary.json             per-seed summaries
//   <out>/seed_<s>/metrics.csv
//   <out>/seed_<s>/summary.json
//   <out>/seed_<s>/partition.json
//   <out>/seed_<s>/events.jsonl    with dump_events
//   <out>/seed_<s>/checkpoints/{client_<k>,server}.json
struct RunReport {
  std::string output_dir;
  std::vector<RunSummary> summaries;
  std::optional<std::string> divergence;
};

// Effective output directory: the environment override, else cfg.output_dir.
std::string resolve_output_dir(const RunConfig& cfg);
// Runs every seed and writes the artifacts. Stops at the first diverged seed,
// after flushing its partial log.
RunReport run_and_write(const RunConfig& cfg, const std::string& output_dir);

// Loads a config file, or the resolved config stored in a manifest.json.
RunConfig load_config_or_manifest(const std::string& path);

struct ComparisonRow {
  std::string label;  // "client <k>" or "average"
  double top1_a = 0.0;
  double top1_b = 0.0;
  double top5_a = 0.0;
  double top5_b = 0.0;

  double top1_delta() const { return top1_b - top1_a; }
  double top5_delta() const { return top5_b - top5_a; }
};

struct Comparison {
  std::string strategy_a;
  std::string strategy_b;
  std::vector<ComparisonRow> rows;  // clients then the average, means over seeds

  // Fixed-width table; the leading run of each cell is marked with '*'.
  std::string table() const;
};

// Throws IncomparableRuns when a manifest is missing or the runs differ in
// dataset, partition or seeds.
Comparison compare_runs(const std::string& dir_a, const std::string& dir_b);

// Command bodies. Messages go to `out` / `err`; the return value is the exit status.
int cli_run(const std::string& config_path, std::ostream& out, std::ostream& err);
int cli_validate(const std::string& config_path, std::ostream& out, std::ostream& err);
int cli_compare(const std::string& dir_a, const std::string& dir_b, std::ostream& out, std::ostream& err);

}  // namespace feddkc
