#include "feddkc/runner.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>

#include "feddkc/error.hpp"

namespace feddkc {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string hex64(std::uint64_t v) {
  char buffer[17];
  std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(v));
  return buffer;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

fs::path seed_dir(const fs::path& root, std::uint64_t seed) { return root / ("seed_" + std::to_string(seed)); }

ordered_json manifest_json(const RunConfig& cfg, const Dataset& full) {
  ordered_json m;
  m["tool"] = "feddkc";
  m["version"] = std::string(version());
  m["config"] = cfg.to_text();
  m["seeds"] = cfg.seeds;
  m["strategy"] = std::string(to_string(cfg.refinement.strategy));
  m["dataset"] = {{"name", full.name},
                  {"rows", full.size()},
                  {"dim", full.dim()},
                  {"classes", full.class_count},
                  {"checksum", hex64(full.checksum())}};
  m["partition"] = {{"clients", cfg.clients}, {"alpha", cfg.alpha}, {"test_fraction", cfg.dataset.test_fraction}};
  m["rounds"] = cfg.rounds;
  return m;
}

ordered_json read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  if (!fs::exists(path)) throw Error(ErrorCode::IncomparableRuns, "no manifest.json in " + dir.string());
  try {
    return ordered_json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IncomparableRuns, path.string() + " is not valid JSON: " + e.what());
  }
}

struct MeanSummary {
  std::vector<double> top1;
  std::vector<double> top5;
  double avg_top1 = 0.0;
  double avg_top5 = 0.0;
};

MeanSummary mean_over_seeds(const fs::path& dir, const std::vector<std::uint64_t>& seeds) {
  MeanSummary mean;
  for (std::uint64_t seed : seeds) {
    const fs::path path = seed_dir(dir, seed) / "summary.json";
    if (!fs::exists(path)) throw Error(ErrorCode::IncomparableRuns, "missing " + path.string());
    const RunSummary s = RunSummary::from_json(read_text(path));
    if (mean.top1.empty()) {
      mean.top1.assign(s.final_top1_per_client.size(), 0.0);
      mean.top5.assign(s.final_top5_per_client.size(), 0.0);
    }
    if (s.final_top1_per_client.size() != mean.top1.size()) {
      throw Error(ErrorCode::IncomparableRuns, "client count differs between seeds in " + dir.string());
    }
    for (std::size_t k = 0; k < mean.top1.size(); ++k) {
      mean.top1[k] += s.final_top1_per_client[k];
      mean.top5[k] += s.final_top5_per_client[k];
    }
    mean.avg_top1 += s.avg_top1;
    mean.avg_top5 += s.avg_top5;
  }
  const double n = static_cast<double>(seeds.size());
  for (auto& v : mean.top1) v /= n;
  for (auto& v : mean.top5) v /= n;
  mean.avg_top1 /= n;
  mean.avg_top5 /= n;
  return mean;
}

std::string lead_marker(double a, double b) {
  if (a == b) return "=";
  return a > b ? "A" : "B";
}

}  // namespace

std::string_view version() { return FEDDKC_VERSION; }

Dataset load_dataset(const DatasetSpec& spec) {
  if (spec.source == "csv") return load_csv(spec.path);
  return synth_blobs(spec.classes, spec.per_class, spec.dim, spec.spread, spec.synth_seed);
}

SeedSetup prepare_seed(const RunConfig& cfg, const Dataset& full, std::uint64_t seed) {
  SeedSetup setup;
  setup.seed = seed;
  TrainTestSplit split = train_test_split(full, cfg.dataset.test_fraction, derive_seed(seed, stream::kSplit));
  setup.test = std::move(split.test);
  setup.plan = dirichlet_partition(split.train, cfg.clients, cfg.alpha, derive_seed(seed, stream::kPartition));
  const auto indices = setup.plan.client_indices();
  for (std::size_t k = 0; k < cfg.clients; ++k) {
    const auto id = static_cast<std::uint64_t>(k);
    SplitModel model = make_split_model(full.dim(), cfg.feature_dim, {cfg.hidden_width_for(k)}, full.class_count,
                                        derive_seed(seed, stream::kClientInitBase + id));
    setup.clients.push_back(ClientState::create(static_cast<int>(k), std::move(model), split.train.subset(indices[k]),
                                                derive_seed(seed, stream::kClientBatchingBase + id)));
  }
  setup.server.model =
      make_server_model(cfg.feature_dim, cfg.server_hidden, full.class_count, derive_seed(seed, stream::kServerInit));
  setup.server.refinement = cfg.refinement;
  setup.server.batching_seed = derive_seed(seed, stream::kServerBatching);
  return setup;
}

SeedRun run_seed(const RunConfig& cfg, const Dataset& full, std::uint64_t seed) {
  SeedSetup setup = prepare_seed(cfg, full, seed);
  SeedRun run;
  run.seed = seed;
  run.plan = setup.plan;
  ExperimentOptions options;
  options.parallel_clients = cfg.parallel_clients;
  if (cfg.dump_events) {
    options.event_sink = [&run](const RefinementEvent& e) { run.events.push_back(e); };
  }
  TrainConfig train = cfg.train;
  train.seed = seed;
  run.result = run_experiment(setup.clients, setup.server, cfg.rounds, train, setup.test, options);
  run.summary = summarize(run.result.log);
  run.clients = std::move(setup.clients);
  run.server = std::move(setup.server.model);
  return run;
}

std::string resolve_output_dir(const RunConfig& cfg) {
  const char* env = std::getenv(kOutputDirEnv);
  if (env != nullptr && *env != '\0') return env;
  return cfg.output_dir;
}

RunReport run_and_write(const RunConfig& cfg, const std::string& output_dir) {
  cfg.validate();
  const Dataset full = load_dataset(cfg.dataset);
  full.validate();
  if (full.class_count != cfg.resolve_class_count()) {
    throw ConfigError("dataset", "class count of the loaded data differs from the header");
  }

  const fs::path root(output_dir);
  fs::create_directories(root);
  write_text(root / "manifest.json", manifest_json(cfg, full).dump(2) + "\n");

  RunReport report;
  report.output_dir = root.string();
  ordered_json all = ordered_json::array();
  for (std::uint64_t seed : cfg.seeds) {
    SeedRun run = run_seed(cfg, full, seed);
    const fs::path dir = seed_dir(root, seed);
    fs::create_directories(dir / "checkpoints");
    run.result.log.write_csv((dir / "metrics.csv").string());
    write_text(dir / "partition.json", run.plan.to_json() + "\n");
    write_text(dir / "summary.json", run.summary.to_json() + "\n");
    if (cfg.dump_events) {
      std::string lines;
      for (const auto& e : run.events) lines += to_json_line(e) + "\n";
      write_text(dir / "events.jsonl", lines);
    }
    const int last = run.result.log.last_round();
    for (const auto& client : run.clients) {
      write_checkpoint((dir / "checkpoints" / ("client_" + std::to_string(client.id) + ".json")).string(),
                       make_checkpoint(client.model, seed, last));
    }
    write_checkpoint((dir / "checkpoints" / "server.json").string(), make_checkpoint(run.server, seed, last));

    ordered_json entry;
    entry["seed"] = seed;
    entry["summary"] = ordered_json::parse(run.summary.to_json());
    if (run.result.divergence) entry["divergence"] = *run.result.divergence;
    all.push_back(entry);
    report.summaries.push_back(run.summary);
    if (run.result.divergence) {
      report.divergence = "seed " + std::to_string(seed) + ", " + *run.result.divergence;
      break;
    }
  }
  write_text(root / "summary.json", all.dump(2) + "\n");
  return report;
}

RunConfig load_config_or_manifest(const std::string& path) {
  if (fs::path(path).extension() != ".json") return load_run_config(path);
  ordered_json m;
  try {
    m = ordered_json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, 0, e.what());
  }
  if (!m.contains("config") || !m["config"].is_string()) throw ParseError(path, 0, "manifest has no config text");
  const auto base = fs::path(path).parent_path();
  return parse_run_config(KeyValueConfig::parse(m["config"].get<std::string>(), path),
                          base.empty() ? "." : base.string());
}

std::string Comparison::table() const {
  std::ostringstream out;
  out << "A = " << strategy_a << ", B = " << strategy_b << "; '*' marks the leading run per cell\n";
  out << std::left << std::setw(12) << "cell" << std::right << std::setw(10) << "top1 A" << std::setw(10) << "top1 B"
      << std::setw(10) << "d top1" << std::setw(10) << "top5 A" << std::setw(10) << "top5 B" << std::setw(10)
      << "d top5" << '\n';
  auto cell = [](double v, bool lead) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << v << (lead ? "*" : " ");
    return s.str();
  };
  for (const auto& row : rows) {
    const std::string m1 = lead_marker(row.top1_a, row.top1_b);
    const std::string m5 = lead_marker(row.top5_a, row.top5_b);
    std::ostringstream d1;
    std::ostringstream d5;
    d1 << std::showpos << std::fixed << std::setprecision(4) << row.top1_delta();
    d5 << std::showpos << std::fixed << std::setprecision(4) << row.top5_delta();
    out << std::left << std::setw(12) << row.label << std::right << std::setw(10) << cell(row.top1_a, m1 == "A")
        << std::setw(10) << cell(row.top1_b, m1 == "B") << std::setw(10) << d1.str() << std::setw(10)
        << cell(row.top5_a, m5 == "A") << std::setw(10) << cell(row.top5_b, m5 == "B") << std::setw(10) << d5.str()
        << '\n';
  }
  return out.str();
}

Comparison compare_runs(const std::string& dir_a, const std::string& dir_b) {
  const ordered_json a = read_manifest(dir_a);
  const ordered_json b = read_manifest(dir_b);
  for (const char* key : {"dataset", "partition", "seeds", "rounds"}) {
    if (!a.contains(key) || !b.contains(key)) {
      throw Error(ErrorCode::IncomparableRuns, std::string("manifest lacks '") + key + "'");
    }
    if (a[key] != b[key]) {
      throw Error(ErrorCode::IncomparableRuns, std::string("runs differ in '") + key + "': " + a[key].dump() +
                                                   " vs " + b[key].dump());
    }
  }
  const auto seeds = a["seeds"].get<std::vector<std::uint64_t>>();
  if (seeds.empty()) throw Error(ErrorCode::IncomparableRuns, "manifest lists no seeds");
  const MeanSummary ma = mean_over_seeds(dir_a, seeds);
  const MeanSummary mb = mean_over_seeds(dir_b, seeds);
  if (ma.top1.size() != mb.top1.size()) throw Error(ErrorCode::IncomparableRuns, "client counts differ");

  Comparison cmp;
  cmp.strategy_a = a.value("strategy", std::string("?"));
  cmp.strategy_b = b.value("strategy", std::string("?"));
  for (std::size_t k = 0; k < ma.top1.size(); ++k) {
    cmp.rows.push_back({"client " + std::to_string(k), ma.top1[k], mb.top1[k], ma.top5[k], mb.top5[k]});
  }
  cmp.rows.push_back({"average", ma.avg_top1, mb.avg_top1, ma.avg_top5, mb.avg_top5});
  return cmp;
}

int cli_run(const std::string& config_path, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  try {
    cfg = load_config_or_manifest(config_path);
    cfg.validate();
  } catch (const ConfigError& e) {
    err << e.what() << '\n';
    return kExitConfig;
  } catch (const ParseError& e) {
    err << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  try {
    const RunReport report = run_and_write(cfg, resolve_output_dir(cfg));
    if (report.divergence) {
      err << "diverged: " << *report.divergence << "; partial logs in " << report.output_dir << '\n';
      return kExitDivergence;
    }
    out << "wrote " << report.output_dir << '\n';
    for (std::size_t i = 0; i < report.summaries.size(); ++i) {
      out << "seed " << cfg.seeds[i] << ": avg top1 " << std::fixed << std::setprecision(4)
          << report.summaries[i].avg_top1 << ", avg top5 " << report.summaries[i].avg_top5 << '\n';
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

int cli_validate(const std::string& config_path, std::ostream& out, std::ostream& err) {
  try {
    const RunConfig cfg = load_config_or_manifest(config_path);
    cfg.validate();
    out << "ok: " << config_path << '\n';
    return kExitOk;
  } catch (const ConfigError& e) {
    err << e.what() << '\n';
    return kExitConfig;
  } catch (const ParseError& e) {
    err << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

int cli_compare(const std::string& dir_a, const std::string& dir_b, std::ostream& out, std::ostream& err) {
  try {
    out << compare_runs(dir_a, dir_b).table();
    return kExitOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace feddkc
