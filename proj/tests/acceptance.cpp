// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: feddkc_acceptance [output_dir]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "feddkc/error.hpp"
#include "feddkc/refinement.hpp"
#include "feddkc/runner.hpp"
#include "test_support.hpp"

using namespace feddkc;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::printf("criterion %2d %s  %s: %s\n", id, pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* format, double a) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), format, a);
  return buffer;
}

struct Corpus {
  std::size_t classes;
  std::vector<std::vector<double>> logits;
};

// 10^4 vectors per class count. Every 50th vector is constant, every 50th
// (offset 25) has a tied maximum, so uniform and tie branches are exercised.
std::vector<Corpus> peak_corpora() {
  std::vector<Corpus> out;
  testkit::LogitSource source(20240101);
  for (std::size_t c : {3u, 10u, 100u}) {
    Corpus corpus{c, {}};
    for (int i = 0; i < 10000; ++i) {
      auto z = source.next(c);
      if (i % 50 == 0) std::fill(z.begin(), z.end(), z[0]);
      if (i % 50 == 25) z[1] = z[0] = *std::max_element(z.begin(), z.end());
      corpus.logits.push_back(std::move(z));
    }
    out.push_back(std::move(corpus));
  }
  return out;
}

std::vector<double> targets_for(std::size_t c) {
  std::vector<double> out;
  for (double t : {0.11, 0.5, 0.9}) {
    if (t > 1.0 / static_cast<double>(c)) out.push_back(t);
  }
  return out;
}

bool on_simplex(std::span<const double> p) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= kSimplexSumTolerance;
}

// z_i >= z_j implies out_i >= out_j, checked on the order of z.
bool order_preserved(const std::vector<double>& z, std::span<const double> out) {
  std::vector<std::size_t> idx(z.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return z[a] > z[b]; });
  // Within a run of equal z, all outputs must be equal; across runs non-increasing.
  for (std::size_t i = 1; i < idx.size(); ++i) {
    const std::size_t prev = idx[i - 1];
    const std::size_t cur = idx[i];
    if (z[prev] == z[cur] ? out[prev] != out[cur] : out[prev] < out[cur]) return false;
  }
  return true;
}

bool has_max_tie(const std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  return std::count(z.begin(), z.end(), m) > 1;
}

// ------------------------------------------------------------- criteria

void criterion_1(const std::vector<Corpus>& corpora) {
  const auto start = Clock::now();
  std::size_t checked = 0;
  std::size_t rectified = 0;
  double worst = 0.0;
  for (const auto& corpus : corpora) {
    for (double t : targets_for(corpus.classes)) {
      for (const auto& z : corpus.logits) {
        const ProbVector p = softmax(Knowledge(z));
        rectified += kkr_rectifies(p, t);
        const ProbVector out = kkr_refine(p, t);
        worst = std::max(worst, std::abs(peak_probability(out).value - t));
        ++checked;
      }
    }
  }
  const double elapsed = seconds_since(start);
  report(1, "peak congruence", worst <= 1e-9 && elapsed < 5.0,
         std::to_string(checked) + " refinements (" + std::to_string(rectified) + " rectified), max |peak - T| = " +
             fmt("%.3g", worst) + " (tol 1e-9), " + fmt("%.2f", elapsed) + " s (limit 5 s)");
}

void criterion_2() {
  const auto start = Clock::now();
  testkit::LogitSource source(20240102);
  RefinementConfig cfg;
  cfg.epsilon = 1e-3;
  const BisectionConfig search = cfg.search_config();
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const auto r = skr_refine(Knowledge(source.next_nonconstant(10)), 3.3, search);
    worst = std::max(worst, std::abs(shannon_entropy(r.probs) - 3.3));
  }
  const double elapsed = seconds_since(start);
  report(2, "entropy congruence", worst < 5e-4 && elapsed < 30.0,
         "10000 SKR refinements at C=10, E=3.3, eps=1e-3: max |H - E| = " + fmt("%.6g", worst) +
             " bits (tol 5e-4), " + fmt("%.2f", elapsed) + " s (limit 30 s)");
}

void criterion_3(const std::vector<Corpus>& corpora) {
  const auto start = Clock::now();
  BisectionConfig search;
  std::map<std::string, std::size_t> outputs, violations, unreachable;
  auto check = [&](const std::string& name, const std::vector<double>& z, std::span<const double> out) {
    ++outputs[name];
    // Rectification gives T to one of several tied maxima, so equal inputs
    // only need the weak ordering there.
    const bool ordered = order_preserved(z, out) || (name == "kkr" && has_max_tie(z));
    if (!on_simplex(out) || !ordered) ++violations[name];
  };
  const double entropy_share = 3.3 / std::log2(10.0);
  for (const auto& corpus : corpora) {
    const double e = entropy_share * std::log2(static_cast<double>(corpus.classes));
    for (const auto& z : corpus.logits) {
      const Knowledge k(z);
      const ProbVector p = softmax(k);
      for (double t : targets_for(corpus.classes)) {
        check("kkr", z, kkr_refine(p, t).probs());
        for (const auto& [name, kernel] : {std::pair{"gkkr-affine", Kernel::linear_affine(1, 1)},
                                           std::pair{"gkkr-exp", Kernel::exponential()}}) {
          try {
            check(name, z, generalized_kkr_refine(p, kernel, t, 1e-3, search).probs.probs());
          } catch (const Error& err) {
            if (err.code() != ErrorCode::BracketFailure) throw;
            ++unreachable[name];
          }
        }
      }
      try {
        check("skr", z, skr_refine(k, e, search).probs.probs());
      } catch (const Error& err) {
        if (err.code() != ErrorCode::DegenerateKnowledge) throw;
        ++unreachable["skr"];
      }
    }
  }
  std::size_t total_violations = 0;
  std::string detail;
  for (const char* name : {"kkr", "skr", "gkkr-affine", "gkkr-exp"}) {
    total_violations += violations[name];
    detail += std::string(detail.empty() ? "" : "; ") + name + " " + std::to_string(violations[name]) + "/" +
              std::to_string(outputs[name]);
    if (unreachable[name]) {
      detail += " (" + std::to_string(unreachable[name]) +
                (name == std::string("skr") ? " constant inputs rejected)" : " targets outside the kernel's range)");
    }
  }
  report(3, "simplex and order", total_violations == 0,
         "violations/outputs: " + detail + ", " + fmt("%.1f", seconds_since(start)) + " s");
}

void criterion_4() {
  const ProbVector p({0.5, 0.49, 0.01});
  const auto closed = kkr_closed_form(p, 0.9);
  const double hand = (1.7 * 0.01 + 0.5 - 0.9) / 0.5;
  const ProbVector out = kkr_refine(p, 0.9);
  const double rest = (1.0 - 0.9) / 2.0;
  const bool pass = closed[2] < 0.0 && std::abs(closed[2] - hand) <= 1e-15 && std::abs(closed[2] + 0.766) <= 1e-12 &&
                    out[0] == 0.9 && out[1] == rest && out[2] == rest && std::abs(rest - 0.05) <= 1e-16 &&
                    on_simplex(out.probs());
  char buffer[200];
  std::snprintf(buffer, sizeof(buffer), "pre-rectification phi = (%.6g, %.6g, %.6g); refined = (%.17g, %.17g, %.17g)",
                closed[0], closed[1], closed[2], out[0], out[1], out[2]);
  report(4, "negativity witness", pass, buffer);
}

void criterion_5() {
  testkit::LogitSource source(20240105);
  BisectionConfig search;
  const double epsilon = 1e-8;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  double worst = 0.0;
  std::uniform_int_distribution<int> pick(0, 2);
  while (checked < 1000) {
    const std::size_t c = std::vector<std::size_t>{3, 10, 100}[static_cast<std::size_t>(pick(source.engine()))];
    const ProbVector p = softmax(Knowledge(source.next_nonconstant(c)));
    const double t = c == 3 ? 0.5 : 0.11;
    // A positive affine scale exists only when the input peak exceeds T.
    if (kkr_rectifies(p, t) || peak_probability(p).value <= t) {
      ++skipped;
      continue;
    }
    const auto searched = generalized_kkr_refine(p, Kernel::linear_affine(1, 1), t, epsilon, search);
    const ProbVector closed = kkr_refine(p, t);
    for (std::size_t i = 0; i < c; ++i) worst = std::max(worst, std::abs(searched.probs[i] - closed[i]));
    ++checked;
  }
  report(5, "oracle equivalence", worst <= 1e-6,
         "1000 non-rectified inputs (C in {3,10,100}; " + std::to_string(skipped) +
             " rectified or v_m <= T skipped), search eps=1e-8: max |affine search - closed form| = " +
             fmt("%.3g", worst) + " (tol 1e-6)");
}

double gradient_error(const std::function<double(const std::vector<double>&)>& loss, std::vector<double> params,
                      const std::vector<double>& analytic) {
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = loss(params);
    params[i] = saved - h;
    const double down = loss(params);
    params[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double scale = std::max(std::abs(numeric), std::abs(analytic[i]));
    if (scale < 1e-7) continue;
    worst = std::max(worst, std::abs(numeric - analytic[i]) / scale);
  }
  return worst;
}

void criterion_6() {
  Rng rng(6);
  const Eigen::Index n = 8;
  Matrix x(n, 5);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  Matrix raw(n, 4);
  for (Eigen::Index i = 0; i < raw.size(); ++i) raw.data()[i] = 2.0 * rng.normal();
  const Matrix targets = softmax_rows(raw);
  Labels labels;
  for (Eigen::Index i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng.uniform_index(4)));
  const double beta = 1.5;

  // Client loss: extractor layer + predictor layer.
  SplitModel client = make_split_model(5, 3, {}, 4, 61);
  testkit::jitter_biases(client.extractor, 610);
  testkit::jitter_biases(client.predictor, 611);
  const SplitGradient cg = compute_gradient(client, x, targets, labels, beta);
  std::vector<double> client_params, client_grad;
  client.extractor.flatten_into(client_params);
  client.predictor.flatten_into(client_params);
  flatten_gradient_into(cg.extractor, client_grad);
  flatten_gradient_into(cg.predictor, client_grad);
  SplitModel probe = client;
  const double client_err = gradient_error(
      [&](const std::vector<double>& p) {
        probe.predictor.assign(probe.extractor.assign(p));
        return distill_loss(predict(probe, x), targets, labels, beta).total;
      },
      client_params, client_grad);

  // Server loss on uploaded features: two-layer predictor.
  const Matrix h = extract_features(client, x);
  ServerModel server = make_server_model(3, {6}, 4, 62);
  testkit::jitter_biases(server.predictor, 620);
  const ServerGradient sg = compute_gradient(server, h, targets, labels, beta);
  std::vector<double> server_params, server_grad;
  server.predictor.flatten_into(server_params);
  flatten_gradient_into(sg.predictor, server_grad);
  ServerModel server_probe = server;
  const double server_err = gradient_error(
      [&](const std::vector<double>& p) {
        server_probe.predictor.assign(p);
        return distill_loss(predict(server_probe.predictor, h), targets, labels, beta).total;
      },
      server_params, server_grad);

  report(6, "gradient correctness", client_err < 1e-4 && server_err < 1e-4,
         "max relative error vs central differences (h=1e-5, 8 samples): client " + fmt("%.3g", client_err) +
             ", server " + fmt("%.3g", server_err) + " (tol 1e-4)");
}

struct Cell {
  std::string dataset;
  double alpha;
  std::uint64_t seed;
  std::map<std::string, double> avg_top1;
};

struct TrendRuns {
  std::vector<Cell> cells;
  // (dataset, alpha, strategy) -> run directory
  std::map<std::string, fs::path> dirs;
  bool communication_equal = true;
  std::size_t communication_rows = 0;
  double seconds = 0.0;
};

std::string run_key(const std::string& dataset, double alpha, const std::string& strategy) {
  return dataset + "_a" + fmt("%g", alpha) + "_" + strategy;
}

TrendRuns trend_runs(const fs::path& root) {
  TrendRuns runs;
  const auto start = Clock::now();
  const std::string source = FEDDKC_SOURCE_DIR;
  std::map<std::string, std::vector<MetricsLog>> logs;
  for (const std::string dataset : {"blobs", "digits"}) {
    const RunConfig base = load_run_config(source + "/configs/acceptance_" + dataset + ".cfg");
    const Dataset full = load_dataset(base.dataset);
    for (double alpha : {0.5, 3.0}) {
      std::vector<Cell> cells;
      for (std::uint64_t seed : base.seeds) cells.push_back({dataset, alpha, seed, {}});
      for (const std::string strategy : {"none", "kkr", "skr"}) {
        RunConfig cfg = base;
        cfg.alpha = alpha;
        cfg.refinement.strategy = *parse_strategy(strategy);
        const fs::path dir = root / run_key(dataset, alpha, strategy);
        runs.dirs[run_key(dataset, alpha, strategy)] = dir;
        const RunReport rep = run_and_write(cfg, dir.string());
        if (rep.divergence) throw Error(ErrorCode::NumericalDivergence, *rep.divergence);
        for (std::size_t i = 0; i < cells.size(); ++i) cells[i].avg_top1[strategy] = rep.summaries[i].avg_top1;
        for (std::uint64_t seed : base.seeds) {
          const auto path = dir / ("seed_" + std::to_string(seed)) / "metrics.csv";
          logs[dataset + fmt("%g", alpha) + "_" + std::to_string(seed)].push_back(MetricsLog::read_csv(path.string()));
        }
      }
      runs.cells.insert(runs.cells.end(), cells.begin(), cells.end());
    }
    (void)full;
  }
  for (const auto& [key, group] : logs) {
    for (std::size_t s = 1; s < group.size(); ++s) {
      if (group[s].rows.size() != group[0].rows.size()) {
        runs.communication_equal = false;
        continue;
      }
      for (std::size_t r = 0; r < group[0].rows.size(); ++r) {
        ++runs.communication_rows;
        if (group[s].rows[r].bytes_up != group[0].rows[r].bytes_up ||
            group[s].rows[r].bytes_down != group[0].rows[r].bytes_down) {
          runs.communication_equal = false;
        }
      }
    }
  }
  runs.seconds = seconds_since(start);
  return runs;
}

void criterion_7(const TrendRuns& runs) {
  report(7, "zero communication overhead", runs.communication_equal && runs.communication_rows > 0,
         "bytes_up/bytes_down compared on " + std::to_string(runs.communication_rows) +
             " (round, client) rows of KKR and SKR against None over all 20 trend configurations");
}

void criterion_8(const TrendRuns& runs) {
  int wins = 0;
  int strategy_wins = 0;
  std::printf("  trend cells (average final Top-1 over 5 clients):\n");
  for (const auto& cell : runs.cells) {
    const double none = cell.avg_top1.at("none");
    const double kkr = cell.avg_top1.at("kkr");
    const double skr = cell.avg_top1.at("skr");
    const bool win = std::max(kkr, skr) >= none;
    wins += win;
    strategy_wins += (kkr >= none) + (skr >= none);
    std::printf("    %-6s alpha=%-3g seed=%llu  none %.4f  kkr %.4f  skr %.4f  %s\n", cell.dataset.c_str(), cell.alpha,
                static_cast<unsigned long long>(cell.seed), none, kkr, skr, win ? "win" : "loss");
  }
  const int cells = static_cast<int>(runs.cells.size());
  const bool pass = cells == 20 && wins * 10 >= 6 * cells && runs.seconds < 600.0;
  report(8, "desk-scale accuracy trend", pass,
         std::to_string(wins) + "/" + std::to_string(cells) + " cells where KKR or SKR >= None (need >= 60%); " +
             std::to_string(strategy_wins) + "/" + std::to_string(2 * cells) + " per-strategy cells; " +
             fmt("%.0f", runs.seconds) + " s for 60 runs (limit 600 s)");
}

void criterion_9(const fs::path& root) {
  const std::string source = FEDDKC_SOURCE_DIR;
  RunConfig cfg = load_run_config(source + "/configs/acceptance_blobs.cfg");
  cfg.seeds = {cfg.seeds.front()};
  const fs::path a = root / "determinism_a";
  const fs::path b = root / "determinism_b";
  run_and_write(cfg, a.string());
  run_and_write(cfg, b.string());
  const std::string name = "seed_" + std::to_string(cfg.seeds.front()) + "/metrics.csv";
  const std::string first = testkit::read_file((a / name).string());
  const std::string second = testkit::read_file((b / name).string());
  report(9, "determinism", !first.empty() && first == second,
         "two runs of configs/acceptance_blobs.cfg (seed " + std::to_string(cfg.seeds.front()) + "): " +
             std::to_string(first.size()) + " bytes, " + (first == second ? "byte-identical" : "DIFFERENT"));
}

void criterion_10() {
  testkit::LogitSource source(20240110);
  const BisectionConfig cfg{1e-6, 1e6, 40, 5e-4, 200};
  std::size_t checked = 0;
  std::size_t over_bound = 0;
  int max_iters = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t c = i % 3 == 0 ? 3 : (i % 3 == 1 ? 10 : 100);
    const Knowledge z(source.next_nonconstant(c));
    const double target = (0.05 + 0.9 * (i % 97) / 96.0) * std::log2(static_cast<double>(c));
    const auto r = bisection_root([&](double t) { return tempered_entropy(z, t) - target; }, cfg);
    const double bound = cfg.max_expand + std::ceil(std::log2((r.bracket_upper - r.bracket_lower) / r.final_width));
    over_bound += r.iterations > bound;
    max_iters = std::max(max_iters, r.iterations);
    ++checked;
  }

  // Constant logits: the entropy function is flat at log2 C.
  int bracket_failures = 0;
  int degenerate = 0;
  const int degenerate_cases = 3;
  for (std::size_t c : {3u, 10u, 100u}) {
    const Knowledge z(std::vector<double>(c, 0.7));
    const double target = std::log2(static_cast<double>(c)) - 2.0 * cfg.tolerance;
    try {
      bisection_root([&](double t) { return tempered_entropy(z, t) - target; }, cfg);
    } catch (const Error& e) {
      bracket_failures += e.code() == ErrorCode::BracketFailure;
    }
    try {
      skr_refine(z, target, cfg);
    } catch (const Error& e) {
      degenerate += e.code() == ErrorCode::DegenerateKnowledge;
    }
  }
  report(10, "bisection contract",
         over_bound == 0 && bracket_failures == degenerate_cases && degenerate == degenerate_cases,
         std::to_string(checked) + " entropy searches, " + std::to_string(over_bound) +
             " over the iteration bound (max " + std::to_string(max_iters) + " halvings); constant logits: " +
             std::to_string(bracket_failures) + "/3 BracketFailure from bisection_root, " +
             std::to_string(degenerate) + "/3 DegenerateKnowledge from skr_refine");
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance-out");
  fs::create_directories(root);
  try {
    const auto corpora = peak_corpora();
    criterion_1(corpora);
    criterion_2();
    criterion_3(corpora);
    criterion_4();
    criterion_5();
    criterion_6();
    const TrendRuns runs = trend_runs(root);
    criterion_7(runs);
    criterion_8(runs);
    criterion_9(root);
    criterion_10();
    const auto none = runs.dirs.at(run_key("blobs", 0.5, "none"));
    const auto kkr = runs.dirs.at(run_key("blobs", 0.5, "kkr"));
    std::printf("\nnone vs kkr, blobs alpha=0.5 (means over seeds):\n%s", compare_runs(none.string(), kkr.string()).table().c_str());
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("\n%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
