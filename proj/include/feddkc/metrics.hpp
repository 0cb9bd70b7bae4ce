#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "feddkc/neural.hpp"
#include "feddkc/refinement.hpp"

namespace feddkc {

// Fraction of rows whose label ranks among the k largest logits. A logit tied
// with the label's outranks it when its index is lower.
double top_k_accuracy(const Matrix& logits, std::span<const int> labels, std::size_t k);

struct MetricsRow {
  int round = 0;
  int client_id = 0;
  double top1 = 0.0;
  double top5 = 0.0;
  double local_loss = 0.0;   // NaN before any training
  double server_loss = 0.0;  // NaN before any training
  double peak_discrepancy_max = 0.0;
  double entropy_discrepancy_max = 0.0;
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
};

struct MetricsLog {
  std::vector<MetricsRow> rows;

  int last_round() const;
  std::vector<MetricsRow> rows_for_round(int round) const;

  static const char* csv_header();
  void write_csv(std::ostream& out) const;
  void write_csv(const std::string& path) const;
  static MetricsLog read_csv(const std::string& path);
};

struct RunSummary {
  std::vector<double> final_top1_per_client;
  std::vector<double> final_top5_per_client;
  double avg_top1 = 0.0;
  double avg_top5 = 0.0;
  // Threshold (percent) -> first round whose average Top-1 reaches it.
  std::map<int, std::optional<int>> rounds_to_reach;

  std::string to_json() const;
  static RunSummary from_json(const std::string& text);
};

RunSummary summarize(const MetricsLog& log, const std::vector<int>& thresholds_pct = {50, 60, 70, 80, 90});

// Max over clients l != k and all row pairs of |m_k - m_l|, for every client k.
// `measures[k]` holds the per-row measure values of client k.
std::vector<double> max_pairwise_discrepancy(const std::vector<std::vector<double>>& measures);

struct DiscrepancyTrace {
  double refined_peak = 0.0;
  double refined_entropy = 0.0;
  double softmax_peak = 0.0;
  double softmax_entropy = 0.0;
  std::vector<double> refined_peak_per_client;
  std::vector<double> refined_entropy_per_client;
};

// Pairwise discrepancy of one round's local knowledge (one matrix per client,
// rows are logits), both after refinement under `cfg` and under plain softmax.
// Rows that cannot be refined fall back to softmax, as in server_round.
DiscrepancyTrace discrepancy_trace(const std::vector<Matrix>& client_logits, const RefinementConfig& cfg);

}  // namespace feddkc
