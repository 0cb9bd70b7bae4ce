#include "feddkc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>

#include "feddkc/error.hpp"

namespace feddkc {

double top_k_accuracy(const Matrix& logits, std::span<const int> labels, std::size_t k) {
  if (labels.size() != static_cast<std::size_t>(logits.rows())) {
    throw Error(ErrorCode::DimensionMismatch, "top_k_accuracy: labels and logits rows differ");
  }
  const auto c = static_cast<std::size_t>(logits.cols());
  if (k == 0 || k > c) throw Error(ErrorCode::DimensionMismatch, "top_k_accuracy: k must be in [1, C]");
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const int label = labels[static_cast<std::size_t>(r)];
    if (label < 0 || static_cast<std::size_t>(label) >= c) {
      throw Error(ErrorCode::InvalidLabel, "top_k_accuracy: label out of range");
    }
    const double target = logits(r, label);
    std::size_t rank = 0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      if (logits(r, j) > target || (logits(r, j) == target && j < label)) ++rank;
    }
    if (rank < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

int MetricsLog::last_round() const {
  int last = -1;
  for (const auto& row : rows) last = std::max(last, row.round);
  return last;
}

std::vector<MetricsRow> MetricsLog::rows_for_round(int round) const {
  std::vector<MetricsRow> out;
  std::copy_if(rows.begin(), rows.end(), std::back_inserter(out), [&](const MetricsRow& r) { return r.round == round; });
  return out;
}

const char* MetricsLog::csv_header() {
  return "round,client_id,top1,top5,local_loss,server_loss,peak_discrepancy_max,entropy_discrepancy_max,bytes_up,"
         "bytes_down";
}

namespace {

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.9g", v);
  return buffer;
}

double parse_real(const std::string& text) {
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  return std::stod(text);
}

nlohmann::json optional_round(const std::optional<int>& r) { return r ? nlohmann::json(*r) : nlohmann::json(nullptr); }

}  // namespace

void MetricsLog::write_csv(std::ostream& out) const {
  out << csv_header() << '\n';
  for (const auto& r : rows) {
    out << r.round << ',' << r.client_id << ',' << format_real(r.top1) << ',' << format_real(r.top5) << ','
        << format_real(r.local_loss) << ',' << format_real(r.server_loss) << ',' << format_real(r.peak_discrepancy_max)
        << ',' << format_real(r.entropy_discrepancy_max) << ',' << r.bytes_up << ',' << r.bytes_down << '\n';
  }
}

void MetricsLog::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write metrics " + path);
  write_csv(out);
}

MetricsLog MetricsLog::read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read metrics " + path);
  MetricsLog log;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      if (line != csv_header()) throw ParseError(path, 1, "unexpected metrics header");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 10) throw ParseError(path, line_no, "expected 10 columns");
    try {
      MetricsRow r;
      r.round = std::stoi(f[0]);
      r.client_id = std::stoi(f[1]);
      r.top1 = parse_real(f[2]);
      r.top5 = parse_real(f[3]);
      r.local_loss = parse_real(f[4]);
      r.server_loss = parse_real(f[5]);
      r.peak_discrepancy_max = parse_real(f[6]);
      r.entropy_discrepancy_max = parse_real(f[7]);
      r.bytes_up = std::stoull(f[8]);
      r.bytes_down = std::stoull(f[9]);
      log.rows.push_back(r);
    } catch (const std::logic_error&) {
      throw ParseError(path, line_no, "malformed metrics row");
    }
  }
  return log;
}

std::string RunSummary::to_json() const {
  nlohmann::ordered_json reach = nlohmann::ordered_json::object();
  for (const auto& [pct, r] : rounds_to_reach) reach[std::to_string(pct) + "%"] = optional_round(r);
  const nlohmann::ordered_json j = {{"final_top1_per_client", final_top1_per_client},
                                    {"final_top5_per_client", final_top5_per_client},
                                    {"avg_top1", avg_top1},
                                    {"avg_top5", avg_top5},
                                    {"rounds_to_reach", reach}};
  return j.dump(2);
}

RunSummary RunSummary::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    RunSummary s;
    s.final_top1_per_client = j.at("final_top1_per_client").get<std::vector<double>>();
    s.final_top5_per_client = j.at("final_top5_per_client").get<std::vector<double>>();
    s.avg_top1 = j.at("avg_top1").get<double>();
    s.avg_top5 = j.at("avg_top5").get<double>();
    for (const auto& [key, value] : j.at("rounds_to_reach").items()) {
      const int pct = std::stoi(key);
      s.rounds_to_reach[pct] = value.is_null() ? std::nullopt : std::optional<int>(value.get<int>());
    }
    return s;
  } catch (const std::exception& e) {
    throw ParseError("run summary", 1, e.what());
  }
}

RunSummary summarize(const MetricsLog& log, const std::vector<int>& thresholds_pct) {
  RunSummary s;
  const int last = log.last_round();
  if (last < 0) return s;
  auto final_rows = log.rows_for_round(last);
  std::sort(final_rows.begin(), final_rows.end(), [](const auto& a, const auto& b) { return a.client_id < b.client_id; });
  for (const auto& r : final_rows) {
    s.final_top1_per_client.push_back(r.top1);
    s.final_top5_per_client.push_back(r.top5);
    s.avg_top1 += r.top1;
    s.avg_top5 += r.top5;
  }
  if (!final_rows.empty()) {
    s.avg_top1 /= static_cast<double>(final_rows.size());
    s.avg_top5 /= static_cast<double>(final_rows.size());
  }
  for (int pct : thresholds_pct) s.rounds_to_reach[pct] = std::nullopt;
  for (int round = 0; round <= last; ++round) {
    const auto rows = log.rows_for_round(round);
    if (rows.empty()) continue;
    double avg = 0.0;
    for (const auto& r : rows) avg += r.top1;
    avg /= static_cast<double>(rows.size());
    for (int pct : thresholds_pct) {
      auto& slot = s.rounds_to_reach[pct];
      if (!slot && avg * 100.0 >= pct) slot = round;
    }
  }
  return s;
}

std::vector<double> max_pairwise_discrepancy(const std::vector<std::vector<double>>& measures) {
  const std::size_t k = measures.size();
  std::vector<double> lo(k, std::numeric_limits<double>::infinity());
  std::vector<double> hi(k, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < k; ++i) {
    for (double v : measures[i]) {
      lo[i] = std::min(lo[i], v);
      hi[i] = std::max(hi[i], v);
    }
  }
  std::vector<double> out(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    if (measures[i].empty()) continue;
    for (std::size_t j = 0; j < k; ++j) {
      if (j == i || measures[j].empty()) continue;
      out[i] = std::max({out[i], hi[i] - lo[j], hi[j] - lo[i]});
    }
  }
  return out;
}

DiscrepancyTrace discrepancy_trace(const std::vector<Matrix>& client_logits, const RefinementConfig& cfg) {
  const std::size_t k = client_logits.size();
  std::vector<std::vector<double>> refined_peak(k), refined_entropy(k), plain_peak(k), plain_entropy(k);
  for (std::size_t i = 0; i < k; ++i) {
    const Matrix& logits = client_logits[i];
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      const Knowledge knowledge(row_vector(logits, r));
      const ProbVector plain = softmax(knowledge);
      ProbVector refined = plain;
      try {
        refined = refine(knowledge, cfg);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::InvalidTarget) throw;
      }
      plain_peak[i].push_back(peak_probability(plain).value);
      plain_entropy[i].push_back(shannon_entropy(plain));
      refined_peak[i].push_back(peak_probability(refined).value);
      refined_entropy[i].push_back(shannon_entropy(refined));
    }
  }
  auto overall = [](const std::vector<double>& v) { return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end()); };
  DiscrepancyTrace trace;
  trace.refined_peak_per_client = max_pairwise_discrepancy(refined_peak);
  trace.refined_entropy_per_client = max_pairwise_discrepancy(refined_entropy);
  trace.refined_peak = overall(trace.refined_peak_per_client);
  trace.refined_entropy = overall(trace.refined_entropy_per_client);
  trace.softmax_peak = overall(max_pairwise_discrepancy(plain_peak));
  trace.softmax_entropy = overall(max_pairwise_discrepancy(plain_entropy));
  return trace;
}

}  // namespace feddkc
