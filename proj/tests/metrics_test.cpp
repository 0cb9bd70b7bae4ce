#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "feddkc/error.hpp"
#include "feddkc/metrics.hpp"

using namespace feddkc;

TEST(TopK, HandExample) {
  Matrix logits(2, 3);
  logits << 3, 2, 1, 1, 3, 2;
  const Labels labels{1, 0};
  EXPECT_DOUBLE_EQ(top_k_accuracy(logits, labels, 2), 0.5);
  EXPECT_DOUBLE_EQ(top_k_accuracy(logits, labels, 1), 0.0);
  EXPECT_DOUBLE_EQ(top_k_accuracy(logits, labels, 3), 1.0);
}

TEST(TopK, OneHotIsPerfectAndMonotoneInK) {
  Matrix logits = Matrix::Identity(4, 4);
  EXPECT_DOUBLE_EQ(top_k_accuracy(logits, Labels{0, 1, 2, 3}, 1), 1.0);
  Matrix random = Matrix::Random(50, 6);
  Labels labels;
  for (int i = 0; i < 50; ++i) labels.push_back(i % 6);
  double previous = 0.0;
  for (std::size_t k = 1; k <= 6; ++k) {
    const double acc = top_k_accuracy(random, labels, k);
    EXPECT_GE(acc, previous);
    previous = acc;
  }
  EXPECT_DOUBLE_EQ(previous, 1.0);
}

TEST(TopK, TiesFavourLowerIndex) {
  Matrix logits = Matrix::Zero(1, 3);
  EXPECT_DOUBLE_EQ(top_k_accuracy(logits, Labels{0}, 1), 1.0);
  EXPECT_DOUBLE_EQ(top_k_accuracy(logits, Labels{2}, 2), 0.0);
}

TEST(MaxPairwiseDiscrepancy, ComparesOtherClientsOnly) {
  const auto d = max_pairwise_discrepancy({{0.1, 0.5}, {0.4}, {0.45, 0.46}});
  ASSERT_EQ(d.size(), 3u);
  EXPECT_DOUBLE_EQ(d[0], 0.36);
  EXPECT_DOUBLE_EQ(d[1], 0.3);
  EXPECT_DOUBLE_EQ(d[2], 0.36);
}

TEST(MetricsLog, CsvRoundTripWithNan) {
  MetricsLog log;
  MetricsRow a;
  a.round = 0;
  a.client_id = 1;
  a.top1 = 0.25;
  a.top5 = 0.75;
  a.local_loss = a.server_loss = std::nan("");
  a.peak_discrepancy_max = a.entropy_discrepancy_max = std::nan("");
  MetricsRow b = a;
  b.round = 1;
  b.local_loss = 1.0 / 3.0;
  b.server_loss = 2.5;
  b.peak_discrepancy_max = 0.0;
  b.entropy_discrepancy_max = 1e-4;
  b.bytes_up = 1234;
  b.bytes_down = 56;
  log.rows = {a, b};
  std::ostringstream out;
  log.write_csv(out);
  const std::string text = out.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), MetricsLog::csv_header());
  EXPECT_NE(text.find("0,1,0.25,0.75,nan,nan,nan,nan,0,0"), std::string::npos) << text;

  const auto path = (std::filesystem::temp_directory_path() / "feddkc_metrics_test.csv").string();
  log.write_csv(path);
  const MetricsLog back = MetricsLog::read_csv(path);
  ASSERT_EQ(back.rows.size(), 2u);
  EXPECT_TRUE(std::isnan(back.rows[0].local_loss));
  EXPECT_NEAR(back.rows[1].local_loss, 1.0 / 3.0, 1e-9);
  EXPECT_EQ(back.rows[1].bytes_up, 1234u);
  EXPECT_EQ(back.last_round(), 1);
  std::filesystem::remove(path);
}

TEST(Summary, FinalAccuracyAndRoundsToReach) {
  MetricsLog log;
  const double top1[3][2] = {{0.1, 0.2}, {0.5, 0.7}, {0.8, 0.9}};
  for (int round = 0; round < 3; ++round) {
    for (int client = 1; client >= 0; --client) {
      MetricsRow r;
      r.round = round;
      r.client_id = client;
      r.top1 = top1[round][client];
      r.top5 = 1.0;
      log.rows.push_back(r);
    }
  }
  const RunSummary s = summarize(log);
  EXPECT_EQ(s.final_top1_per_client, (std::vector<double>{0.8, 0.9}));
  EXPECT_NEAR(s.avg_top1, 0.85, 1e-15);
  EXPECT_EQ(s.rounds_to_reach.at(50), 1);
  EXPECT_EQ(s.rounds_to_reach.at(60), 1);
  EXPECT_EQ(s.rounds_to_reach.at(80), 2);
  EXPECT_FALSE(s.rounds_to_reach.at(90).has_value());

  const RunSummary back = RunSummary::from_json(s.to_json());
  EXPECT_EQ(back.final_top1_per_client, s.final_top1_per_client);
  EXPECT_EQ(back.rounds_to_reach, s.rounds_to_reach);
  EXPECT_NE(s.to_json().find("\"50%\""), std::string::npos);
}

TEST(DiscrepancyTrace, TheoremBoundsAndSoftmaxContrast) {
  std::vector<Matrix> logits;
  Rng rng(3);
  for (int k = 0; k < 3; ++k) {
    Matrix m(20, 10);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = (k + 1) * rng.normal();
    logits.push_back(m);
  }
  RefinementConfig cfg;
  cfg.strategy = Strategy::KKR;
  const auto kkr = discrepancy_trace(logits, cfg);
  EXPECT_EQ(kkr.refined_peak, 0.0);
  for (double v : kkr.refined_peak_per_client) EXPECT_EQ(v, 0.0);
  EXPECT_GT(kkr.softmax_peak, 0.0);
  EXPECT_GT(kkr.softmax_entropy, 0.0);

  cfg.strategy = Strategy::SKR;
  const auto skr = discrepancy_trace(logits, cfg);
  EXPECT_LT(skr.refined_entropy, cfg.epsilon);
}
