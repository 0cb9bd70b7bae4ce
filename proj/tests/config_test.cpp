#include <gtest/gtest.h>

#include "feddkc/config.hpp"
#include "feddkc/error.hpp"

using namespace feddkc;

namespace {

const std::string kSource = FEDDKC_SOURCE_DIR;

ConfigError config_error_of(const std::string& text) {
  try {
    parse_run_config(KeyValueConfig::parse(text)).validate();
  } catch (const ConfigError& e) {
    return e;
  }
  ADD_FAILURE() << "accepted: " << text;
  return ConfigError("", "");
}

}  // namespace

TEST(KeyValueConfig, SectionsCommentsAndLines) {
  const auto kv = KeyValueConfig::parse("# top\nname = x\n\n[a]\nk = 1   # trailing\n[b]\nk = two words\n");
  EXPECT_EQ(kv.get("name"), "x");
  EXPECT_EQ(kv.get("a.k"), "1");
  EXPECT_EQ(kv.get("b.k"), "two words");
  EXPECT_EQ(kv.line_of("b.k"), 7u);
  EXPECT_FALSE(kv.has("k"));
}

TEST(KeyValueConfig, MalformedInputIsParseError) {
  EXPECT_THROW(KeyValueConfig::parse("[a]\nno equals sign\n"), ParseError);
  EXPECT_THROW(KeyValueConfig::parse("[a\nk = 1\n"), ParseError);
  try {
    KeyValueConfig::parse("[a]\nk = 1\nk = 2\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(RunConfig, DefaultsMatchDocumentedSettings) {
  const RunConfig cfg = parse_run_config(KeyValueConfig::parse(""));
  EXPECT_EQ(cfg.train.batch_size, 256u);
  EXPECT_DOUBLE_EQ(cfg.train.learning_rate, 0.03);
  EXPECT_DOUBLE_EQ(cfg.train.weight_decay, 5e-4);
  EXPECT_DOUBLE_EQ(cfg.train.beta, 1.5);
  EXPECT_DOUBLE_EQ(cfg.refinement.target_peak, 0.11);
  EXPECT_DOUBLE_EQ(cfg.refinement.target_entropy, 3.3);
  EXPECT_EQ(cfg.client_hidden, (std::vector<std::size_t>{8, 16, 32, 64, 64}));
  EXPECT_EQ(cfg.server_hidden, (std::vector<std::size_t>{128, 128}));
  EXPECT_NO_THROW(cfg.validate());
}

TEST(RunConfig, LowTargetPeakCitesBound) {
  const auto e = config_error_of("[refinement]\nstrategy = kkr\ntarget_peak = 0.05\n");
  EXPECT_EQ(e.field(), "refinement.target_peak");
  EXPECT_NE(std::string(e.what()).find("1/C < T < 1"), std::string::npos);
}

TEST(RunConfig, FieldLevelErrors) {
  EXPECT_EQ(config_error_of("[federation]\nclients = 0\n").field(), "federation.clients");
  EXPECT_EQ(config_error_of("[federation]\nalpha = -1\n").field(), "federation.alpha");
  EXPECT_EQ(config_error_of("[federation]\nalpha = abc\n").field(), "federation.alpha");
  EXPECT_EQ(config_error_of("[train]\nbatch_size = 0\n").field(), "train.batch_size");
  EXPECT_EQ(config_error_of("[train]\nbogus = 1\n").field(), "train.bogus");
  EXPECT_EQ(config_error_of("[refinement]\nstrategy = fancy\n").field(), "refinement.strategy");
  EXPECT_EQ(config_error_of("[refinement]\nstrategy = skr\ntarget_entropy = 4\n").field(),
            "refinement.target_entropy");
  EXPECT_EQ(config_error_of("[dataset]\nsource = csv\n").field(), "dataset.path");
  EXPECT_EQ(config_error_of("[run]\nseeds = 1, x\n").field(), "run.seeds");
}

TEST(RunConfig, CanonicalTextRoundTrips) {
  const std::string text =
      "[dataset]\nsource = synth\nclasses = 7\nper_class = 11\nspread = 0.3\n"
      "[federation]\nclients = 3\nalpha = 0.1\nrounds = 4\nclient_hidden = 3, 5\n"
      "[train]\nlearning_rate = 0.07\nbeta = 0.5\n"
      "[refinement]\nstrategy = gkkr\nkernel = exp\ntarget_peak = 0.2\nepsilon = 1e-4\n"
      "[run]\nseeds = 1, 2, 3\noutput_dir = elsewhere\n";
  const RunConfig cfg = parse_run_config(KeyValueConfig::parse(text));
  const std::string canonical = cfg.to_text();
  const RunConfig again = parse_run_config(KeyValueConfig::parse(canonical));
  EXPECT_EQ(again.to_text(), canonical);
  EXPECT_EQ(again.dataset.classes, 7u);
  EXPECT_EQ(again.clients, 3u);
  EXPECT_EQ(again.refinement.strategy, Strategy::GeneralizedKKR);
  EXPECT_EQ(again.refinement.kernel.kind(), Kernel::Kind::Exponential);
  EXPECT_EQ(again.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_DOUBLE_EQ(again.refinement.epsilon, 1e-4);
  EXPECT_EQ(again.hidden_width_for(2), 3u);
}

TEST(RunConfig, CsvPathResolvesAgainstConfigDirectory) {
  const RunConfig cfg = load_run_config(kSource + "/configs/acceptance_digits.cfg");
  EXPECT_EQ(cfg.dataset.source, "csv");
  EXPECT_EQ(cfg.dataset.path, kSource + "/data/digits.csv");
  EXPECT_EQ(cfg.resolve_class_count(), 10u);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(RunConfig, BundledConfigsValidate) {
  for (const char* name : {"smoke.cfg", "acceptance_blobs.cfg", "acceptance_digits.cfg"}) {
    EXPECT_NO_THROW(load_run_config(kSource + "/configs/" + name).validate()) << name;
  }
}
