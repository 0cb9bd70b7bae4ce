#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "feddkc/neural.hpp"
#include "feddkc/refinement.hpp"

namespace feddkc {

// Line-oriented "key = value" text with [section] headers. '#' starts a
// comment. Keys are addressed as "section.key".
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& source = "<config>");
  static KeyValueConfig load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  const std::map<std::string, std::string>& values() const noexcept { return values_; }
  // 1-based source line of a key, 0 if unknown.
  std::size_t line_of(const std::string& key) const;

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::size_t> lines_;
};

struct DatasetSpec {
  std::string source = "synth";  // "synth" or "csv"
  std::string path;              // csv only, resolved against the config file
  std::size_t classes = 10;
  std::size_t per_class = 500;
  std::size_t dim = 32;
  double spread = 1.0;
  std::uint64_t synth_seed = 1;
  double test_fraction = 0.2;
};

struct RunConfig {
  DatasetSpec dataset;
  std::size_t clients = 5;
  double alpha = 0.5;
  int rounds = 30;
  std::size_t feature_dim = 16;
  std::vector<std::size_t> client_hidden{8, 16, 32, 64, 64};
  std::vector<std::size_t> server_hidden{128, 128};
  bool parallel_clients = false;
  TrainConfig train;
  RefinementConfig refinement;
  bool dump_events = false;
  std::vector<std::uint64_t> seeds{7};
  std::string output_dir = "feddkc-out";

  // Hidden width of client k's predictor; the list is cycled when shorter
  // than the client count.
  std::size_t hidden_width_for(std::size_t client) const;
  // Class count of the configured dataset (reads the CSV header if needed).
  std::size_t resolve_class_count() const;
  // Throws ConfigError naming the offending field.
  void validate() const;
  // Canonical config text; parse_run_config(to_text()) reproduces *this.
  std::string to_text() const;
};

// `base_dir` resolves relative dataset paths. Unknown keys are rejected.
RunConfig parse_run_config(const KeyValueConfig& kv, const std::string& base_dir = ".");
RunConfig load_run_config(const std::string& path);

}  // namespace feddkc
