#include "feddkc/config.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "feddkc/error.hpp"

namespace feddkc {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string real_text(double v) {
  char buffer[40];
  const auto r = std::to_chars(buffer, buffer + sizeof(buffer), v);
  return std::string(buffer, r.ptr);
}

template <typename T>
std::string join(const std::vector<T>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(items[i]);
  }
  return out;
}

// Typed access that reports the field on failure.
class Reader {
 public:
  explicit Reader(const KeyValueConfig& kv) : kv_(kv) {}

  template <typename T>
  void integer(const std::string& key, T& out) {
    if (!take(key)) return;
    const std::string& text = kv_.get(key);
    long long v = 0;
    const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
    if (r.ec != std::errc() || r.ptr != text.data() + text.size()) fail(key, "expected an integer, got '" + text + "'");
    if constexpr (std::is_unsigned_v<T>) {
      if (v < 0) fail(key, "must be non-negative");
    }
    out = static_cast<T>(v);
  }

  void real(const std::string& key, double& out) {
    if (!take(key)) return;
    const std::string& text = kv_.get(key);
    double v = 0.0;
    const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
    if (r.ec != std::errc() || r.ptr != text.data() + text.size()) fail(key, "expected a number, got '" + text + "'");
    out = v;
  }

  void boolean(const std::string& key, bool& out) {
    if (!take(key)) return;
    const std::string& text = kv_.get(key);
    if (text == "true" || text == "1" || text == "yes") {
      out = true;
    } else if (text == "false" || text == "0" || text == "no") {
      out = false;
    } else {
      fail(key, "expected true or false");
    }
  }

  void text(const std::string& key, std::string& out) {
    if (take(key)) out = kv_.get(key);
  }

  template <typename T>
  void list(const std::string& key, std::vector<T>& out) {
    if (!take(key)) return;
    std::vector<T> parsed;
    std::stringstream ss(kv_.get(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      unsigned long long v = 0;
      const auto r = std::from_chars(item.data(), item.data() + item.size(), v);
      if (item.empty() || r.ec != std::errc() || r.ptr != item.data() + item.size()) {
        fail(key, "expected a comma-separated list of non-negative integers");
      }
      parsed.push_back(static_cast<T>(v));
    }
    if (parsed.empty()) fail(key, "list is empty");
    out = std::move(parsed);
  }

  void reject_unknown() const {
    for (const auto& [key, value] : kv_.values()) {
      if (!used_.count(key)) fail(key, "unknown key");
    }
  }

 private:
  bool take(const std::string& key) {
    used_.insert(key);
    return kv_.has(key);
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    const std::size_t line = kv_.line_of(key);
    throw ConfigError(key, what + (line ? " (line " + std::to_string(line) + ")" : std::string()));
  }

  const KeyValueConfig& kv_;
  std::set<std::string> used_;
};

}  // namespace

// ------------------------------------------------------- KeyValueConfig

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& source) {
  KeyValueConfig cfg;
  std::stringstream in(text);
  std::string raw;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) throw ParseError(source, line_no, "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(source, line_no, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(source, line_no, "empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    if (cfg.values_.count(full)) throw ParseError(source, line_no, "duplicate key '" + full + "'");
    cfg.values_[full] = trim(line.substr(eq + 1));
    cfg.lines_[full] = line_no;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read config " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), path);
}

const std::string& KeyValueConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key, "missing");
  return it->second;
}

std::size_t KeyValueConfig::line_of(const std::string& key) const {
  const auto it = lines_.find(key);
  return it == lines_.end() ? 0 : it->second;
}

// ------------------------------------------------------------ RunConfig

std::size_t RunConfig::hidden_width_for(std::size_t client) const {
  return client_hidden[client % client_hidden.size()];
}

std::size_t RunConfig::resolve_class_count() const {
  if (dataset.source == "synth") return dataset.classes;
  std::ifstream in(dataset.path);
  if (!in) throw ConfigError("dataset.path", "cannot open '" + dataset.path + "'");
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) break;
    try {
      return static_cast<std::size_t>(std::stoul(line.substr(comma + 1)));
    } catch (const std::logic_error&) {
      break;
    }
  }
  throw ConfigError("dataset.path", "'" + dataset.path + "' has no 'd,C' header");
}

void RunConfig::validate() const {
  if (dataset.source != "synth" && dataset.source != "csv") {
    throw ConfigError("dataset.source", "must be 'synth' or 'csv'");
  }
  if (dataset.source == "synth") {
    if (dataset.classes < 2) throw ConfigError("dataset.classes", "must be >= 2");
    if (dataset.per_class == 0) throw ConfigError("dataset.per_class", "must be > 0");
    if (dataset.dim == 0) throw ConfigError("dataset.dim", "must be > 0");
    if (!(dataset.spread >= 0.0) || !std::isfinite(dataset.spread)) throw ConfigError("dataset.spread", "must be >= 0");
  } else if (dataset.path.empty()) {
    throw ConfigError("dataset.path", "required when source = csv");
  }
  if (!(dataset.test_fraction > 0.0 && dataset.test_fraction < 1.0)) {
    throw ConfigError("dataset.test_fraction", "must be in (0, 1)");
  }
  if (clients == 0 || clients > 100) throw ConfigError("federation.clients", "must be in [1, 100]");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("federation.alpha", "must be > 0");
  if (rounds < 0) throw ConfigError("federation.rounds", "must be >= 0");
  if (feature_dim == 0) throw ConfigError("federation.feature_dim", "must be > 0");
  for (std::size_t w : client_hidden) {
    if (w == 0) throw ConfigError("federation.client_hidden", "widths must be > 0");
  }
  for (std::size_t w : server_hidden) {
    if (w == 0) throw ConfigError("federation.server_hidden", "widths must be > 0");
  }
  if (seeds.empty()) throw ConfigError("run.seeds", "needs at least one seed");
  if (output_dir.empty()) throw ConfigError("run.output_dir", "must not be empty");
  train.validate();
  refinement.validate(resolve_class_count());
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  out << "[dataset]\n";
  out << "source = " << dataset.source << '\n';
  if (dataset.source == "csv") {
    out << "path = " << dataset.path << '\n';
  } else {
    out << "classes = " << dataset.classes << '\n';
    out << "per_class = " << dataset.per_class << '\n';
    out << "dim = " << dataset.dim << '\n';
    out << "spread = " << real_text(dataset.spread) << '\n';
    out << "synth_seed = " << dataset.synth_seed << '\n';
  }
  out << "test_fraction = " << real_text(dataset.test_fraction) << '\n';
  out << "\n[federation]\n";
  out << "clients = " << clients << '\n';
  out << "alpha = " << real_text(alpha) << '\n';
  out << "rounds = " << rounds << '\n';
  out << "feature_dim = " << feature_dim << '\n';
  out << "client_hidden = " << join(client_hidden) << '\n';
  out << "server_hidden = " << join(server_hidden) << '\n';
  out << "parallel_clients = " << (parallel_clients ? "true" : "false") << '\n';
  out << "\n[train]\n";
  out << "learning_rate = " << real_text(train.learning_rate) << '\n';
  out << "batch_size = " << train.batch_size << '\n';
  out << "weight_decay = " << real_text(train.weight_decay) << '\n';
  out << "beta = " << real_text(train.beta) << '\n';
  out << "local_epochs = " << train.local_epochs << '\n';
  out << "server_epochs = " << train.server_epochs << '\n';
  out << "\n[refinement]\n";
  out << "strategy = " << to_string(refinement.strategy) << '\n';
  out << "target_peak = " << real_text(refinement.target_peak) << '\n';
  out << "target_entropy = " << real_text(refinement.target_entropy) << '\n';
  out << "epsilon = " << real_text(refinement.epsilon) << '\n';
  out << "kernel = " << (refinement.kernel.kind() == Kernel::Kind::Exponential ? "exp" : "affine") << '\n';
  if (refinement.kernel.kind() == Kernel::Kind::LinearAffine) {
    out << "kernel_k = " << real_text(refinement.kernel.slope()) << '\n';
    out << "kernel_b = " << real_text(refinement.kernel.offset()) << '\n';
  }
  out << "bisection_lower = " << real_text(refinement.bisection.lower) << '\n';
  out << "bisection_upper = " << real_text(refinement.bisection.upper) << '\n';
  out << "bisection_max_expand = " << refinement.bisection.max_expand << '\n';
  out << "bisection_max_iters = " << refinement.bisection.max_iters << '\n';
  out << "dump_events = " << (dump_events ? "true" : "false") << '\n';
  out << "\n[run]\n";
  out << "seeds = " << join(seeds) << '\n';
  out << "output_dir = " << output_dir << '\n';
  return out.str();
}

RunConfig parse_run_config(const KeyValueConfig& kv, const std::string& base_dir) {
  RunConfig cfg;
  Reader r(kv);
  r.text("dataset.source", cfg.dataset.source);
  r.text("dataset.path", cfg.dataset.path);
  r.integer("dataset.classes", cfg.dataset.classes);
  r.integer("dataset.per_class", cfg.dataset.per_class);
  r.integer("dataset.dim", cfg.dataset.dim);
  r.real("dataset.spread", cfg.dataset.spread);
  r.integer("dataset.synth_seed", cfg.dataset.synth_seed);
  r.real("dataset.test_fraction", cfg.dataset.test_fraction);

  r.integer("federation.clients", cfg.clients);
  r.real("federation.alpha", cfg.alpha);
  r.integer("federation.rounds", cfg.rounds);
  r.integer("federation.feature_dim", cfg.feature_dim);
  r.list("federation.client_hidden", cfg.client_hidden);
  r.list("federation.server_hidden", cfg.server_hidden);
  r.boolean("federation.parallel_clients", cfg.parallel_clients);

  r.real("train.learning_rate", cfg.train.learning_rate);
  r.integer("train.batch_size", cfg.train.batch_size);
  r.real("train.weight_decay", cfg.train.weight_decay);
  r.real("train.beta", cfg.train.beta);
  r.integer("train.local_epochs", cfg.train.local_epochs);
  r.integer("train.server_epochs", cfg.train.server_epochs);

  std::string strategy = "none";
  r.text("refinement.strategy", strategy);
  const auto parsed = parse_strategy(strategy);
  if (!parsed) throw ConfigError("refinement.strategy", "must be one of none, kkr, skr, gkkr (got '" + strategy + "')");
  cfg.refinement.strategy = *parsed;
  r.real("refinement.target_peak", cfg.refinement.target_peak);
  r.real("refinement.target_entropy", cfg.refinement.target_entropy);
  r.real("refinement.epsilon", cfg.refinement.epsilon);
  std::string kernel = "affine";
  double kernel_k = 1.0;
  double kernel_b = 1.0;
  r.text("refinement.kernel", kernel);
  r.real("refinement.kernel_k", kernel_k);
  r.real("refinement.kernel_b", kernel_b);
  if (kernel == "affine") {
    try {
      cfg.refinement.kernel = Kernel::linear_affine(kernel_k, kernel_b);
    } catch (const Error&) {
      throw ConfigError("refinement.kernel_k", "affine kernel needs kernel_k > 0 and kernel_b > 0");
    }
  } else if (kernel == "exp") {
    cfg.refinement.kernel = Kernel::exponential();
  } else {
    throw ConfigError("refinement.kernel", "must be 'affine' or 'exp'");
  }
  r.real("refinement.bisection_lower", cfg.refinement.bisection.lower);
  r.real("refinement.bisection_upper", cfg.refinement.bisection.upper);
  r.integer("refinement.bisection_max_expand", cfg.refinement.bisection.max_expand);
  r.integer("refinement.bisection_max_iters", cfg.refinement.bisection.max_iters);
  r.boolean("refinement.dump_events", cfg.dump_events);

  r.list("run.seeds", cfg.seeds);
  r.text("run.output_dir", cfg.output_dir);
  r.reject_unknown();

  if (!cfg.dataset.path.empty()) {
    const std::filesystem::path p(cfg.dataset.path);
    if (p.is_relative()) cfg.dataset.path = (std::filesystem::path(base_dir) / p).lexically_normal().string();
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  const auto base = std::filesystem::absolute(path).parent_path();
  return parse_run_config(KeyValueConfig::load(path), base.string());
}

}  // namespace feddkc
