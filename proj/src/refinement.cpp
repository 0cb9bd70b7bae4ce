#include "feddkc/refinement.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>

#include "feddkc/error.hpp"

namespace feddkc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
// |C v_m - 1| below this is treated as a uniform input.
constexpr double kUniformTolerance = 1e-8;

void require_peak_target(std::size_t c, double target_peak) {
  const double floor = 1.0 / static_cast<double>(c);
  if (!(target_peak > floor && target_peak < 1.0)) {
    throw Error(ErrorCode::InvalidTarget, "target peak T=" + std::to_string(target_peak) +
                                              " must satisfy 1/C < T < 1 (1/C=" + std::to_string(floor) + ")");
  }
}

std::vector<double> rectified(std::size_t c, std::size_t peak_index, double target_peak) {
  std::vector<double> out(c, (1.0 - target_peak) / static_cast<double>(c - 1));
  out[peak_index] = target_peak;
  return out;
}

}  // namespace

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::None: return "none";
    case Strategy::KKR: return "kkr";
    case Strategy::SKR: return "skr";
    case Strategy::GeneralizedKKR: return "gkkr";
  }
  return "none";
}

std::optional<Strategy> parse_strategy(std::string_view text) {
  std::string lowered(text);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  if (lowered == "none") return Strategy::None;
  if (lowered == "kkr") return Strategy::KKR;
  if (lowered == "skr") return Strategy::SKR;
  if (lowered == "gkkr" || lowered == "generalized_kkr") return Strategy::GeneralizedKKR;
  return std::nullopt;
}

// ---------------------------------------------------------------- Kernel

Kernel Kernel::linear_affine(double k, double b) {
  if (!(k > 0.0) || !(b > 0.0) || !std::isfinite(k) || !std::isfinite(b)) {
    throw Error(ErrorCode::InvalidKernel, "affine kernel needs k > 0 and b > 0");
  }
  Kernel kernel(Kind::LinearAffine, "affine");
  kernel.k_ = k;
  kernel.b_ = b;
  return kernel;
}

Kernel Kernel::exponential() { return Kernel(Kind::Exponential, "exp"); }

Kernel Kernel::custom(std::function<double(double)> fn, std::string name, double sample_limit) {
  if (!fn) throw Error(ErrorCode::InvalidKernel, "custom kernel '" + name + "' is empty");
  if (!(sample_limit > 0.0)) throw Error(ErrorCode::InvalidKernel, "sample limit must be positive");
  constexpr int kSamples = 1000;
  const double lo = std::min(1e-6, sample_limit);
  const double ratio = std::pow(sample_limit / lo, 1.0 / (kSamples - 1));
  double x = lo;
  double previous = -std::numeric_limits<double>::infinity();
  bool proportional_everywhere = true;
  for (int i = 0; i < kSamples; ++i, x *= ratio) {
    const double y = fn(x);
    if (!std::isfinite(y) || !(y > 0.0)) {
      throw Error(ErrorCode::InvalidKernel,
                  "kernel '" + name + "' is not positive and finite at x=" + std::to_string(x));
    }
    if (y < previous) {
      throw Error(ErrorCode::InvalidKernel, "kernel '" + name + "' decreases near x=" + std::to_string(x));
    }
    previous = y;
    const double doubled = fn(2.0 * x);
    if (std::abs(doubled - 2.0 * y) > 1e-12 * std::max(1.0, std::abs(y))) proportional_everywhere = false;
  }
  if (proportional_everywhere) {
    throw Error(ErrorCode::InvalidKernel, "kernel '" + name + "' is a direct proportion");
  }
  Kernel kernel(Kind::Custom, std::move(name));
  kernel.fn_ = std::move(fn);
  return kernel;
}

double Kernel::operator()(double x) const {
  switch (kind_) {
    case Kind::LinearAffine: return k_ * x + b_;
    case Kind::Exponential: return std::exp(x);
    case Kind::Custom: return fn_(x);
  }
  return kNaN;
}

void Kernel::map_into(std::span<const double> probs, double peak, double t, std::span<double> out) const {
  const double scale = 1.0 / (t * peak);
  if (kind_ == Kind::Exponential) {
    detail::softmax_into(probs, scale, out);
    return;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    out[i] = (*this)(probs[i] * scale);
    total += out[i];
  }
  for (auto& v : out) v /= total;
}

// ------------------------------------------------------- RefinementConfig

BisectionConfig RefinementConfig::search_config() const {
  BisectionConfig cfg = bisection;
  cfg.tolerance = 0.5 * epsilon;
  return cfg;
}

void RefinementConfig::validate(std::size_t class_count) const {
  if (class_count < 2) throw ConfigError("refinement", "needs at least two classes");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ConfigError("refinement.epsilon", "must be > 0");
  search_config().validate();
  const double c = static_cast<double>(class_count);
  if (strategy == Strategy::KKR || strategy == Strategy::GeneralizedKKR) {
    if (!(target_peak > 1.0 / c && target_peak < 1.0)) {
      throw ConfigError("refinement.target_peak", "must satisfy 1/C < T < 1 (C=" + std::to_string(class_count) +
                                                      ", 1/C=" + std::to_string(1.0 / c) +
                                                      ", got T=" + std::to_string(target_peak) + ")");
    }
  }
  if (strategy == Strategy::SKR) {
    if (!(target_entropy > 0.0 && target_entropy < std::log2(c))) {
      throw ConfigError("refinement.target_entropy", "must satisfy 0 < E < log2 C (C=" +
                                                         std::to_string(class_count) + ", log2 C=" +
                                                         std::to_string(std::log2(c)) +
                                                         ", got E=" + std::to_string(target_entropy) + ")");
    }
  }
}

// ------------------------------------------------------------------- KKR

std::vector<double> kkr_closed_form(const ProbVector& p, double target_peak) {
  const std::size_t c = p.class_count();
  require_peak_target(c, target_peak);
  const double peak = peak_probability(p).value;
  const double denom = static_cast<double>(c) * peak - 1.0;
  const double slope = static_cast<double>(c) * target_peak - 1.0;
  // T - (CT-1)(v_m - v_i)/(C v_m - 1): algebraically the closed form, but
  // exact on the peak entry.
  std::vector<double> out(c);
  for (std::size_t i = 0; i < c; ++i) out[i] = target_peak - slope * (peak - p[i]) / denom;
  return out;
}

bool kkr_rectifies(const ProbVector& p, double target_peak) {
  require_peak_target(p.class_count(), target_peak);
  const double peak = peak_probability(p).value;
  if (std::abs(static_cast<double>(p.class_count()) * peak - 1.0) < kUniformTolerance) return true;
  const auto closed = kkr_closed_form(p, target_peak);
  return std::any_of(closed.begin(), closed.end(), [](double v) { return v < 0.0; });
}

ProbVector kkr_refine(const ProbVector& p, double target_peak) {
  const std::size_t c = p.class_count();
  require_peak_target(c, target_peak);
  const Peak peak = peak_probability(p);
  if (std::abs(static_cast<double>(c) * peak.value - 1.0) < kUniformTolerance) {
    return ProbVector(rectified(c, peak.index, target_peak));
  }
  auto closed = kkr_closed_form(p, target_peak);
  if (std::any_of(closed.begin(), closed.end(), [](double v) { return v < 0.0; })) {
    return ProbVector(rectified(c, peak.index, target_peak));
  }
  return ProbVector(std::move(closed));
}

ProbVector kkr_refine(const Knowledge& z, double target_peak) { return kkr_refine(softmax(z), target_peak); }

// ------------------------------------------------------------------- SKR

double tempered_entropy(const Knowledge& z, double theta) {
  std::vector<double> buffer(z.class_count());
  detail::softmax_into(z.values(), 1.0 / theta, buffer);
  return detail::entropy_bits(buffer);
}

SkrResult skr_refine(const Knowledge& z, double target_entropy, const BisectionConfig& cfg) {
  const std::size_t c = z.class_count();
  const double max_entropy = std::log2(static_cast<double>(c));
  if (!(target_entropy > 0.0 && target_entropy <= max_entropy)) {
    throw Error(ErrorCode::InvalidTarget, "target entropy E=" + std::to_string(target_entropy) +
                                              " must satisfy 0 < E <= log2 C (" + std::to_string(max_entropy) + ")");
  }
  const auto values = z.values();
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  if (*lo_it == *hi_it) {
    if (std::abs(target_entropy - max_entropy) < cfg.tolerance) {
      return SkrResult{ProbVector(std::vector<double>(c, 1.0 / static_cast<double>(c))), 1.0};
    }
    throw Error(ErrorCode::DegenerateKnowledge, "constant logits have entropy log2 C at every temperature; E=" +
                                                    std::to_string(target_entropy) + " is unreachable");
  }

  std::vector<double> buffer(c);
  auto entropy_gap = [&](double theta) {
    detail::softmax_into(values, 1.0 / theta, buffer);
    return detail::entropy_bits(buffer) - target_entropy;
  };
  const BisectionResult found = bisection_root(entropy_gap, cfg);
  detail::softmax_into(values, 1.0 / found.root, buffer);
  return SkrResult{ProbVector(buffer), found.root, found.iterations, found.expansions};
}

// ------------------------------------------------------ Generalized KKR

GeneralizedKkrResult generalized_kkr_refine(const ProbVector& p, const Kernel& kernel, double target_peak,
                                            double epsilon, const BisectionConfig& cfg) {
  const std::size_t c = p.class_count();
  require_peak_target(c, target_peak);
  if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidTarget, "epsilon must be > 0");
  const double peak = peak_probability(p).value;
  std::vector<double> buffer(c);
  auto peak_gap = [&](double t) {
    kernel.map_into(p.probs(), peak, t, buffer);
    return detail::argmax(buffer).value - target_peak;
  };

  BisectionConfig search = cfg;
  search.tolerance = 0.5 * epsilon;
  while (!std::isfinite(peak_gap(search.lower)) && search.lower * 2.0 < search.upper) search.lower *= 2.0;

  BisectionResult found;
  try {
    found = bisection_root(peak_gap, search);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::BracketFailure) throw;
    throw Error(ErrorCode::BracketFailure, "kernel '" + kernel.name() + "' cannot reach peak T=" +
                                               std::to_string(target_peak) + " for input peak " +
                                               std::to_string(peak) + " (" + e.what() + ")");
  }
  kernel.map_into(p.probs(), peak, found.root, buffer);
  return GeneralizedKkrResult{ProbVector(buffer), found.root, found.iterations};
}

GeneralizedKkrResult generalized_kkr_refine(const Knowledge& z, const Kernel& kernel, double target_peak,
                                            double epsilon, const BisectionConfig& cfg) {
  return generalized_kkr_refine(softmax(z), kernel, target_peak, epsilon, cfg);
}

// -------------------------------------------------------------- dispatch

RefinementResult refine_detailed(const Knowledge& z, const RefinementConfig& cfg) {
  switch (cfg.strategy) {
    case Strategy::None:
      return RefinementResult{softmax(z), kNaN};
    case Strategy::KKR: {
      ProbVector p = softmax(z);
      const bool rect = kkr_rectifies(p, cfg.target_peak);
      const double peak = peak_probability(p).value;
      const double c = static_cast<double>(z.class_count());
      const double t = rect ? kNaN : (peak - cfg.target_peak) / (peak * (c * cfg.target_peak - 1.0));
      return RefinementResult{kkr_refine(p, cfg.target_peak), t, rect};
    }
    case Strategy::SKR: {
      SkrResult r = skr_refine(z, cfg.target_entropy, cfg.search_config());
      return RefinementResult{std::move(r.probs), r.theta};
    }
    case Strategy::GeneralizedKKR: {
      GeneralizedKkrResult r = generalized_kkr_refine(z, cfg.kernel, cfg.target_peak, cfg.epsilon, cfg.bisection);
      return RefinementResult{std::move(r.probs), r.t};
    }
  }
  return RefinementResult{softmax(z), kNaN};
}

ProbVector refine(const Knowledge& z, const RefinementConfig& cfg) { return refine_detailed(z, cfg).probs; }

double knowledge_discrepancy(const ProbVector& p1, const ProbVector& p2, DistMeasure measure) {
  if (p1.class_count() != p2.class_count()) {
    throw Error(ErrorCode::DimensionMismatch, "knowledge_discrepancy: lengths " +
                                                  std::to_string(p1.class_count()) + " and " +
                                                  std::to_string(p2.class_count()));
  }
  return std::abs(evaluate(measure, p1) - evaluate(measure, p2));
}

// ------------------------------------------------------------ debug dump

RefinementEvent make_event(int client_id, int round, const Knowledge& z, const RefinementResult& refined,
                           Strategy strategy, bool fallback) {
  const ProbVector pre = softmax(z);
  RefinementEvent event;
  event.client_id = client_id;
  event.round = round;
  event.strategy = strategy;
  event.theta_or_t = refined.parameter;
  event.pre_peak = peak_probability(pre).value;
  event.post_peak = peak_probability(refined.probs).value;
  event.pre_entropy = shannon_entropy(pre);
  event.post_entropy = shannon_entropy(refined.probs);
  event.fallback = fallback;
  return event;
}

std::string to_json_line(const RefinementEvent& event) {
  nlohmann::ordered_json j;
  j["client_id"] = event.client_id;
  j["round"] = event.round;
  j["strategy"] = std::string(to_string(event.strategy));
  // JSON has no NaN; parameter-free strategies write null.
  if (std::isfinite(event.theta_or_t)) {
    j["theta_or_t"] = event.theta_or_t;
  } else {
    j["theta_or_t"] = nullptr;
  }
  j["pre_peak"] = event.pre_peak;
  j["post_peak"] = event.post_peak;
  j["pre_entropy"] = event.pre_entropy;
  j["post_entropy"] = event.post_entropy;
  if (event.fallback) j["fallback"] = true;
  return j.dump();
}

RefinementEvent event_from_json_line(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("refinement event", 1, e.what());
  }
  RefinementEvent event;
  event.client_id = j.at("client_id").get<int>();
  event.round = j.at("round").get<int>();
  event.strategy = parse_strategy(j.at("strategy").get<std::string>()).value_or(Strategy::None);
  event.theta_or_t = j.at("theta_or_t").is_null() ? kNaN : j.at("theta_or_t").get<double>();
  event.pre_peak = j.at("pre_peak").get<double>();
  event.post_peak = j.at("post_peak").get<double>();
  event.pre_entropy = j.at("pre_entropy").get<double>();
  event.post_entropy = j.at("post_entropy").get<double>();
  event.fallback = j.value("fallback", false);
  return event;
}

}  // namespace feddkc
