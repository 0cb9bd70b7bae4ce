#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "feddkc/bisection.hpp"
#include "feddkc/knowledge.hpp"

namespace feddkc {

enum class Strategy { None, KKR, SKR, GeneralizedKKR };

std::string_view to_string(Strategy s);
// Accepts "none", "kkr", "skr", "gkkr" (case-insensitive).
std::optional<Strategy> parse_strategy(std::string_view text);

// Scalar kernel applied per dimension by the searched peak-probability
// refinement. A usable kernel is not a direct proportion, is continuous and
// non-decreasing, and stays positive on the inputs it is evaluated at.
class Kernel {
 public:
  enum class Kind { LinearAffine, Exponential, Custom };

  // sigma(x) = k*x + b with k > 0 and b > 0.
  static Kernel linear_affine(double k, double b);
  // sigma(x) = exp(x), evaluated in log space so large scales cannot overflow.
  static Kernel exponential();
  // Arbitrary kernel; validated by sampling on (0, sample_limit]. Throws
  // InvalidKernel if a sampled value is non-positive or non-finite, if the
  // kernel decreases anywhere on the grid, or if sigma(2x) == 2 sigma(x) at
  // every sample (a direct proportion).
  static Kernel custom(std::function<double(double)> fn, std::string name, double sample_limit = 100.0);

  Kind kind() const noexcept { return kind_; }
  const std::string& name() const noexcept { return name_; }
  double slope() const noexcept { return k_; }
  double offset() const noexcept { return b_; }
  double operator()(double x) const;

  // rho(t; p)_i = sigma(v_i / (t v_m)) / sum_j sigma(v_j / (t v_m)).
  void map_into(std::span<const double> probs, double peak, double t, std::span<double> out) const;

 private:
  Kernel(Kind kind, std::string name) : kind_(kind), name_(std::move(name)) {}

  Kind kind_;
  std::string name_;
  double k_ = 0.0;
  double b_ = 0.0;
  std::function<double(double)> fn_;
};

struct RefinementConfig {
  Strategy strategy = Strategy::None;
  double target_peak = 0.11;     // T
  double target_entropy = 3.3;   // E, bits
  double epsilon = 1e-3;         // congruence bound; searches stop at epsilon / 2
  BisectionConfig bisection{};
  Kernel kernel = Kernel::linear_affine(1.0, 1.0);

  // Bisection settings with the tolerance tied to epsilon / 2.
  BisectionConfig search_config() const;
  // Checks 1/C < T < 1, 0 < E < log2 C, epsilon > 0 and the bracket.
  void validate(std::size_t class_count) const;
};

// Closed-form peak refinement before rectification. Entries may be negative.
std::vector<double> kkr_closed_form(const ProbVector& p, double target_peak);

// Peak refinement: closed form, or the rectified vector (T at the lowest-index
// peak, (1-T)/(C-1) elsewhere) when the closed form leaves the simplex or the
// input is uniform to within 1e-8. The output peak is T in every branch.
// Throws InvalidTarget unless 1/C < T < 1.
ProbVector kkr_refine(const ProbVector& p, double target_peak);
ProbVector kkr_refine(const Knowledge& z, double target_peak);
// True when kkr_refine(p, T) takes the rectification branch.
bool kkr_rectifies(const ProbVector& p, double target_peak);

struct SkrResult {
  ProbVector probs;
  double theta;
  int iterations = 0;
  int expansions = 0;
};

// Temperature entropy of softmax(z / theta) in bits.
double tempered_entropy(const Knowledge& z, double theta);

// Entropy refinement: bisection on theta for H(softmax(z / theta)) = E, stopping
// at |H - E| < cfg.tolerance. Constant logits return the uniform vector when
// |E - log2 C| < cfg.tolerance and throw DegenerateKnowledge otherwise.
// Throws InvalidTarget unless 0 < E <= log2 C.
SkrResult skr_refine(const Knowledge& z, double target_entropy, const BisectionConfig& cfg);

struct GeneralizedKkrResult {
  ProbVector probs;
  double t;
  int iterations = 0;
};

// Searched peak refinement for an arbitrary kernel: bisection on the scale t
// for max(rho(t; softmax(z))) = T within epsilon / 2. The lower end of the
// bracket is raised until the kernel evaluates finitely there.
GeneralizedKkrResult generalized_kkr_refine(const Knowledge& z, const Kernel& kernel, double target_peak,
                                            double epsilon, const BisectionConfig& cfg);
GeneralizedKkrResult generalized_kkr_refine(const ProbVector& p, const Kernel& kernel, double target_peak,
                                            double epsilon, const BisectionConfig& cfg);

struct RefinementResult {
  ProbVector probs;
  // theta* for SKR, t for KKR variants (closed form t, NaN when rectified),
  // NaN for None.
  double parameter;
  bool rectified = false;
};

// Dispatch on cfg.strategy. None is plain softmax.
ProbVector refine(const Knowledge& z, const RefinementConfig& cfg);
RefinementResult refine_detailed(const Knowledge& z, const RefinementConfig& cfg);

// |measure(p1) - measure(p2)|. Throws DimensionMismatch.
double knowledge_discrepancy(const ProbVector& p1, const ProbVector& p2, DistMeasure measure);

// One line of the refinement debug dump.
struct RefinementEvent {
  int client_id = 0;
  int round = 0;
  Strategy strategy = Strategy::None;
  double theta_or_t = 0.0;
  double pre_peak = 0.0;
  double post_peak = 0.0;
  double pre_entropy = 0.0;
  double post_entropy = 0.0;
  bool fallback = false;
};

RefinementEvent make_event(int client_id, int round, const Knowledge& z, const RefinementResult& refined,
                           Strategy strategy, bool fallback = false);
// Single-line JSON object with keys client_id, round, strategy, theta_or_t,
// pre_peak, post_peak, pre_entropy, post_entropy (and fallback when set).
std::string to_json_line(const RefinementEvent& event);
RefinementEvent event_from_json_line(const std::string& line);

}  // namespace feddkc
