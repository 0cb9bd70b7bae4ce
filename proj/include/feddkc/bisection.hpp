#pragma once

#include <functional>

namespace feddkc {

struct BisectionConfig {
  double lower = 1e-6;
  double upper = 1e6;
  // Doublings of `upper` attempted when f(lower) and f(upper) share a sign.
  int max_expand = 40;
  // Stop once |f(x)| < tolerance. Refinement sets this to epsilon / 2.
  double tolerance = 5e-4;
  int max_iters = 200;

  void validate() const;
};

struct BisectionResult {
  double root = 0.0;
  double residual = 0.0;
  int iterations = 0;  // halvings of the bracket
  int expansions = 0;  // doublings of the upper bound
  double bracket_lower = 0.0;  // bracket after expansion, before halving
  double bracket_upper = 0.0;
  double final_width = 0.0;  // width of the bracket that contained `root`
};

// Bisection on a sign-changing bracket. When f(lo) and f(hi) agree in sign the
// upper end is doubled up to `max_expand` times; if no sign change appears the
// call throws BracketFailure. Returns the first probe with |f| < tol. Running
// out of `max_iters` halvings throws ToleranceNotMet carrying the midpoint.
BisectionResult bisection_root(const std::function<double(double)>& f, double lo, double hi, double tol,
                               int max_iters, int max_expand = 0);

inline BisectionResult bisection_root(const std::function<double(double)>& f, const BisectionConfig& cfg) {
  return bisection_root(f, cfg.lower, cfg.upper, cfg.tolerance, cfg.max_iters, cfg.max_expand);
}

}  // namespace feddkc
