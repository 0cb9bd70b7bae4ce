#include "feddkc/bisection.hpp"

#include <cmath>
#include <string>

#include "feddkc/error.hpp"

namespace feddkc {

void BisectionConfig::validate() const {
  if (!(lower > 0.0) || !std::isfinite(lower)) throw ConfigError("bisection.lower", "must be a finite value > 0");
  if (!(upper > lower) || !std::isfinite(upper)) throw ConfigError("bisection.upper", "must be finite and > lower");
  if (max_expand < 0) throw ConfigError("bisection.max_expand", "must be >= 0");
  if (!(tolerance > 0.0)) throw ConfigError("bisection.tolerance", "must be > 0");
  if (max_iters <= 0) throw ConfigError("bisection.max_iters", "must be > 0");
}

namespace {

int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

void require_finite(double x, double fx) {
  if (!std::isfinite(fx)) {
    throw Error(ErrorCode::NumericalDivergence, "bisection: f(" + std::to_string(x) + ") is not finite");
  }
}

}  // namespace

BisectionResult bisection_root(const std::function<double(double)>& f, double lo, double hi, double tol,
                               int max_iters, int max_expand) {
  BisectionResult result;
  double f_lo = f(lo);
  require_finite(lo, f_lo);
  if (std::abs(f_lo) < tol) {
    result.root = lo;
    result.residual = f_lo;
    result.bracket_lower = result.bracket_upper = lo;
    return result;
  }
  double f_hi = f(hi);
  require_finite(hi, f_hi);
  while (sign_of(f_lo) == sign_of(f_hi) && std::abs(f_hi) >= tol) {
    if (result.expansions >= max_expand) {
      throw Error(ErrorCode::BracketFailure, "no sign change on [" + std::to_string(lo) + ", " +
                                                 std::to_string(hi) + "] after " +
                                                 std::to_string(result.expansions) + " expansions");
    }
    hi *= 2.0;
    ++result.expansions;
    f_hi = f(hi);
    require_finite(hi, f_hi);
  }
  result.bracket_lower = lo;
  result.bracket_upper = hi;
  if (std::abs(f_hi) < tol) {
    result.root = hi;
    result.residual = f_hi;
    return result;
  }

  const int lo_sign = sign_of(f_lo);
  double width = hi - lo;
  while (result.iterations < max_iters) {
    const double mid = lo + 0.5 * (hi - lo);
    ++result.iterations;
    const double f_mid = f(mid);
    require_finite(mid, f_mid);
    result.final_width = 0.5 * width;
    if (std::abs(f_mid) < tol) {
      result.root = mid;
      result.residual = f_mid;
      return result;
    }
    if (sign_of(f_mid) == lo_sign) {
      lo = mid;
    } else {
      hi = mid;
    }
    width = hi - lo;
  }
  const double mid = lo + 0.5 * (hi - lo);
  throw ToleranceNotMet(mid, f(mid), result.iterations);
}

}  // namespace feddkc
