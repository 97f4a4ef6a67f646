#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

#include "abdex/error.hpp"

namespace abdex {

// Closed real interval [lb, ub]. Arithmetic is plain floating point (no
// directed rounding); callers that need containment checks use a slack.
struct Interval {
  double lb = 0.0;
  double ub = 0.0;

  static constexpr Interval point(double v) { return {v, v}; }

  constexpr double width() const { return ub - lb; }
  constexpr bool valid() const { return lb <= ub; }
  bool finite() const { return std::isfinite(lb) && std::isfinite(ub); }

  constexpr bool contains(double v, double slack = 0.0) const {
    return v >= lb - slack && v <= ub + slack;
  }
  constexpr bool contains(const Interval& o, double slack = 0.0) const {
    return o.lb >= lb - slack && o.ub <= ub + slack;
  }

  friend constexpr bool operator==(const Interval&, const Interval&) = default;
};

constexpr Interval operator+(const Interval& a, const Interval& b) {
  return {a.lb + b.lb, a.ub + b.ub};
}

// Multiplication by a negative scalar swaps the endpoints.
constexpr Interval scale(double c, const Interval& a) {
  if (c >= 0.0) return {c * a.lb, c * a.ub};
  return {c * a.ub, c * a.lb};
}

constexpr Interval relu(const Interval& a) {
  return {std::max(a.lb, 0.0), std::max(a.ub, 0.0)};
}

// Interval image of x -> bias + sum_i w_i x_i with each x_i ranging
// independently over inputs[i].
inline Interval affine_bounds(std::span<const double> weights, double bias,
                              std::span<const Interval> inputs) {
  if (weights.size() != inputs.size())
    throw InputError("affine_bounds: " + std::to_string(weights.size()) + " weights for " +
                     std::to_string(inputs.size()) + " inputs");
  Interval acc = Interval::point(bias);
  for (std::size_t i = 0; i < weights.size(); ++i) acc = acc + scale(weights[i], inputs[i]);
  return acc;
}

// Componentwise [max lb, min ub]. May be empty (lb > ub); callers decide.
constexpr Interval intersect(const Interval& a, const Interval& b) {
  return {std::max(a.lb, b.lb), std::min(a.ub, b.ub)};
}

}  // namespace abdex
