#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

namespace abdex {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Column index into a problem's variable list.
struct VarId {
  std::uint32_t value = 0;

  constexpr VarId() = default;
  constexpr explicit VarId(std::size_t v) : value(static_cast<std::uint32_t>(v)) {}
  constexpr std::size_t index() const { return value; }
  friend constexpr auto operator<=>(VarId, VarId) = default;
};

struct Term {
  VarId var;
  double coef = 0.0;
  friend bool operator==(const Term&, const Term&) = default;
};

enum class Relation { le, ge, eq };

inline std::string_view to_string(Relation r) {
  switch (r) {
    case Relation::le: return "<=";
    case Relation::ge: return ">=";
    case Relation::eq: return "=";
  }
  return "?";
}

// Where a row came from. Lets tests and the LP dump tell the ReLU encoding
// rows apart from query and fixing rows.
enum class ConstraintOrigin {
  input_box,
  relu_upper_active,     // x <= w.x' + b - lb (1 - z)
  relu_lower,            // x >= w.x' + b
  relu_upper_indicator,  // x <= ub z
  relu_stable_active,    // x = w.x' + b
  relu_stable_inactive,  // x = 0
  output_affine,         // o = w.x' + b
  query,
  fix_attribute,
};

inline std::string_view to_string(ConstraintOrigin o) {
  switch (o) {
    case ConstraintOrigin::input_box: return "input_box";
    case ConstraintOrigin::relu_upper_active: return "relu_upper_active";
    case ConstraintOrigin::relu_lower: return "relu_lower";
    case ConstraintOrigin::relu_upper_indicator: return "relu_upper_indicator";
    case ConstraintOrigin::relu_stable_active: return "relu_stable_active";
    case ConstraintOrigin::relu_stable_inactive: return "relu_stable_inactive";
    case ConstraintOrigin::output_affine: return "output_affine";
    case ConstraintOrigin::query: return "query";
    case ConstraintOrigin::fix_attribute: return "fix_attribute";
  }
  return "?";
}

struct LinearConstraint {
  std::vector<Term> terms;
  Relation relation = Relation::le;
  double rhs = 0.0;
  ConstraintOrigin origin = ConstraintOrigin::query;

  double activity(std::span<const double> point) const {
    double s = 0.0;
    for (const auto& t : terms) s += t.coef * point[t.var.index()];
    return s;
  }

  // Amount by which `point` violates the row (0 when satisfied).
  double violation(std::span<const double> point) const {
    const double a = activity(point);
    switch (relation) {
      case Relation::le: return std::max(0.0, a - rhs);
      case Relation::ge: return std::max(0.0, rhs - a);
      case Relation::eq: return std::abs(a - rhs);
    }
    return 0.0;
  }

  double coefficient(VarId v) const {
    double c = 0.0;
    for (const auto& t : terms)
      if (t.var == v) c += t.coef;
    return c;
  }

  friend bool operator==(const LinearConstraint&, const LinearConstraint&) = default;
};

}  // namespace abdex
