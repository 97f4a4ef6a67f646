#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "abdex/error.hpp"
#include "abdex/linear.hpp"
#include "abdex/milp.hpp"
#include "abdex/simplex.hpp"

namespace abdex {

enum class MilpStatus { sat, unsat, unknown, optimal, infeasible, unbounded };

inline std::string_view to_string(MilpStatus s) {
  switch (s) {
    case MilpStatus::sat: return "sat";
    case MilpStatus::unsat: return "unsat";
    case MilpStatus::unknown: return "unknown";
    case MilpStatus::optimal: return "optimal";
    case MilpStatus::infeasible: return "infeasible";
    case MilpStatus::unbounded: return "unbounded";
  }
  return "?";
}

struct MilpOutcome {
  MilpStatus status = MilpStatus::unknown;
  double value = 0.0;            // objective value when optimal
  std::vector<double> point;     // every column, when sat/optimal
  std::vector<double> witness;   // input columns only, when sat/optimal
  std::size_t node_count = 0;
  double wall_time = 0.0;        // seconds
  bool timed_out = false;
};

struct Objective {
  std::vector<Term> terms;
  double constant = 0.0;
  Sense sense = Sense::minimize;
};

struct BranchAndBoundOptions {
  SimplexOptions lp;
  double integrality_tol = 1e-6;
  // Relative gap for pruning nodes against the incumbent.
  double prune_tol = 1e-9;
  bool prune = true;
  // Wall-clock budget per call; unset means unlimited. Exhausting it yields
  // MilpStatus::unknown.
  std::optional<std::chrono::milliseconds> time_budget;
};

// Decision/optimisation interface over MilpProblem. Outcomes must honour:
// sat/optimal points satisfy every row within the feasibility tolerance with
// binaries within the integrality tolerance of {0, 1}.
class SolverBackend {
 public:
  virtual ~SolverBackend() = default;
  virtual MilpOutcome feasibility(const MilpProblem& p) = 0;
  virtual MilpOutcome optimize(const MilpProblem& p, const Objective& obj) = 0;
};

// LP relaxation: binaries relaxed to their [lower, upper] within [0, 1].
inline LpProblem to_lp(const MilpProblem& p) {
  LpProblem lp;
  for (const auto& v : p.variables()) {
    if (v.kind == VarKind::binary && (v.lower < 0.0 || v.upper > 1.0))
      throw InputError("binary variable with bounds outside [0, 1]");
    lp.add_variable(v.lower, v.upper, v.kind == VarKind::binary);
  }
  lp.rows = p.constraints();
  return lp;
}

namespace detail {

inline std::vector<double> input_values(const MilpProblem& p, const std::vector<double>& point) {
  std::vector<double> w;
  w.reserve(p.inputs().size());
  for (VarId id : p.inputs()) w.push_back(point[id.index()]);
  return w;
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  bool exceeded(const std::optional<std::chrono::milliseconds>& budget) const {
    return budget && std::chrono::steady_clock::now() - start_ >= *budget;
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace detail

// Depth-first branch-and-bound over the binary columns. Branches on the most
// fractional binary and explores the child nearest the relaxation value
// first.
class BranchAndBound : public SolverBackend {
 public:
  explicit BranchAndBound(BranchAndBoundOptions opts = {}) : opts_(std::move(opts)) {}

  const BranchAndBoundOptions& options() const { return opts_; }

  MilpOutcome feasibility(const MilpProblem& p) override {
    return search(p, Objective{{}, 0.0, Sense::feasibility});
  }

  MilpOutcome optimize(const MilpProblem& p, const Objective& obj) override {
    if (obj.sense == Sense::feasibility) return feasibility(p);
    return search(p, obj);
  }

 private:
  struct Node {
    std::vector<std::pair<std::size_t, double>> fixings;
  };

  MilpOutcome search(const MilpProblem& p, const Objective& obj) {
    const detail::Stopwatch clock;
    const bool optimizing = obj.sense != Sense::feasibility;
    LpProblem base = to_lp(p);
    base.objective = obj.terms;
    base.objective_constant = obj.constant;
    base.sense = obj.sense;
    const double sign = obj.sense == Sense::maximize ? -1.0 : 1.0;

    SimplexSolver lp(opts_.lp);
    MilpOutcome out;
    std::optional<LpOutcome> incumbent;
    std::vector<Node> stack{Node{}};

    auto finish = [&](MilpStatus st) {
      out.status = st;
      out.wall_time = clock.seconds();
      return out;
    };

    while (!stack.empty()) {
      if (clock.exceeded(opts_.time_budget)) {
        out.timed_out = true;
        if (incumbent) {
          // Best found so far; not proven optimal.
          out.value = incumbent->value;
          out.point = incumbent->point;
          out.witness = detail::input_values(p, out.point);
        }
        return finish(MilpStatus::unknown);
      }
      Node node = std::move(stack.back());
      stack.pop_back();
      ++out.node_count;

      LpProblem sub = base;
      for (const auto& [col, v] : node.fixings) sub.lower[col] = sub.upper[col] = v;
      const LpOutcome rel = lp.solve(sub);
      if (rel.status == LpStatus::infeasible) continue;
      if (rel.status == LpStatus::unbounded) {
        if (node.fixings.empty()) return finish(MilpStatus::unbounded);
        continue;
      }
      if (optimizing && incumbent && opts_.prune &&
          sign * rel.value >=
              sign * incumbent->value - opts_.prune_tol * std::max(1.0, std::abs(incumbent->value)))
        continue;

      // Most fractional binary; ties go to the lowest column.
      std::size_t branch_col = kNone;
      double best_frac = 0.0;
      for (std::size_t j = 0; j < sub.variable_count(); ++j) {
        if (!sub.binary[j] || sub.lower[j] == sub.upper[j]) continue;
        const double v = rel.point[j];
        const double frac = std::min(v - std::floor(v), std::ceil(v) - v);
        if (frac > best_frac) {
          best_frac = frac;
          branch_col = j;
        }
      }

      if (best_frac <= opts_.integrality_tol) {
        // Integral within tolerance: re-solve with every binary pinned to its
        // rounded value so the returned point is exactly integral.
        LpProblem pinned = sub;
        for (std::size_t j = 0; j < pinned.variable_count(); ++j)
          if (pinned.binary[j]) pinned.lower[j] = pinned.upper[j] = std::round(rel.point[j]);
        const LpOutcome exact = lp.solve(pinned);
        if (exact.status != LpStatus::optimal) {
          // Only feasible thanks to the fractional slack; keep branching.
          if (branch_col == kNone) continue;
        } else {
          if (!optimizing) {
            out.point = exact.point;
            out.witness = detail::input_values(p, out.point);
            return finish(MilpStatus::sat);
          }
          if (!incumbent || sign * exact.value < sign * incumbent->value) incumbent = exact;
          continue;
        }
      }

      const double v = rel.point[branch_col];
      const double near = v >= 0.5 ? 1.0 : 0.0;
      Node far_child{node.fixings};
      far_child.fixings.emplace_back(branch_col, 1.0 - near);
      Node near_child{std::move(node.fixings)};
      near_child.fixings.emplace_back(branch_col, near);
      stack.push_back(std::move(far_child));
      stack.push_back(std::move(near_child));
    }

    if (!optimizing) return finish(MilpStatus::unsat);
    if (!incumbent) return finish(MilpStatus::infeasible);
    out.value = incumbent->value;
    out.point = incumbent->point;
    out.witness = detail::input_values(p, out.point);
    return finish(MilpStatus::optimal);
  }

  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  BranchAndBoundOptions opts_;
};

inline MilpOutcome solve_feasibility(const MilpProblem& p, const BranchAndBoundOptions& opts = {}) {
  return BranchAndBound(opts).feasibility(p);
}

inline MilpOutcome optimize(const MilpProblem& p, const Objective& obj,
                            const BranchAndBoundOptions& opts = {}) {
  return BranchAndBound(opts).optimize(p, obj);
}

inline constexpr std::size_t kEnumerationBinaryCap = 20;

// Ground truth by enumeration: solves the LP for every 0/1 assignment of the
// binary columns (at most kEnumerationBinaryCap of them).
inline MilpOutcome oracle_enumerate(const MilpProblem& p, const Objective& obj = {{}, 0.0, Sense::feasibility},
                                    const SimplexOptions& lp_opts = {}) {
  const detail::Stopwatch clock;
  LpProblem base = to_lp(p);
  base.objective = obj.terms;
  base.objective_constant = obj.constant;
  base.sense = obj.sense;
  const bool optimizing = obj.sense != Sense::feasibility;
  const double sign = obj.sense == Sense::maximize ? -1.0 : 1.0;

  std::vector<std::size_t> bins;
  for (std::size_t j = 0; j < base.variable_count(); ++j)
    if (base.binary[j]) bins.push_back(j);
  if (bins.size() > kEnumerationBinaryCap)
    throw SolverError("oracle_enumerate: " + std::to_string(bins.size()) +
                      " binaries exceed the cap of " + std::to_string(kEnumerationBinaryCap));

  SimplexSolver lp(lp_opts);
  MilpOutcome out;
  std::optional<LpOutcome> best;
  bool unbounded = false;
  const std::size_t patterns = std::size_t{1} << bins.size();
  for (std::size_t mask = 0; mask < patterns; ++mask) {
    LpProblem sub = base;
    bool consistent = true;
    for (std::size_t b = 0; b < bins.size(); ++b) {
      const double v = (mask >> b) & 1U ? 1.0 : 0.0;
      if (v < sub.lower[bins[b]] || v > sub.upper[bins[b]]) {
        consistent = false;
        break;
      }
      sub.lower[bins[b]] = sub.upper[bins[b]] = v;
    }
    if (!consistent) continue;
    ++out.node_count;
    const LpOutcome r = lp.solve(sub);
    if (r.status == LpStatus::unbounded) unbounded = true;
    if (r.status != LpStatus::optimal) continue;
    if (!optimizing) {
      best = r;
      break;
    }
    if (!best || sign * r.value < sign * best->value) best = r;
  }

  out.wall_time = clock.seconds();
  if (!optimizing) {
    out.status = best ? MilpStatus::sat : MilpStatus::unsat;
  } else if (unbounded) {
    out.status = MilpStatus::unbounded;
    return out;
  } else {
    out.status = best ? MilpStatus::optimal : MilpStatus::infeasible;
  }
  if (best) {
    out.value = best->value;
    out.point = best->point;
    out.witness = detail::input_values(p, out.point);
  }
  return out;
}

// SolverBackend over oracle_enumerate; for tests and small cross-checks.
class EnumerationBackend : public SolverBackend {
 public:
  explicit EnumerationBackend(SimplexOptions lp = {}) : lp_(lp) {}
  MilpOutcome feasibility(const MilpProblem& p) override { return oracle_enumerate(p, {{}, 0.0, Sense::feasibility}, lp_); }
  MilpOutcome optimize(const MilpProblem& p, const Objective& obj) override {
    return oracle_enumerate(p, obj, lp_);
  }

 private:
  SimplexOptions lp_;
};

}  // namespace abdex
