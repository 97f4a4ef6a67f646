#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "abdex/box.hpp"
#include "abdex/branch_bound.hpp"
#include "abdex/error.hpp"
#include "abdex/milp.hpp"
#include "abdex/network.hpp"

namespace abdex {

enum class TightBoundsMode { milp, box };

enum class ExplainMode { baseline, improved };

inline std::string_view to_string(ExplainMode m) {
  return m == ExplainMode::baseline ? "baseline" : "improved";
}

using QueryObserver = std::function<void(const MilpProblem&, const MilpOutcome&)>;
using BackendFactory = std::function<std::unique_ptr<SolverBackend>()>;

struct EngineConfig {
  TightBoundsMode tight_bounds_mode = TightBoundsMode::milp;
  // Attribute visiting order; empty means index-ascending.
  std::vector<std::size_t> order;
  // Tolerances and the per-call time budget of the built-in solver.
  BranchAndBoundOptions solver;
  // Overrides the built-in branch-and-bound when set.
  BackendFactory backend;
  // Called after every rival feasibility query issued while explaining.
  QueryObserver observer;

  std::unique_ptr<SolverBackend> make_backend() const {
    if (backend) return backend();
    return std::make_unique<BranchAndBound>(solver);
  }
};

// Validates `order` as a permutation of 0..n-1; empty yields 0..n-1.
inline std::vector<std::size_t> resolve_order(const std::vector<std::size_t>& order,
                                              std::size_t n) {
  std::vector<std::size_t> out(n);
  if (order.empty()) {
    for (std::size_t i = 0; i < n; ++i) out[i] = i;
    return out;
  }
  if (order.size() != n)
    throw InputError("attribute order has " + std::to_string(order.size()) +
                     " entries, expected " + std::to_string(n));
  std::vector<bool> seen(n, false);
  for (std::size_t i : order) {
    if (i >= n || seen[i])
      throw InputError("attribute order is not a permutation of 0.." + std::to_string(n - 1));
    seen[i] = true;
  }
  return order;
}

// ---------------------------------------------------------------------------
// Tight bounds
// ---------------------------------------------------------------------------

// Per-neuron bounds over the whole domain. Box mode is plain interval
// propagation. MILP mode minimises and maximises every pre-activation layer
// by layer, encoding the earlier layers with the bounds already tightened;
// results are intersected with the Box interval.
inline BoundsMap compute_tight_bounds(const Network& net, const InputDomain& domain,
                                      TightBoundsMode mode, SolverBackend& backend) {
  BoundsMap bounds = box_propagate(net, AttributeAssignment::all_free(net.input_dim()), domain);
  if (mode == TightBoundsMode::box) return bounds;

  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const MilpProblem prefix = detail::encode_layers(net, bounds, l, false, EncodeOptions{});
    std::vector<VarId> prev;
    if (l == 0) {
      prev = prefix.inputs();
    } else {
      prev.assign(net.layer(l - 1).width(), VarId{});
      for (const auto& blk : prefix.neurons())
        if (blk.layer == l - 1) prev[blk.index] = blk.post;
    }
    const Layer& layer = net.layer(l);
    const bool last = l + 1 == net.layer_count();
    for (std::size_t j = 0; j < layer.width(); ++j) {
      Objective obj;
      obj.constant = layer.biases[j];
      const auto w = layer.weights.row(j);
      for (std::size_t k = 0; k < w.size(); ++k)
        if (w[k] != 0.0) obj.terms.push_back({prev[k], w[k]});
      const Interval box = bounds.layers[l].pre[j];
      Interval found = box;
      if (!obj.terms.empty()) {
        obj.sense = Sense::minimize;
        const MilpOutcome lo = backend.optimize(prefix, obj);
        obj.sense = Sense::maximize;
        const MilpOutcome hi = backend.optimize(prefix, obj);
        for (const auto* r : {&lo, &hi})
          if (r->status != MilpStatus::optimal && r->status != MilpStatus::unknown)
            throw SolverError("tight bounds: optimisation for neuron (" + std::to_string(l) +
                              ", " + std::to_string(j) + ") ended " +
                              std::string(to_string(r->status)));
        // A timed-out side keeps the Box bound, which is always sound.
        if (lo.status == MilpStatus::optimal) found.lb = lo.value;
        if (hi.status == MilpStatus::optimal) found.ub = hi.value;
      }
      const Interval merged = merge_interval(box, found);
      bounds.layers[l].pre[j] = merged;
      bounds.layers[l].post[j] = last ? merged : relu(merged);
    }
  }
  return bounds;
}

inline BoundsMap compute_tight_bounds(const Network& net, const InputDomain& domain,
                                      TightBoundsMode mode,
                                      const BranchAndBoundOptions& opts = {}) {
  BranchAndBound bb(opts);
  return compute_tight_bounds(net, domain, mode, bb);
}

// ---------------------------------------------------------------------------
// Entailment
// ---------------------------------------------------------------------------

enum class Entailment { entailed, not_entailed, unknown };

struct EntailmentResult {
  Entailment verdict = Entailment::entailed;
  std::optional<std::size_t> rival;  // first rival with a counterexample (or timeout)
  std::vector<double> witness;       // input values of the counterexample
  std::size_t solver_calls = 0;
  double solver_time = 0.0;
};

// Checks fixed-attributes + encoding |= "target beats every rival" by asking,
// rival by rival, whether o_rival >= o_target is feasible. Stops at the first
// feasible rival.
inline EntailmentResult is_entailed(const MilpProblem& problem, const AttributeAssignment& assign,
                                    std::size_t target, SolverBackend& backend,
                                    const QueryObserver& observer = {}) {
  const std::size_t k = problem.outputs().size();
  if (target >= k) throw InputError("is_entailed: target class out of range");
  const MilpProblem fixed = fix_attributes(problem, assign);
  EntailmentResult res;
  for (std::size_t rival = 0; rival < k; ++rival) {
    if (rival == target) continue;
    const MilpProblem query = attach_rival_query(fixed, target, rival);
    const MilpOutcome out = backend.feasibility(query);
    ++res.solver_calls;
    res.solver_time += out.wall_time;
    if (observer) observer(query, out);
    if (out.status == MilpStatus::sat) {
      res.verdict = Entailment::not_entailed;
      res.rival = rival;
      res.witness = out.witness;
      return res;
    }
    if (out.status == MilpStatus::unknown) {
      res.verdict = Entailment::unknown;
      res.rival = rival;
      return res;
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Explanations
// ---------------------------------------------------------------------------

enum class Decision { removed_by_box, removed_by_solver, kept_by_solver, kept_by_timeout };

inline std::string_view to_string(Decision d) {
  switch (d) {
    case Decision::removed_by_box: return "removed_box";
    case Decision::removed_by_solver: return "removed_solver";
    case Decision::kept_by_solver: return "kept_solver";
    case Decision::kept_by_timeout: return "kept_timeout";
  }
  return "?";
}

struct Explanation {
  std::size_t target = 0;
  // (attribute, value) pairs that remain fixed, by ascending attribute.
  std::vector<std::pair<std::size_t, double>> kept;
  // One decision per attribute, indexed by attribute.
  std::vector<Decision> decisions;

  std::vector<std::size_t> kept_indices() const {
    std::vector<std::size_t> idx;
    for (const auto& [i, v] : kept) idx.push_back(i);
    return idx;
  }

  AttributeAssignment assignment(std::size_t n) const {
    AttributeAssignment a(n);
    for (const auto& [i, v] : kept) a.fix(i, v);
    return a;
  }
};

struct ExplainStats {
  double total_time = 0.0;
  double solver_time = 0.0;
  std::size_t solver_calls = 0;
  std::size_t box_shortcut_hits = 0;
  std::size_t solver_iterations = 0;  // attributes decided by the solver
  std::size_t timeouts = 0;
  // Aggregated over solver-bound iterations only; each iteration counts
  // every neuron once.
  SimplificationStats simplification;

  static double pct(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / static_cast<double>(den);
  }
  double bounds_tightened_pct() const {
    return pct(simplification.bounds_tightened_count, simplification.neurons_total);
  }
  double bin_vars_removed_before_pct() const {
    return pct(simplification.binary_removed_before, simplification.binary_total);
  }
  double bin_vars_removed_ours_pct() const {
    return pct(simplification.binary_removed_count, simplification.binary_total);
  }

  ExplainStats& operator+=(const ExplainStats& o) {
    total_time += o.total_time;
    solver_time += o.solver_time;
    solver_calls += o.solver_calls;
    box_shortcut_hits += o.box_shortcut_hits;
    solver_iterations += o.solver_iterations;
    timeouts += o.timeouts;
    simplification += o.simplification;
    return *this;
  }
};

struct ExplainResult {
  Explanation explanation;
  ExplainStats stats;
};

// Holds a network, its domain, the precomputed tight bounds and the base
// encoding. All explain/verify calls are const: the tight bounds and base
// problem are never modified, so each attribute starts from the originals.
class Explainer {
 public:
  Explainer(Network net, InputDomain domain, EngineConfig cfg = {})
      : net_(std::move(net)), domain_(std::move(domain)), cfg_(std::move(cfg)) {
    if (domain_.size() != net_.input_dim())
      throw InputError("domain width " + std::to_string(domain_.size()) +
                       " does not match network input_dim " + std::to_string(net_.input_dim()));
    auto backend = cfg_.make_backend();
    tight_ = compute_tight_bounds(net_, domain_, cfg_.tight_bounds_mode, *backend);
    base_ = encode_network(net_, tight_);
  }

  Explainer(Network net, InputDomain domain, BoundsMap tight, EngineConfig cfg)
      : net_(std::move(net)), domain_(std::move(domain)), cfg_(std::move(cfg)),
        tight_(std::move(tight)) {
    if (!tight_.matches(net_)) throw InputError("tight bounds do not match the network");
    base_ = encode_network(net_, tight_);
  }

  const Network& network() const { return net_; }
  const InputDomain& domain() const { return domain_; }
  const EngineConfig& config() const { return cfg_; }
  const BoundsMap& tight_bounds() const { return tight_; }
  const MilpProblem& base_problem() const { return base_; }

  // Predicted class of `instance`; rejects ties at the argmax.
  std::size_t target_of(std::span<const double> instance) const {
    if (instance.size() != net_.input_dim())
      throw InputError("instance has " + std::to_string(instance.size()) +
                       " values, network expects " + std::to_string(net_.input_dim()));
    if (!domain_.contains(instance)) throw InputError("instance lies outside the input domain");
    if (!has_unique_prediction(net_, instance))
      throw TiedPredictionError("instance prediction is tied at the argmax");
    return predict(net_, instance);
  }

  EntailmentResult is_entailed(const AttributeAssignment& assign, std::size_t target,
                               SolverBackend& backend) const {
    return abdex::is_entailed(base_, assign, target, backend, cfg_.observer);
  }

  ExplainResult explain(std::span<const double> instance, ExplainMode mode) const {
    return mode == ExplainMode::baseline ? explain_baseline(instance)
                                         : explain_improved(instance);
  }

  // Attribute-by-attribute removal with a solver call for every attribute
  // against the original tight-bound encoding.
  ExplainResult explain_baseline(std::span<const double> instance) const {
    return run(instance, ExplainMode::baseline);
  }

  // Same loop, but each attribute is first tried with Box propagation; when
  // that is inconclusive the solver sees an encoding simplified with the
  // merged tight/Box bounds.
  ExplainResult explain_improved(std::span<const double> instance) const {
    return run(instance, ExplainMode::improved);
  }

 private:
  ExplainResult run(std::span<const double> instance, ExplainMode mode) const {
    const detail::Stopwatch clock;
    const std::size_t target = target_of(instance);
    const std::size_t n = net_.input_dim();
    const auto order = resolve_order(cfg_.order, n);
    auto backend = cfg_.make_backend();
    const SimplificationStats encode_time = encode_stats(tight_);

    ExplainResult res;
    res.explanation.target = target;
    res.explanation.decisions.assign(n, Decision::kept_by_solver);
    AttributeAssignment fixed = AttributeAssignment::fixed_to(instance);

    for (std::size_t attr : order) {
      const AttributeAssignment candidate = fixed.freed(attr);
      const MilpProblem* problem = &base_;
      MilpProblem simplified;

      if (mode == ExplainMode::improved) {
        const BoundsMap boxed = box_propagate(net_, candidate, domain_);
        if (shortcut_check(boxed, target) == ShortcutVerdict::removable) {
          ++res.stats.box_shortcut_hits;
          res.explanation.decisions[attr] = Decision::removed_by_box;
          fixed = candidate;
          continue;
        }
        auto [p, s] = tighten_and_simplify(base_, tight_, boxed);
        simplified = std::move(p);
        problem = &simplified;
        res.stats.simplification += s;
      } else {
        res.stats.simplification += encode_time;
      }

      ++res.stats.solver_iterations;
      const EntailmentResult e =
          abdex::is_entailed(*problem, candidate, target, *backend, cfg_.observer);
      res.stats.solver_calls += e.solver_calls;
      res.stats.solver_time += e.solver_time;
      switch (e.verdict) {
        case Entailment::entailed:
          res.explanation.decisions[attr] = Decision::removed_by_solver;
          fixed = candidate;
          break;
        case Entailment::not_entailed:
          res.explanation.decisions[attr] = Decision::kept_by_solver;
          break;
        case Entailment::unknown:
          res.explanation.decisions[attr] = Decision::kept_by_timeout;
          ++res.stats.timeouts;
          break;
      }
    }

    for (std::size_t i = 0; i < n; ++i)
      if (fixed.is_fixed(i)) res.explanation.kept.emplace_back(i, fixed.value(i));
    res.stats.total_time = clock.seconds();
    return res;
  }

  Network net_;
  InputDomain domain_;
  EngineConfig cfg_;
  BoundsMap tight_;
  MilpProblem base_;
};

// ---------------------------------------------------------------------------
// Verification
// ---------------------------------------------------------------------------

struct VerificationReport {
  std::size_t samples_checked = 0;
  std::size_t sufficiency_violations = 0;
  std::vector<std::vector<double>> violating_points;  // first few sampled violations
  // Solver check that the kept attributes entail the prediction; a
  // counterexample lands in `sufficiency_witness`.
  std::optional<bool> formally_sufficient;
  std::vector<double> sufficiency_witness;
  std::vector<std::size_t> minimality_verified;
  std::vector<std::size_t> minimality_failures;
  std::vector<std::size_t> unverified;  // kept by timeout
  // Kept attributes whose value differs from the instance.
  std::vector<std::size_t> inconsistent;

  bool sufficient() const {
    return sufficiency_violations == 0 && formally_sufficient.value_or(true);
  }
  bool minimal() const { return minimality_failures.empty(); }
  bool ok() const { return sufficient() && minimal() && inconsistent.empty(); }
};

struct VerifyOptions {
  std::size_t samples = 1000;
  std::uint64_t seed = 0;
  bool formal_sufficiency = true;
  double witness_tol = 1e-6;
};

// Sampled sufficiency, optional solver-checked sufficiency, and a
// forward-verified counterexample for every attribute kept by the solver.
inline VerificationReport verify_explanation(const Explainer& ex, std::span<const double> instance,
                                             const Explanation& explanation,
                                             const VerifyOptions& opts = {}) {
  const Network& net = ex.network();
  const InputDomain& domain = ex.domain();
  const std::size_t n = net.input_dim();
  const std::size_t target = explanation.target;
  const AttributeAssignment kept = explanation.assignment(n);
  VerificationReport rep;
  if (instance.size() != n) throw InputError("verify: instance width does not match the network");
  for (const auto& [i, v] : explanation.kept)
    if (i >= n || instance[i] != v) rep.inconsistent.push_back(i);

  std::mt19937_64 rng(opts.seed);
  std::vector<double> point(n);
  for (std::size_t s = 0; s < opts.samples; ++s) {
    for (std::size_t i = 0; i < n; ++i)
      point[i] = kept.is_fixed(i)
                     ? kept.value(i)
                     : std::uniform_real_distribution<double>(domain[i].lb, domain[i].ub)(rng);
    ++rep.samples_checked;
    if (predict(net, point) != target) {
      ++rep.sufficiency_violations;
      if (rep.violating_points.size() < 8) rep.violating_points.push_back(point);
    }
  }

  auto backend = ex.config().make_backend();
  auto rival_beats_target = [&](const std::vector<double>& w) {
    if (w.size() != n) return false;
    const auto out = forward(net, w).outputs();
    for (std::size_t r = 0; r < out.size(); ++r)
      if (r != target && out[r] >= out[target] - opts.witness_tol) return true;
    return false;
  };

  if (opts.formal_sufficiency) {
    const EntailmentResult e = ex.is_entailed(kept, target, *backend);
    if (e.verdict == Entailment::not_entailed) {
      // Accept the counterexample only if it survives exact evaluation.
      rep.formally_sufficient = !rival_beats_target(e.witness);
      rep.sufficiency_witness = e.witness;
    } else if (e.verdict == Entailment::entailed) {
      rep.formally_sufficient = true;
    }
  }

  for (const auto& [attr, value] : explanation.kept) {
    const Decision d = explanation.decisions.at(attr);
    if (d == Decision::kept_by_timeout) {
      rep.unverified.push_back(attr);
      continue;
    }
    const EntailmentResult e = ex.is_entailed(kept.freed(attr), target, *backend);
    if (e.verdict == Entailment::not_entailed && rival_beats_target(e.witness))
      rep.minimality_verified.push_back(attr);
    else if (e.verdict == Entailment::unknown)
      rep.unverified.push_back(attr);
    else
      rep.minimality_failures.push_back(attr);
  }
  return rep;
}

}  // namespace abdex
