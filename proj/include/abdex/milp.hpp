#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "abdex/box.hpp"
#include "abdex/error.hpp"
#include "abdex/interval.hpp"
#include "abdex/linear.hpp"
#include "abdex/network.hpp"

namespace abdex {

enum class VarKind { continuous, binary };
enum class VarRole { input, post, indicator, output };

struct Variable {
  VarKind kind = VarKind::continuous;
  double lower = -kInf;
  double upper = kInf;
  VarRole role = VarRole::input;
  std::size_t layer = 0;  // hidden layer for post/indicator, 0 otherwise
  std::size_t index = 0;  // attribute, neuron or class index

  friend bool operator==(const Variable&, const Variable&) = default;
};

// A hidden neuron whose ReLU is active on its whole range (lb > 0), inactive
// (ub <= 0), or undecided. Threshold is exactly zero.
enum class NeuronState { unstable, active, inactive };

inline NeuronState classify(const Interval& pre) {
  if (pre.lb > 0.0) return NeuronState::active;
  if (pre.ub <= 0.0) return NeuronState::inactive;
  return NeuronState::unstable;
}

// Bookkeeping for one hidden neuron: its pre-activation expression, the
// bounds used as big-M constants, and the variables it owns.
struct NeuronBlock {
  std::size_t layer = 0;
  std::size_t index = 0;
  std::vector<Term> pre_terms;
  double pre_bias = 0.0;
  Interval bounds;
  VarId post;
  std::optional<VarId> indicator;

  NeuronState state() const { return indicator ? NeuronState::unstable : classify(bounds); }

  friend bool operator==(const NeuronBlock&, const NeuronBlock&) = default;
};

struct OutputBlock {
  std::size_t index = 0;
  std::vector<Term> terms;
  double bias = 0.0;
  Interval bounds;
  VarId var;

  friend bool operator==(const OutputBlock&, const OutputBlock&) = default;
};

// Network encoding plus any attached query/fixing rows. Values are immutable
// from the outside: every transformation below returns a new problem.
class MilpProblem {
 public:
  const std::vector<Variable>& variables() const { return vars_; }
  const std::vector<LinearConstraint>& constraints() const { return rows_; }
  const std::vector<NeuronBlock>& neurons() const { return neurons_; }
  const std::vector<OutputBlock>& outputs() const { return outputs_; }
  const std::vector<VarId>& inputs() const { return inputs_; }
  const std::vector<Interval>& domain() const { return domain_; }
  const std::vector<LinearConstraint>& extra_constraints() const { return extra_; }

  const Variable& variable(VarId v) const { return vars_[v.index()]; }
  VarId input(std::size_t i) const { return inputs_.at(i); }
  VarId output(std::size_t j) const { return outputs_.at(j).var; }

  std::size_t binary_count() const {
    std::size_t n = 0;
    for (const auto& v : vars_) n += v.kind == VarKind::binary;
    return n;
  }

  // Index into neurons() of hidden neuron (layer, index).
  const NeuronBlock& neuron(std::size_t layer, std::size_t index) const {
    for (const auto& b : neurons_)
      if (b.layer == layer && b.index == index) return b;
    throw InputError("no hidden neuron (" + std::to_string(layer) + ", " +
                     std::to_string(index) + ")");
  }

  std::string var_name(VarId id) const {
    const Variable& v = vars_[id.index()];
    switch (v.role) {
      case VarRole::input: return "x" + std::to_string(v.index);
      case VarRole::post: return "h" + std::to_string(v.layer) + "_" + std::to_string(v.index);
      case VarRole::indicator:
        return "z" + std::to_string(v.layer) + "_" + std::to_string(v.index);
      case VarRole::output: return "o" + std::to_string(v.index);
    }
    return "v" + std::to_string(id.index());
  }

  friend bool operator==(const MilpProblem&, const MilpProblem&) = default;

 private:
  friend class MilpBuilder;

  std::vector<Variable> vars_;
  std::vector<LinearConstraint> rows_;
  std::vector<NeuronBlock> neurons_;
  std::vector<OutputBlock> outputs_;
  std::vector<VarId> inputs_;
  std::vector<Interval> domain_;
  std::vector<LinearConstraint> extra_;
};

struct EncodeOptions {
  // Emit neurons that are stable under their bounds as a single equality
  // without an indicator. Off keeps the full big-M block for every neuron.
  bool simplify_stable = true;
};

// Mutating access to MilpProblem for the encoder and transformations.
class MilpBuilder {
 public:
  explicit MilpBuilder(MilpProblem p = {}) : p_(std::move(p)) {}

  VarId add_variable(Variable v) {
    p_.vars_.push_back(v);
    return VarId(p_.vars_.size() - 1);
  }

  MilpProblem& problem() { return p_; }
  std::vector<Variable>& vars() { return p_.vars_; }
  std::vector<NeuronBlock>& neurons() { return p_.neurons_; }
  std::vector<OutputBlock>& outputs() { return p_.outputs_; }
  std::vector<VarId>& inputs() { return p_.inputs_; }
  std::vector<Interval>& domain() { return p_.domain_; }
  std::vector<LinearConstraint>& extra() { return p_.extra_; }

  // Regenerates rows from the blocks plus the extra rows.
  MilpProblem finish() {
    auto& rows = p_.rows_;
    rows.clear();
    for (const auto& b : p_.neurons_) append_neuron_rows(b, rows);
    for (const auto& o : p_.outputs_) {
      std::vector<Term> t{{o.var, 1.0}};
      for (const auto& w : o.terms) t.push_back({w.var, -w.coef});
      rows.push_back({std::move(t), Relation::eq, o.bias, ConstraintOrigin::output_affine});
    }
    for (const auto& r : p_.extra_) rows.push_back(r);
    return std::move(p_);
  }

  // Sets the post variable's bounds from the block's state and bounds.
  void sync_post_bounds(const NeuronBlock& b) {
    Variable& v = p_.vars_[b.post.index()];
    switch (b.state()) {
      case NeuronState::unstable: v.lower = 0.0; v.upper = std::max(b.bounds.ub, 0.0); break;
      case NeuronState::active: v.lower = b.bounds.lb; v.upper = b.bounds.ub; break;
      case NeuronState::inactive: v.lower = 0.0; v.upper = 0.0; break;
    }
  }

  // Drops indicator variables that no block references any more and remaps
  // every VarId accordingly.
  void compact() {
    std::vector<bool> keep(p_.vars_.size(), true);
    std::vector<bool> referenced(p_.vars_.size(), false);
    for (const auto& b : p_.neurons_)
      if (b.indicator) referenced[b.indicator->index()] = true;
    for (std::size_t i = 0; i < p_.vars_.size(); ++i)
      if (p_.vars_[i].role == VarRole::indicator && !referenced[i]) keep[i] = false;

    std::vector<VarId> remap(p_.vars_.size());
    std::vector<Variable> vars;
    for (std::size_t i = 0; i < p_.vars_.size(); ++i) {
      if (!keep[i]) continue;
      remap[i] = VarId(vars.size());
      vars.push_back(p_.vars_[i]);
    }
    auto fix = [&](VarId& id) { id = remap[id.index()]; };
    auto fix_terms = [&](std::vector<Term>& ts) {
      for (auto& t : ts) fix(t.var);
    };
    for (auto& b : p_.neurons_) {
      fix_terms(b.pre_terms);
      fix(b.post);
      if (b.indicator) fix(*b.indicator);
    }
    for (auto& o : p_.outputs_) {
      fix_terms(o.terms);
      fix(o.var);
    }
    for (auto& id : p_.inputs_) fix(id);
    for (auto& r : p_.extra_) {
      for (const auto& t : r.terms)
        if (!keep[t.var.index()]) throw InputError("constraint references a dropped indicator");
      fix_terms(r.terms);
    }
    p_.vars_ = std::move(vars);
  }

  static void append_neuron_rows(const NeuronBlock& b, std::vector<LinearConstraint>& rows) {
    // Rows are written as  x - w.x' (+ c z)  rel  rhs.
    auto base = [&] {
      std::vector<Term> t{{b.post, 1.0}};
      for (const auto& w : b.pre_terms) t.push_back({w.var, -w.coef});
      return t;
    };
    switch (b.state()) {
      case NeuronState::active:
        rows.push_back({base(), Relation::eq, b.pre_bias, ConstraintOrigin::relu_stable_active});
        return;
      case NeuronState::inactive:
        rows.push_back({{{b.post, 1.0}}, Relation::eq, 0.0,
                        ConstraintOrigin::relu_stable_inactive});
        return;
      case NeuronState::unstable: break;
    }
    const VarId z = *b.indicator;
    const double lb = b.bounds.lb;
    const double ub = b.bounds.ub;
    // x <= w.x' + b - lb (1 - z)   <=>   x - w.x' - lb z <= b - lb
    auto t = base();
    t.push_back({z, -lb});
    rows.push_back({std::move(t), Relation::le, b.pre_bias - lb,
                    ConstraintOrigin::relu_upper_active});
    // x >= w.x' + b
    rows.push_back({base(), Relation::ge, b.pre_bias, ConstraintOrigin::relu_lower});
    // x <= ub z
    rows.push_back({{{b.post, 1.0}, {z, -ub}}, Relation::le, 0.0,
                    ConstraintOrigin::relu_upper_indicator});
  }

 private:
  MilpProblem p_;
};

namespace detail {

// Encodes the inputs and the first `hidden_layers` hidden layers; the output
// layer too when `with_outputs`.
inline MilpProblem encode_layers(const Network& net, const BoundsMap& bounds,
                                 std::size_t hidden_layers, bool with_outputs,
                                 const EncodeOptions& opts) {
  if (bounds.inputs.size() != net.input_dim() || bounds.layers.size() < hidden_layers ||
      (with_outputs && !bounds.matches(net)))
    throw InputError("encode_network: bounds do not match the network shape");

  MilpBuilder b;
  for (std::size_t i = 0; i < net.input_dim(); ++i) {
    const Interval& d = bounds.inputs[i];
    b.inputs().push_back(
        b.add_variable({VarKind::continuous, d.lb, d.ub, VarRole::input, 0, i}));
    b.domain().push_back(d);
  }

  std::vector<VarId> prev = b.inputs();
  for (std::size_t l = 0; l < hidden_layers; ++l) {
    const Layer& layer = net.layer(l);
    if (bounds.layers[l].pre.size() != layer.width())
      throw InputError("encode_network: bounds for layer " + std::to_string(l) +
                       " have the wrong width");
    std::vector<VarId> cur;
    for (std::size_t j = 0; j < layer.width(); ++j) {
      NeuronBlock blk;
      blk.layer = l;
      blk.index = j;
      blk.bounds = bounds.layers[l].pre[j];
      blk.pre_bias = layer.biases[j];
      const auto w = layer.weights.row(j);
      for (std::size_t k = 0; k < w.size(); ++k)
        if (w[k] != 0.0) blk.pre_terms.push_back({prev[k], w[k]});
      blk.post = b.add_variable({VarKind::continuous, 0.0, kInf, VarRole::post, l, j});
      const bool stable = classify(blk.bounds) != NeuronState::unstable;
      if (!(opts.simplify_stable && stable)) {
        // Unstable neurons, or every neuron when simplification is off. A
        // stable neuron kept this way still gets a full big-M block.
        blk.indicator = b.add_variable({VarKind::binary, 0.0, 1.0, VarRole::indicator, l, j});
      }
      b.sync_post_bounds(blk);
      cur.push_back(blk.post);
      b.neurons().push_back(std::move(blk));
    }
    prev = std::move(cur);
  }

  if (with_outputs) {
    const Layer& out = net.output_layer();
    for (std::size_t j = 0; j < out.width(); ++j) {
      OutputBlock ob;
      ob.index = j;
      ob.bias = out.biases[j];
      ob.bounds = bounds.outputs()[j];
      const auto w = out.weights.row(j);
      for (std::size_t k = 0; k < w.size(); ++k)
        if (w[k] != 0.0) ob.terms.push_back({prev[k], w[k]});
      ob.var = b.add_variable(
          {VarKind::continuous, ob.bounds.lb, ob.bounds.ub, VarRole::output, 0, j});
      b.outputs().push_back(std::move(ob));
    }
  }
  return b.finish();
}

}  // namespace detail

// Big-M encoding of the whole network. Input columns carry the input
// intervals of `bounds` (normally the domain); each hidden neuron uses its
// pre-activation interval as big-M constants; outputs are affine equalities
// whose columns carry the output intervals.
inline MilpProblem encode_network(const Network& net, const BoundsMap& bounds,
                                  const EncodeOptions& opts = {}) {
  return detail::encode_layers(net, bounds, net.hidden_layer_count(), true, opts);
}

// Adds  o_rival - o_target >= 0. Feasible iff some completion lets the rival
// score at least as high as the target.
inline MilpProblem attach_rival_query(const MilpProblem& problem, std::size_t target,
                                      std::size_t rival) {
  const std::size_t k = problem.outputs().size();
  if (target >= k || rival >= k)
    throw InputError("attach_rival_query: class index out of range (k = " + std::to_string(k) +
                     ")");
  if (target == rival) throw InputError("attach_rival_query: target and rival coincide");
  MilpBuilder b(problem);
  b.extra().push_back({{{problem.output(rival), 1.0}, {problem.output(target), -1.0}},
                       Relation::ge,
                       0.0,
                       ConstraintOrigin::query});
  return b.finish();
}

// Pins fixed attributes to their value; free attributes get their domain.
inline MilpProblem fix_attributes(const MilpProblem& problem, const AttributeAssignment& assign) {
  if (assign.size() != problem.inputs().size())
    throw InputError("fix_attributes: assignment has " + std::to_string(assign.size()) +
                     " attributes, problem has " + std::to_string(problem.inputs().size()));
  MilpBuilder b(problem);
  for (std::size_t i = 0; i < assign.size(); ++i) {
    const Interval& d = problem.domain()[i];
    Variable& v = b.vars()[problem.input(i).index()];
    if (assign.is_fixed(i)) {
      const double x = assign.value(i);
      if (!d.contains(x))
        throw InputError("fix_attributes: attribute " + std::to_string(i) + " value " +
                         std::to_string(x) + " lies outside [" + std::to_string(d.lb) + ", " +
                         std::to_string(d.ub) + "]");
      v.lower = x;
      v.upper = x;
    } else {
      v.lower = d.lb;
      v.upper = d.ub;
    }
  }
  return b.finish();
}

struct SimplificationStats {
  std::size_t neurons_total = 0;          // hidden + output neurons
  std::size_t bounds_tightened_count = 0;
  std::size_t binary_total = 0;           // hidden neurons
  std::size_t binary_removed_before = 0;  // stable under the tight bounds alone
  std::size_t binary_removed_count = 0;   // stable under the merged bounds
  std::size_t bound_conflicts = 0;        // merged interval empty; tight bound kept

  SimplificationStats& operator+=(const SimplificationStats& o) {
    neurons_total += o.neurons_total;
    bounds_tightened_count += o.bounds_tightened_count;
    binary_total += o.binary_total;
    binary_removed_before += o.binary_removed_before;
    binary_removed_count += o.binary_removed_count;
    bound_conflicts += o.bound_conflicts;
    return *this;
  }

  friend bool operator==(const SimplificationStats&, const SimplificationStats&) = default;
};

// Margin below which a narrower merged bound is not counted as tightened;
// keeps float noise between MILP-derived and Box-derived bounds out of the
// statistics.
inline constexpr double kTightenedMargin = 1e-9;
// An empty merged interval is tolerated up to this gap (collapsed to its
// endpoints) before falling back to the tight bound.
inline constexpr double kMergeConflictTol = 1e-9;

// [max lb, min ub] per neuron. An empty result beyond kMergeConflictTol keeps
// the tight interval and counts a conflict.
inline Interval merge_interval(const Interval& tight, const Interval& boxed,
                               std::size_t* conflicts = nullptr) {
  Interval m = intersect(tight, boxed);
  if (m.lb <= m.ub) return m;
  if (m.lb - m.ub <= kMergeConflictTol) return {m.ub, m.lb};
  if (conflicts) ++*conflicts;
  return tight;
}

inline BoundsMap merge_bounds(const BoundsMap& tight, const BoundsMap& boxed,
                              std::size_t* conflicts = nullptr) {
  if (tight.layers.size() != boxed.layers.size() || tight.inputs.size() != boxed.inputs.size())
    throw InputError("merge_bounds: bounds maps have different shapes");
  BoundsMap merged = tight;
  for (std::size_t i = 0; i < tight.inputs.size(); ++i)
    merged.inputs[i] = merge_interval(tight.inputs[i], boxed.inputs[i], conflicts);
  for (std::size_t l = 0; l < tight.layers.size(); ++l) {
    if (tight.layers[l].pre.size() != boxed.layers[l].pre.size())
      throw InputError("merge_bounds: layer " + std::to_string(l) + " widths differ");
    const bool last = l + 1 == tight.layers.size();
    for (std::size_t j = 0; j < tight.layers[l].pre.size(); ++j) {
      const Interval m =
          merge_interval(tight.layers[l].pre[j], boxed.layers[l].pre[j], conflicts);
      merged.layers[l].pre[j] = m;
      merged.layers[l].post[j] = last ? m : relu(m);
    }
  }
  return merged;
}

// Rewrites every block's big-M constants (and the post/output column bounds)
// with `bounds`, keeping the block structure and all indicators.
inline MilpProblem refine_big_m(const MilpProblem& problem, const BoundsMap& bounds) {
  MilpBuilder b(problem);
  for (auto& blk : b.neurons()) {
    if (blk.layer >= bounds.layers.size() || blk.index >= bounds.layers[blk.layer].pre.size())
      throw InputError("refine_big_m: bounds do not cover hidden neuron (" +
                       std::to_string(blk.layer) + ", " + std::to_string(blk.index) + ")");
    blk.bounds = bounds.layers[blk.layer].pre[blk.index];
    b.sync_post_bounds(blk);
  }
  if (!problem.outputs().empty()) {
    const auto& out = bounds.outputs();
    if (out.size() != problem.outputs().size())
      throw InputError("refine_big_m: output width differs");
    for (auto& ob : b.outputs()) {
      ob.bounds = out[ob.index];
      Variable& v = b.vars()[ob.var.index()];
      v.lower = ob.bounds.lb;
      v.upper = ob.bounds.ub;
    }
  }
  return b.finish();
}

// Collapses blocks that are stable under their current bounds to a single
// equality and drops their indicator.
inline MilpProblem simplify_stable(const MilpProblem& problem) {
  MilpBuilder b(problem);
  bool dropped = false;
  for (auto& blk : b.neurons()) {
    if (blk.indicator && classify(blk.bounds) != NeuronState::unstable) {
      blk.indicator.reset();
      b.sync_post_bounds(blk);
      dropped = true;
    }
  }
  if (dropped) b.compact();
  return b.finish();
}

// Merges tight and Box bounds per neuron, rewrites big-M constants with the
// merged bounds, then collapses every neuron the merged bounds prove stable.
inline std::pair<MilpProblem, SimplificationStats> tighten_and_simplify(
    const MilpProblem& problem, const BoundsMap& tight, const BoundsMap& boxed) {
  SimplificationStats stats;
  const BoundsMap merged = merge_bounds(tight, boxed, &stats.bound_conflicts);

  for (std::size_t l = 0; l < tight.layers.size(); ++l) {
    const bool last = l + 1 == tight.layers.size();
    for (std::size_t j = 0; j < tight.layers[l].pre.size(); ++j) {
      const Interval& t = tight.layers[l].pre[j];
      const Interval& m = merged.layers[l].pre[j];
      ++stats.neurons_total;
      if (m.lb > t.lb + kTightenedMargin || m.ub < t.ub - kTightenedMargin)
        ++stats.bounds_tightened_count;
      if (last) continue;
      ++stats.binary_total;
      stats.binary_removed_before += classify(t) != NeuronState::unstable;
      stats.binary_removed_count += classify(m) != NeuronState::unstable;
    }
  }
  return {simplify_stable(refine_big_m(problem, merged)), stats};
}

// Encode-time statistics: how many hidden neurons the tight bounds already
// prove stable.
inline SimplificationStats encode_stats(const BoundsMap& tight) {
  SimplificationStats s;
  for (std::size_t l = 0; l < tight.layers.size(); ++l) {
    const bool last = l + 1 == tight.layers.size();
    for (const auto& iv : tight.layers[l].pre) {
      ++s.neurons_total;
      if (last) continue;
      ++s.binary_total;
      const bool stable = classify(iv) != NeuronState::unstable;
      s.binary_removed_before += stable;
      s.binary_removed_count += stable;
    }
  }
  return s;
}

// CPLEX-LP text of the problem with an empty objective, for cross-checking
// against external solvers.
inline void write_lp(std::ostream& os, const MilpProblem& p) {
  auto num = [](double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
  };
  os << "\\ abdex MILP: " << p.variables().size() << " variables, " << p.constraints().size()
     << " constraints\n";
  os << "Minimize\n obj: 0 " << (p.variables().empty() ? "x" : p.var_name(VarId(0))) << "\n";
  os << "Subject To\n";
  for (std::size_t i = 0; i < p.constraints().size(); ++i) {
    const auto& r = p.constraints()[i];
    os << " c" << i << "_" << to_string(r.origin) << ":";
    for (const auto& t : r.terms) {
      os << (t.coef < 0 ? " - " : " + ") << num(std::abs(t.coef)) << " " << p.var_name(t.var);
    }
    os << " " << to_string(r.relation) << " " << num(r.rhs) << "\n";
  }
  os << "Bounds\n";
  for (std::size_t j = 0; j < p.variables().size(); ++j) {
    const auto& v = p.variables()[j];
    if (v.kind == VarKind::binary) continue;
    const std::string name = p.var_name(VarId(j));
    if (v.lower == v.upper) {
      os << " " << name << " = " << num(v.lower) << "\n";
      continue;
    }
    os << " " << (std::isfinite(v.lower) ? num(v.lower) : std::string("-inf")) << " <= " << name
       << " <= " << (std::isfinite(v.upper) ? num(v.upper) : std::string("+inf")) << "\n";
  }
  bool any_bin = false;
  for (std::size_t j = 0; j < p.variables().size(); ++j) {
    if (p.variables()[j].kind != VarKind::binary) continue;
    if (!any_bin) os << "Binaries\n";
    any_bin = true;
    os << " " << p.var_name(VarId(j)) << "\n";
  }
  os << "End\n";
}

inline std::string to_lp_string(const MilpProblem& p) {
  std::ostringstream os;
  write_lp(os, p);
  return os.str();
}

}  // namespace abdex
