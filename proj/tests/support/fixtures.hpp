#pragma once

#include <algorithm>
#include <random>
#include <span>
#include <vector>

#include "abdex/box.hpp"
#include "abdex/milp.hpp"
#include "abdex/network.hpp"
#include "abdex/simplex.hpp"

namespace abdex::testing {

// Two inputs x1 in [0, 0.7], x2 in [0.2, 0.5]; hidden weights [[1,1],[1,-1]];
// output weights [[1,1],[1,-1]]; zero biases.
inline Model toy_model() {
  Layer hidden;
  hidden.weights = Matrix(2, 2);
  hidden.weights(0, 0) = 1; hidden.weights(0, 1) = 1;
  hidden.weights(1, 0) = 1; hidden.weights(1, 1) = -1;
  hidden.biases = {0, 0};
  hidden.activation = Activation::relu;
  Layer out = hidden;
  out.activation = Activation::identity;
  return Model{Network(2, {hidden, out}), InputDomain({{0.0, 0.7}, {0.2, 0.5}})};
}

inline constexpr const char* kToyJson = R"({
  "input_dim": 2,
  "input_domain": [[0.0, 0.7], [0.2, 0.5]],
  "layers": [
    {"weights": [[1, 1], [1, -1]], "biases": [0, 0], "activation": "relu"},
    {"weights": [[1, 1], [1, -1]], "biases": [0, 0], "activation": "identity"}
  ]
})";

// Columns of the small MILP example: x1, y1, z1.
struct SmallMilp {
  LpProblem lp;
  VarId x1, y1, z1;
};

// min y1  s.t.  1 <= x1 <= 3,  3x1 - 2 <= y1,  y1 <= 3x1 - 2 - 0.5(1 - z1),
//               0 <= y1 <= 8 z1,  z1 in {0,1} (relaxed to [0,1]).
inline SmallMilp small_milp() {
  SmallMilp e;
  e.x1 = e.lp.add_variable(1.0, 3.0);
  e.y1 = e.lp.add_variable(0.0, kInf);
  e.z1 = e.lp.add_variable(0.0, 1.0, /*is_binary=*/true);
  e.lp.add_row({{e.x1, 3.0}, {e.y1, -1.0}}, Relation::le, 2.0);
  e.lp.add_row({{e.y1, 1.0}, {e.x1, -3.0}, {e.z1, -0.5}}, Relation::le, -2.5);
  e.lp.add_row({{e.y1, 1.0}, {e.z1, -8.0}}, Relation::le, 0.0);
  e.lp.objective = {{e.y1, 1.0}};
  e.lp.sense = Sense::minimize;
  return e;
}

// The same problem as a MilpProblem, x1 tagged as the single input.
struct SmallMilpProblem {
  MilpProblem problem;
  VarId x1, y1, z1;
};

inline SmallMilpProblem small_milp_problem() {
  const SmallMilp e = small_milp();
  MilpBuilder b;
  SmallMilpProblem out;
  out.x1 = b.add_variable({VarKind::continuous, 1.0, 3.0, VarRole::input, 0, 0});
  out.y1 = b.add_variable({VarKind::continuous, 0.0, kInf, VarRole::post, 0, 0});
  out.z1 = b.add_variable({VarKind::binary, 0.0, 1.0, VarRole::indicator, 0, 0});
  b.inputs().push_back(out.x1);
  b.domain().push_back({1.0, 3.0});
  for (const auto& r : e.lp.rows) b.extra().push_back(r);
  out.problem = b.finish();
  return out;
}

// Tight bounds of the toy network over its whole domain, written out by
// hand: hidden pre-activations [0.2, 1.2] and [-0.5, 0.5], outputs
// [0.2, 1.4] and [0.2, 1.0].
inline BoundsMap toy_tight_bounds() {
  BoundsMap b;
  b.inputs = {{0.0, 0.7}, {0.2, 0.5}};
  b.layers.resize(2);
  b.layers[0].pre = {{0.2, 1.2}, {-0.5, 0.5}};
  b.layers[0].post = {{0.2, 1.2}, {0.0, 0.5}};
  b.layers[1].pre = {{0.2, 1.4}, {0.2, 1.0}};
  b.layers[1].post = b.layers[1].pre;
  return b;
}

// Full variable assignment of `problem` induced by evaluating the network at
// `point`: indicators follow the sign of each pre-activation.
inline std::vector<double> assignment_from_forward(const MilpProblem& problem, const Network& net,
                                                   std::span<const double> point) {
  const Activations act = forward(net, point);
  std::vector<double> x(problem.variables().size(), 0.0);
  for (std::size_t j = 0; j < x.size(); ++j) {
    const Variable& v = problem.variables()[j];
    switch (v.role) {
      case VarRole::input: x[j] = point[v.index]; break;
      case VarRole::post: x[j] = act.post[v.layer][v.index]; break;
      case VarRole::indicator: x[j] = act.pre[v.layer][v.index] > 0.0 ? 1.0 : 0.0; break;
      case VarRole::output: x[j] = act.outputs()[v.index]; break;
    }
  }
  return x;
}

// Largest row violation or column-bound excess of `x`.
inline double max_violation(const MilpProblem& problem, std::span<const double> x) {
  double worst = 0.0;
  for (const auto& r : problem.constraints()) worst = std::max(worst, r.violation(x));
  for (std::size_t j = 0; j < x.size(); ++j) {
    const Variable& v = problem.variables()[j];
    worst = std::max({worst, v.lower - x[j], x[j] - v.upper});
  }
  return worst;
}

// Random assignment: each attribute fixed to the instance value with
// probability `p_fixed`.
inline AttributeAssignment random_assignment(std::mt19937_64& rng, std::span<const double> instance,
                                             double p_fixed = 0.5) {
  AttributeAssignment a(instance.size());
  std::bernoulli_distribution coin(p_fixed);
  for (std::size_t i = 0; i < instance.size(); ++i)
    if (coin(rng)) a.fix(i, instance[i]);
  return a;
}

// Random network with the given hidden widths; weights in [-1, 1], biases in
// [-0.5, 0.5], domain [lo_i, lo_i + w_i] with random offsets.
inline Model random_model(std::mt19937_64& rng, std::size_t inputs,
                          const std::vector<std::size_t>& hidden, std::size_t classes) {
  std::uniform_real_distribution<double> w(-1.0, 1.0);
  std::uniform_real_distribution<double> b(-0.5, 0.5);
  std::uniform_real_distribution<double> lo(-1.0, 0.5);
  std::uniform_real_distribution<double> width(0.2, 1.5);
  std::vector<Layer> layers;
  std::size_t prev = inputs;
  std::vector<std::size_t> widths = hidden;
  widths.push_back(classes);
  for (std::size_t l = 0; l < widths.size(); ++l) {
    Layer layer;
    layer.weights = Matrix(widths[l], prev);
    for (std::size_t i = 0; i < widths[l]; ++i)
      for (std::size_t j = 0; j < prev; ++j) layer.weights(i, j) = w(rng);
    for (std::size_t i = 0; i < widths[l]; ++i) layer.biases.push_back(b(rng));
    layer.activation = l + 1 == widths.size() ? Activation::identity : Activation::relu;
    layers.push_back(std::move(layer));
    prev = widths[l];
  }
  std::vector<Interval> dom;
  for (std::size_t i = 0; i < inputs; ++i) {
    const double l = lo(rng);
    dom.push_back({l, l + width(rng)});
  }
  return Model{Network(inputs, std::move(layers)), InputDomain(std::move(dom))};
}

// Network shape drawn from the acceptance corpus ranges: 2-10 inputs, 1-3
// hidden layers, at most 12 hidden neurons in total, 2-3 classes.
inline Model random_small_model(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> inputs(2, 10);
  std::uniform_int_distribution<std::size_t> depth(1, 3);
  std::uniform_int_distribution<std::size_t> classes(2, 3);
  const std::size_t n = inputs(rng);
  const std::size_t L = depth(rng);
  std::vector<std::size_t> hidden;
  std::size_t budget = 12;
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t remaining_layers = L - l - 1;
    const std::size_t max_w = std::min<std::size_t>(6, budget - remaining_layers);
    std::uniform_int_distribution<std::size_t> width(1, max_w);
    const std::size_t wl = width(rng);
    hidden.push_back(wl);
    budget -= wl;
  }
  return random_model(rng, n, hidden, classes(rng));
}

inline std::vector<double> random_point(std::mt19937_64& rng, const InputDomain& dom) {
  std::vector<double> p(dom.size());
  for (std::size_t i = 0; i < dom.size(); ++i)
    p[i] = std::uniform_real_distribution<double>(dom[i].lb, dom[i].ub)(rng);
  return p;
}

}  // namespace abdex::testing
