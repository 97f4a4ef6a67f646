#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "abdex/error.hpp"
#include "abdex/interval.hpp"
#include "abdex/network.hpp"

namespace abdex {

struct LayerBounds {
  std::vector<Interval> pre;
  std::vector<Interval> post;

  friend bool operator==(const LayerBounds&, const LayerBounds&) = default;
};

// Interval per neuron. layers[l] mirrors net.layer(l); the last entry is the
// output layer, whose post intervals equal its pre intervals.
struct BoundsMap {
  std::vector<Interval> inputs;
  std::vector<LayerBounds> layers;

  const std::vector<Interval>& outputs() const { return layers.back().post; }

  bool matches(const Network& net) const {
    if (inputs.size() != net.input_dim() || layers.size() != net.layer_count()) return false;
    for (std::size_t l = 0; l < layers.size(); ++l)
      if (layers[l].pre.size() != net.layer(l).width() ||
          layers[l].post.size() != net.layer(l).width())
        return false;
    return true;
  }

  friend bool operator==(const BoundsMap&, const BoundsMap&) = default;
};

// Per attribute: a fixed value or free over the domain.
class AttributeAssignment {
 public:
  AttributeAssignment() = default;
  explicit AttributeAssignment(std::size_t n) : values_(n) {}

  static AttributeAssignment all_free(std::size_t n) { return AttributeAssignment(n); }
  static AttributeAssignment fixed_to(std::span<const double> instance) {
    AttributeAssignment a(instance.size());
    for (std::size_t i = 0; i < instance.size(); ++i) a.values_[i] = instance[i];
    return a;
  }

  std::size_t size() const { return values_.size(); }
  bool is_fixed(std::size_t i) const { return values_[i].has_value(); }
  double value(std::size_t i) const { return *values_[i]; }
  const std::optional<double>& operator[](std::size_t i) const { return values_[i]; }

  std::size_t fixed_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.has_value();
    return n;
  }

  AttributeAssignment& fix(std::size_t i, double v) {
    values_[i] = v;
    return *this;
  }
  AttributeAssignment& release(std::size_t i) {
    values_[i].reset();
    return *this;
  }
  AttributeAssignment freed(std::size_t i) const {
    AttributeAssignment copy = *this;
    copy.release(i);
    return copy;
  }

  void check(const InputDomain& domain) const {
    if (values_.size() != domain.size())
      throw InputError("assignment has " + std::to_string(values_.size()) +
                       " attributes, domain has " + std::to_string(domain.size()));
    for (std::size_t i = 0; i < values_.size(); ++i)
      if (values_[i] && !domain[i].contains(*values_[i]))
        throw InputError("attribute " + std::to_string(i) + " value " +
                         std::to_string(*values_[i]) + " lies outside its domain [" +
                         std::to_string(domain[i].lb) + ", " + std::to_string(domain[i].ub) +
                         "]");
  }

  friend bool operator==(const AttributeAssignment&, const AttributeAssignment&) = default;

 private:
  std::vector<std::optional<double>> values_;
};

// Box propagation: fixed attributes enter as point intervals, free ones as
// their domain, then every layer is an affine interval image followed by ReLU
// (hidden layers only).
inline BoundsMap box_propagate(const Network& net, const AttributeAssignment& assign,
                               const InputDomain& domain) {
  if (domain.size() != net.input_dim())
    throw InputError("box_propagate: domain width does not match the network");
  assign.check(domain);

  BoundsMap bounds;
  bounds.inputs.reserve(net.input_dim());
  for (std::size_t i = 0; i < net.input_dim(); ++i)
    bounds.inputs.push_back(assign.is_fixed(i) ? Interval::point(assign.value(i)) : domain[i]);

  const std::vector<Interval>* prev = &bounds.inputs;
  bounds.layers.reserve(net.layer_count());
  for (const Layer& layer : net.layers()) {
    LayerBounds lb;
    lb.pre.reserve(layer.width());
    for (std::size_t j = 0; j < layer.width(); ++j)
      lb.pre.push_back(affine_bounds(layer.weights.row(j), layer.biases[j], *prev));
    lb.post = lb.pre;
    if (layer.activation == Activation::relu)
      for (auto& iv : lb.post) iv = relu(iv);
    bounds.layers.push_back(std::move(lb));
    prev = &bounds.layers.back().post;
  }
  return bounds;
}

enum class ShortcutVerdict { removable, inconclusive };

// Removable iff the target output's lower bound strictly exceeds every rival
// output's upper bound. No tolerance: ties fall through to the solver.
inline ShortcutVerdict shortcut_check(const BoundsMap& bounds, std::size_t target) {
  const auto& out = bounds.outputs();
  if (target >= out.size())
    throw InputError("shortcut_check: target class " + std::to_string(target) +
                     " out of range (k = " + std::to_string(out.size()) + ")");
  for (std::size_t i = 0; i < out.size(); ++i)
    if (i != target && !(out[target].lb > out[i].ub)) return ShortcutVerdict::inconclusive;
  return ShortcutVerdict::removable;
}

}  // namespace abdex
