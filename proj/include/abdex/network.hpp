#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "abdex/error.hpp"
#include "abdex/interval.hpp"

namespace abdex {

// Row-major dense matrix; row(i) holds the weights into neuron i.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class Activation { relu, identity };

struct Layer {
  Matrix weights;  // width x fan_in
  std::vector<double> biases;
  Activation activation = Activation::relu;

  std::size_t width() const { return weights.rows(); }
  std::size_t fan_in() const { return weights.cols(); }

  friend bool operator==(const Layer&, const Layer&) = default;
};

// Feedforward ReLU network. Hidden layers use ReLU, the last layer is the
// identity and has one neuron per class. Immutable after construction.
class Network {
 public:
  Network() = default;
  Network(std::size_t input_dim, std::vector<Layer> layers)
      : input_dim_(input_dim), layers_(std::move(layers)) {
    validate();
  }

  std::size_t input_dim() const { return input_dim_; }
  std::size_t class_count() const { return layers_.empty() ? 0 : layers_.back().width(); }
  const std::vector<Layer>& layers() const { return layers_; }
  const Layer& layer(std::size_t i) const { return layers_[i]; }
  std::size_t layer_count() const { return layers_.size(); }
  std::size_t hidden_layer_count() const { return layers_.empty() ? 0 : layers_.size() - 1; }
  const Layer& output_layer() const { return layers_.back(); }

  std::size_t hidden_neuron_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) n += layers_[l].width();
    return n;
  }

  friend bool operator==(const Network&, const Network&) = default;

 private:
  void validate() const {
    if (input_dim_ == 0) throw LoadError("network: input_dim must be positive");
    if (layers_.empty()) throw LoadError("network: at least one layer is required");
    std::size_t prev = input_dim_;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const Layer& layer = layers_[l];
      const std::string where = "layer " + std::to_string(l);
      if (layer.width() == 0) throw LoadError(where + ": zero width");
      if (layer.fan_in() != prev)
        throw LoadError(where + ": weight rows have " + std::to_string(layer.fan_in()) +
                        " columns, expected " + std::to_string(prev));
      if (layer.biases.size() != layer.width())
        throw LoadError(where + ": bias length " + std::to_string(layer.biases.size()) +
                        " does not match width " + std::to_string(layer.width()));
      const bool last = l + 1 == layers_.size();
      if (last && layer.activation != Activation::identity)
        throw LoadError(where + ": output layer must use the identity activation");
      if (!last && layer.activation != Activation::relu)
        throw LoadError(where + ": hidden layers must use relu");
      for (std::size_t i = 0; i < layer.width(); ++i) {
        if (!std::isfinite(layer.biases[i]))
          throw LoadError(where + ": bias " + std::to_string(i) + " is not finite");
        for (std::size_t j = 0; j < layer.fan_in(); ++j)
          if (!std::isfinite(layer.weights(i, j)))
            throw LoadError(where + ": weight [" + std::to_string(i) + "][" +
                            std::to_string(j) + "] is not finite");
      }
      prev = layer.width();
    }
    if (class_count() < 2) throw LoadError("network: at least two classes are required");
  }

  std::size_t input_dim_ = 0;
  std::vector<Layer> layers_;
};

// Per-attribute [lb, ub] box in raw feature units.
class InputDomain {
 public:
  InputDomain() = default;
  explicit InputDomain(std::vector<Interval> bounds) : bounds_(std::move(bounds)) {
    for (std::size_t i = 0; i < bounds_.size(); ++i) {
      const Interval& b = bounds_[i];
      if (!b.finite()) throw InputError("input_domain[" + std::to_string(i) + "] is not finite");
      if (!b.valid())
        throw InputError("input_domain[" + std::to_string(i) + "] has lb > ub");
    }
  }

  std::size_t size() const { return bounds_.size(); }
  const Interval& operator[](std::size_t i) const { return bounds_[i]; }
  std::span<const Interval> bounds() const { return bounds_; }

  bool contains(std::span<const double> point) const {
    if (point.size() != bounds_.size()) return false;
    for (std::size_t i = 0; i < point.size(); ++i)
      if (!bounds_[i].contains(point[i])) return false;
    return true;
  }

  friend bool operator==(const InputDomain&, const InputDomain&) = default;

 private:
  std::vector<Interval> bounds_;
};

// A network together with the input domain it is explained over.
struct Model {
  Network network;
  InputDomain domain;

  friend bool operator==(const Model&, const Model&) = default;
};

// Pre- and post-activation values of every layer; the output layer has
// post == pre.
struct Activations {
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> post;

  const std::vector<double>& outputs() const { return post.back(); }
};

inline Activations forward(const Network& net, std::span<const double> point) {
  if (point.size() != net.input_dim())
    throw InputError("forward: point has " + std::to_string(point.size()) +
                     " values, network expects " + std::to_string(net.input_dim()));
  Activations act;
  act.pre.reserve(net.layer_count());
  act.post.reserve(net.layer_count());
  std::vector<double> prev(point.begin(), point.end());
  for (const Layer& layer : net.layers()) {
    std::vector<double> pre(layer.width());
    for (std::size_t i = 0; i < layer.width(); ++i) {
      double s = layer.biases[i];
      const auto w = layer.weights.row(i);
      for (std::size_t j = 0; j < w.size(); ++j) s += w[j] * prev[j];
      pre[i] = s;
    }
    std::vector<double> post = pre;
    if (layer.activation == Activation::relu)
      for (double& v : post) v = std::max(v, 0.0);
    act.pre.push_back(std::move(pre));
    prev = post;
    act.post.push_back(std::move(post));
  }
  return act;
}

// Index of the largest output; ties go to the lowest index.
inline std::size_t argmax(std::span<const double> outputs) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < outputs.size(); ++i)
    if (outputs[i] > outputs[best]) best = i;
  return best;
}

inline std::size_t predict(const Network& net, std::span<const double> point) {
  return argmax(forward(net, point).outputs());
}

// True when the largest output is attained by exactly one class.
inline bool has_unique_prediction(const Network& net, std::span<const double> point) {
  const auto out = forward(net, point).outputs();
  const std::size_t best = argmax(out);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (i != best && out[i] == out[best]) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Model JSON:
//   {"input_dim": n,
//    "input_domain": [[lb, ub], ...],
//    "layers": [{"weights": [[...], ...], "biases": [...],
//                "activation": "relu" | "identity"}, ...]}
// ---------------------------------------------------------------------------

namespace detail {

inline double json_number(const nlohmann::json& v, const std::string& where) {
  if (!v.is_number()) throw LoadError(where + ": expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw LoadError(where + ": not finite");
  return d;
}

inline const nlohmann::json& json_field(const nlohmann::json& obj, const char* key,
                                        const std::string& where) {
  if (!obj.is_object()) throw LoadError(where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw LoadError(where + ": missing \"" + key + "\"");
  return *it;
}

}  // namespace detail

inline Model parse_model(const nlohmann::json& doc) {
  using detail::json_field;
  using detail::json_number;

  const auto& dim_v = json_field(doc, "input_dim", "model");
  if (!dim_v.is_number_integer() || dim_v.get<long long>() <= 0)
    throw LoadError("model: input_dim must be a positive integer");
  const auto input_dim = static_cast<std::size_t>(dim_v.get<long long>());

  const auto& dom_v = json_field(doc, "input_domain", "model");
  if (!dom_v.is_array() || dom_v.size() != input_dim)
    throw LoadError("model: input_domain must be an array of " + std::to_string(input_dim) +
                    " [lb, ub] pairs");
  std::vector<Interval> bounds;
  for (std::size_t i = 0; i < dom_v.size(); ++i) {
    const std::string where = "input_domain[" + std::to_string(i) + "]";
    const auto& pair = dom_v[i];
    if (!pair.is_array() || pair.size() != 2) throw LoadError(where + ": expected [lb, ub]");
    Interval b{json_number(pair[0], where), json_number(pair[1], where)};
    if (!b.valid()) throw LoadError(where + ": lb > ub");
    bounds.push_back(b);
  }

  const auto& layers_v = json_field(doc, "layers", "model");
  if (!layers_v.is_array() || layers_v.empty())
    throw LoadError("model: layers must be a non-empty array");
  std::vector<Layer> layers;
  std::size_t prev = input_dim;
  for (std::size_t l = 0; l < layers_v.size(); ++l) {
    const std::string where = "layer " + std::to_string(l);
    const auto& lv = layers_v[l];
    const auto& w_v = json_field(lv, "weights", where);
    const auto& b_v = json_field(lv, "biases", where);
    const auto& a_v = json_field(lv, "activation", where);
    if (!w_v.is_array() || w_v.empty()) throw LoadError(where + ": weights must be non-empty");
    if (!b_v.is_array()) throw LoadError(where + ": biases must be an array");
    if (b_v.size() != w_v.size())
      throw LoadError(where + ": bias length " + std::to_string(b_v.size()) +
                      " does not match width " + std::to_string(w_v.size()));

    Layer layer;
    layer.weights = Matrix(w_v.size(), prev);
    for (std::size_t i = 0; i < w_v.size(); ++i) {
      const auto& row = w_v[i];
      if (!row.is_array() || row.size() != prev)
        throw LoadError(where + ": weight row " + std::to_string(i) + " has " +
                        std::to_string(row.is_array() ? row.size() : 0) +
                        " entries, expected " + std::to_string(prev));
      for (std::size_t j = 0; j < prev; ++j)
        layer.weights(i, j) =
            json_number(row[j], where + " weight [" + std::to_string(i) + "][" +
                                    std::to_string(j) + "]");
    }
    for (std::size_t i = 0; i < b_v.size(); ++i)
      layer.biases.push_back(json_number(b_v[i], where + " bias " + std::to_string(i)));

    if (!a_v.is_string()) throw LoadError(where + ": activation must be a string");
    const auto act = a_v.get<std::string>();
    if (act == "relu")
      layer.activation = Activation::relu;
    else if (act == "identity")
      layer.activation = Activation::identity;
    else
      throw LoadError(where + ": unknown activation \"" + act + "\"");

    prev = layer.width();
    layers.push_back(std::move(layer));
  }

  return Model{Network(input_dim, std::move(layers)), InputDomain(std::move(bounds))};
}

inline nlohmann::json to_json(const Model& model) {
  nlohmann::json doc;
  doc["input_dim"] = model.network.input_dim();
  auto dom = nlohmann::json::array();
  for (const auto& b : model.domain.bounds()) dom.push_back({b.lb, b.ub});
  doc["input_domain"] = dom;
  auto layers = nlohmann::json::array();
  for (const Layer& layer : model.network.layers()) {
    nlohmann::json lv;
    auto w = nlohmann::json::array();
    for (std::size_t i = 0; i < layer.width(); ++i) {
      const auto row = layer.weights.row(i);
      w.push_back(std::vector<double>(row.begin(), row.end()));
    }
    lv["weights"] = w;
    lv["biases"] = layer.biases;
    lv["activation"] = layer.activation == Activation::relu ? "relu" : "identity";
    layers.push_back(std::move(lv));
  }
  doc["layers"] = layers;
  return doc;
}

inline Model parse_model_text(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw LoadError(std::string("model: invalid JSON: ") + e.what());
  }
  return parse_model(doc);
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open model file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model_text(ss.str());
}

}  // namespace abdex
