#include <catch_amalgamated.hpp>

#include <cstring>
#include <random>

#include "abdex/network.hpp"
#include "support/fixtures.hpp"

using namespace abdex;
using Catch::Approx;
using nlohmann::json;

TEST_CASE("loading the toy model", "[network][load]") {
  const Model m = parse_model_text(testing::kToyJson);
  CHECK(m.network.input_dim() == 2);
  CHECK(m.network.class_count() == 2);
  CHECK(m.network.layer_count() == 2);
  CHECK(m.network.hidden_layer_count() == 1);
  CHECK(m.network.layer(0).width() == 2);
  CHECK(m.network.layer(0).activation == Activation::relu);
  CHECK(m.network.output_layer().activation == Activation::identity);
  CHECK(m.network.layer(0).weights(1, 1) == -1.0);
  CHECK(m.domain[0] == Interval{0.0, 0.7});
  CHECK(m.domain[1] == Interval{0.2, 0.5});
}

TEST_CASE("load errors name the offending part", "[network][load]") {
  auto error_of = [](const std::string& text) -> std::string {
    try {
      parse_model_text(text);
    } catch (const LoadError& e) {
      return e.what();
    }
    return "";
  };
  json doc = json::parse(testing::kToyJson);

  SECTION("bias length differs from layer width") {
    doc["layers"][0]["biases"] = {0, 0, 0};
    const std::string msg = error_of(doc.dump());
    CHECK_THAT(msg, Catch::Matchers::ContainsSubstring("layer 0"));
    CHECK_THAT(msg, Catch::Matchers::ContainsSubstring("bias"));
  }
  SECTION("weight row width differs from previous layer") {
    doc["layers"][1]["weights"][1] = {1, 2, 3};
    CHECK_THAT(error_of(doc.dump()), Catch::Matchers::ContainsSubstring("layer 1"));
  }
  SECTION("last layer must be identity") {
    doc["layers"][1]["activation"] = "relu";
    CHECK_FALSE(error_of(doc.dump()).empty());
  }
  SECTION("hidden layers must be relu") {
    doc["layers"][0]["activation"] = "identity";
    CHECK_FALSE(error_of(doc.dump()).empty());
  }
  SECTION("unknown activation") {
    doc["layers"][0]["activation"] = "tanh";
    CHECK_FALSE(error_of(doc.dump()).empty());
  }
  SECTION("one class only") {
    doc["layers"][1]["weights"] = {{1, 1}};
    doc["layers"][1]["biases"] = {0};
    CHECK_FALSE(error_of(doc.dump()).empty());
  }
  SECTION("domain width mismatch") {
    doc["input_domain"] = {{0.0, 1.0}};
    CHECK_FALSE(error_of(doc.dump()).empty());
  }
  SECTION("reversed domain interval") {
    doc["input_domain"][1] = {0.5, 0.2};
    CHECK_THAT(error_of(doc.dump()), Catch::Matchers::ContainsSubstring("1"));
  }
  SECTION("non-numeric weight") {
    doc["layers"][0]["weights"][0][1] = "x";
    CHECK_FALSE(error_of(doc.dump()).empty());
  }
  SECTION("missing field") {
    doc.erase("layers");
    CHECK_THAT(error_of(doc.dump()), Catch::Matchers::ContainsSubstring("layers"));
  }
  SECTION("malformed text") {
    CHECK_FALSE(error_of("{\"input_dim\": 2,").empty());
  }
  SECTION("missing file") {
    CHECK_THROWS_AS(load_model("/nonexistent/model.json"), LoadError);
  }
}

TEST_CASE("non-finite parameters are rejected", "[network]") {
  Layer out;
  out.weights = Matrix(2, 1);
  out.weights(0, 0) = std::numeric_limits<double>::infinity();
  out.biases = {0, 0};
  out.activation = Activation::identity;
  CHECK_THROWS_AS(Network(1, {out}), LoadError);
  CHECK_THROWS_AS(InputDomain({{0.0, std::numeric_limits<double>::infinity()}}), InputError);
}

TEST_CASE("network without hidden layers", "[network]") {
  const Model m = parse_model_text(R"({
    "input_dim": 2, "input_domain": [[0, 1], [0, 1]],
    "layers": [{"weights": [[1, 0], [0, 1]], "biases": [0, 0.5], "activation": "identity"}]
  })");
  CHECK(m.network.hidden_layer_count() == 0);
  CHECK(m.network.hidden_neuron_count() == 0);
  const std::vector<double> p{0.9, 0.2};
  CHECK(predict(m.network, p) == 0);
}

TEST_CASE("forward evaluation of the toy model", "[network][forward]") {
  const Network net = testing::toy_model().network;
  SECTION("(0.7, 0.2)") {
    const std::vector<double> p{0.7, 0.2};
    const Activations a = forward(net, p);
    CHECK(a.pre[0][0] == Approx(0.9).margin(1e-12));
    CHECK(a.pre[0][1] == Approx(0.5).margin(1e-12));
    CHECK(a.post[0][0] == Approx(0.9).margin(1e-12));
    CHECK(a.post[0][1] == Approx(0.5).margin(1e-12));
    CHECK(a.outputs()[0] == Approx(1.4).margin(1e-12));
    CHECK(a.outputs()[1] == Approx(0.4).margin(1e-12));
    CHECK(predict(net, p) == 0);
    CHECK(has_unique_prediction(net, p));
  }
  SECTION("(0.0, 0.5)") {
    const std::vector<double> p{0.0, 0.5};
    const Activations a = forward(net, p);
    CHECK(a.pre[0][0] == 0.5);
    CHECK(a.pre[0][1] == -0.5);
    CHECK(a.post[0][1] == 0.0);
    CHECK(a.outputs()[0] == 0.5);
    CHECK(a.outputs()[1] == 0.5);
    CHECK(predict(net, p) == 0);
    CHECK_FALSE(has_unique_prediction(net, p));
  }
  SECTION("length mismatch") {
    const std::vector<double> p{0.1};
    CHECK_THROWS_AS(forward(net, p), InputError);
  }
}

TEST_CASE("zero weights give the biases", "[network][forward]") {
  Layer h;
  h.weights = Matrix(3, 2);
  h.biases = {0.5, -1.0, 0.0};
  Layer o;
  o.weights = Matrix(2, 3);
  o.biases = {0.25, -0.75};
  o.activation = Activation::identity;
  const Network net(2, {h, o});
  const std::vector<double> p{3.0, -7.0};
  CHECK(forward(net, p).outputs() == std::vector<double>{0.25, -0.75});
}

TEST_CASE("argmax tie-breaking", "[network]") {
  CHECK(argmax(std::vector<double>{0.5, 0.5}) == 0);
  CHECK(argmax(std::vector<double>{0.1, 0.9, 0.3}) == 1);
  CHECK(argmax(std::vector<double>{-1.0, 2.0, 2.0}) == 1);
}

TEST_CASE("network properties on random models", "[network][property]") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const Model m = testing::random_small_model(rng);
    const Model reloaded = parse_model_text(to_json(m).dump());
    Model shifted = m;
    {
      std::vector<Layer> layers = m.network.layers();
      for (double& b : layers.back().biases) b += 3.25;
      shifted.network = Network(m.network.input_dim(), std::move(layers));
    }
    for (int s = 0; s < 20; ++s) {
      const auto p = testing::random_point(rng, m.domain);
      const Activations a = forward(m.network, p);
      for (std::size_t l = 0; l + 1 < a.post.size(); ++l)
        for (double v : a.post[l]) CHECK(v >= 0.0);
      const auto& o1 = a.outputs();
      const auto o2 = forward(reloaded.network, p).outputs();
      CHECK(std::memcmp(o1.data(), o2.data(), o1.size() * sizeof(double)) == 0);
      CHECK(predict(shifted.network, p) == predict(m.network, p));
    }
  }
}
