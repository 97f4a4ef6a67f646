// abdex: command-line front end for the explanation engine.
//
//   abdex explain MODEL INSTANCES   one CSV row per instance
//   abdex bounds  MODEL             tight and Box bounds per neuron
//   abdex bench   MODEL INSTANCES   baseline versus improved comparison
//   abdex verify  MODEL INSTANCES   explain, then check sufficiency/minimality
//
// Exit codes: 0 success, 1 verification failed, 2 input error, 3 solver
// failure.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "abdex/bench.hpp"
#include "abdex/explainer.hpp"
#include "abdex/network.hpp"

namespace {

using namespace abdex;

constexpr int kExitVerifyFailed = 1;
constexpr int kExitInput = 2;
constexpr int kExitSolver = 3;

struct Options {
  std::string model_path;
  std::string instances_path;
  std::string mode = "improved";
  std::string tight_bounds = "milp";
  std::string order = "asc";
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  long time_budget_ms = -1;
  double tolerance = 1e-6;
  std::size_t samples = 1000;
  std::size_t sample = 0;
  std::string dataset;
  bool pre = false;
};

std::vector<std::size_t> parse_order(const std::string& text, std::size_t n) {
  if (text == "asc") return {};
  std::vector<std::size_t> order;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto v = parse_double(cell);
    if (!v || *v < 0 || *v != static_cast<double>(static_cast<std::size_t>(*v)))
      throw InputError("--order: '" + cell + "' is not an attribute index");
    order.push_back(static_cast<std::size_t>(*v));
  }
  return resolve_order(order, n);
}

EngineConfig make_config(const Options& o, std::size_t n) {
  EngineConfig cfg;
  cfg.tight_bounds_mode = o.tight_bounds == "box" ? TightBoundsMode::box : TightBoundsMode::milp;
  cfg.order = parse_order(o.order, n);
  cfg.solver.lp.feasibility_tol = o.tolerance;
  cfg.solver.integrality_tol = o.tolerance;
  if (o.time_budget_ms >= 0) cfg.solver.time_budget = std::chrono::milliseconds(o.time_budget_ms);
  return cfg;
}

ExplainMode parse_mode(const std::string& s) {
  return s == "baseline" ? ExplainMode::baseline : ExplainMode::improved;
}

// Optionally keeps a seeded random subset of the rows, in file order.
InstanceSet load_instances(const Options& o) {
  InstanceSet set = ingest_csv(o.instances_path);
  if (o.sample == 0 || o.sample >= set.size()) return set;
  std::vector<std::size_t> idx(set.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(o.seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(o.sample);
  std::sort(idx.begin(), idx.end());
  InstanceSet out;
  out.source = set.source;
  if (set.labels) out.labels.emplace();
  for (std::size_t i : idx) {
    out.rows.push_back(set.rows[i]);
    out.lines.push_back(set.lines[i]);
    if (set.labels) out.labels->push_back((*set.labels)[i]);
  }
  return out;
}

std::string stem(const std::string& path) { return std::filesystem::path(path).stem().string(); }

int cmd_explain(const Options& o) {
  const Model m = load_model(o.model_path);
  const InstanceSet set = load_instances(o);
  const Explainer ex(m.network, m.domain, make_config(o, m.network.input_dim()));
  const RunRecord rec = run_mode(ex, set, parse_mode(o.mode), o.jobs);
  std::cout << kExplainHeader << '\n';
  write_explain_rows(std::cout, rec);
  return 0;
}

int cmd_bounds(const Options& o) {
  const Model m = load_model(o.model_path);
  const Network& net = m.network;
  const BoundsMap box = compute_tight_bounds(net, m.domain, TightBoundsMode::box);
  EngineConfig cfg = make_config(o, net.input_dim());
  const BoundsMap tight =
      compute_tight_bounds(net, m.domain, cfg.tight_bounds_mode, *cfg.make_backend());
  std::cout << "layer,neuron,tight_lb,tight_ub,box_lb,box_ub\n";
  auto row = [](std::size_t l, std::size_t j, const Interval& t, const Interval& b) {
    std::cout << l << ',' << j << ',' << format_double(t.lb) << ',' << format_double(t.ub) << ','
              << format_double(b.lb) << ',' << format_double(b.ub) << '\n';
  };
  for (std::size_t i = 0; i < net.input_dim(); ++i) row(0, i, tight.inputs[i], box.inputs[i]);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const auto& t = o.pre ? tight.layers[l].pre : tight.layers[l].post;
    const auto& b = o.pre ? box.layers[l].pre : box.layers[l].post;
    for (std::size_t j = 0; j < t.size(); ++j) row(l + 1, j, t[j], b[j]);
  }
  return 0;
}

int cmd_bench(const Options& o) {
  const Model m = load_model(o.model_path);
  const InstanceSet set = load_instances(o);
  const Explainer ex(m.network, m.domain, make_config(o, m.network.input_dim()));
  const std::string dataset = o.dataset.empty() ? stem(o.instances_path) : o.dataset;
  const std::string network = stem(o.model_path);
  const RunRecord base = run_mode(ex, set, ExplainMode::baseline, o.jobs, dataset, network);
  const RunRecord ours = run_mode(ex, set, ExplainMode::improved, o.jobs, dataset, network);
  write_bench_csv(std::cout, bench_rows(base, ours));
  return 0;
}

int cmd_verify(const Options& o) {
  const Model m = load_model(o.model_path);
  const InstanceSet set = load_instances(o);
  const Explainer ex(m.network, m.domain, make_config(o, m.network.input_dim()));
  const RunRecord rec = run_mode(ex, set, parse_mode(o.mode), o.jobs);
  std::vector<VerificationReport> reports(rec.runs.size());
  parallel_for(rec.runs.size(), o.jobs, [&](std::size_t i) {
    VerifyOptions vo;
    vo.samples = o.samples;
    vo.seed = o.seed + i;
    reports[i] = verify_explanation(ex, set.rows[i], rec.runs[i].result.explanation, vo);
  });
  std::cout << "instance,kept,samples,sampled_violations,formally_sufficient,minimal,"
               "minimality_failures,unverified,ok\n";
  bool all_ok = true;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    all_ok = all_ok && r.ok();
    std::cout << i << ',' << join_indices(rec.runs[i].result.explanation.kept_indices()) << ','
              << r.samples_checked << ',' << r.sufficiency_violations << ','
              << (r.formally_sufficient ? (*r.formally_sufficient ? "yes" : "no") : "unknown")
              << ',' << (r.minimal() ? "yes" : "no") << ',' << join_indices(r.minimality_failures)
              << ',' << join_indices(r.unverified) << ',' << (r.ok() ? "yes" : "no") << '\n';
  }
  return all_ok ? 0 : kExitVerifyFailed;
}

void add_engine_flags(CLI::App* sub, Options& o) {
  sub->add_option("--tight-bounds", o.tight_bounds, "Precomputed bounds: milp or box")
      ->check(CLI::IsMember({"milp", "box"}));
  sub->add_option("--order", o.order, "Attribute order: asc, or a permutation like 2,0,1");
  sub->add_option("--time-budget-ms", o.time_budget_ms,
                  "Wall-clock budget per solver call; negative means none");
  sub->add_option("--tolerance", o.tolerance, "LP feasibility and integrality tolerance")
      ->check(CLI::PositiveNumber);
}

void add_instance_flags(CLI::App* sub, Options& o) {
  sub->add_option("instances", o.instances_path, "Instance CSV")->required();
  sub->add_option("--jobs", o.jobs, "Instances explained in parallel")->check(CLI::PositiveNumber);
  sub->add_option("--seed", o.seed, "Seed for --sample and verification sampling");
  sub->add_option("--sample", o.sample, "Use a random subset of this many instances");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Abductive explanations for ReLU network predictions"};
  app.require_subcommand(1);
  Options o;

  auto* explain = app.add_subcommand("explain", "Explain each instance");
  explain->add_option("model", o.model_path, "Model JSON")->required();
  add_instance_flags(explain, o);
  explain->add_option("--mode", o.mode, "baseline or improved")
      ->check(CLI::IsMember({"baseline", "improved"}));
  add_engine_flags(explain, o);

  auto* bounds = app.add_subcommand("bounds", "Print tight and Box bounds per neuron");
  bounds->add_option("model", o.model_path, "Model JSON")->required();
  bounds->add_flag("--pre", o.pre, "Report pre-activation instead of post-ReLU intervals");
  add_engine_flags(bounds, o);

  auto* bench = app.add_subcommand("bench", "Compare baseline and improved modes");
  bench->add_option("model", o.model_path, "Model JSON")->required();
  add_instance_flags(bench, o);
  bench->add_option("--dataset", o.dataset, "Dataset name for the CSV (default: file stem)");
  add_engine_flags(bench, o);

  auto* verify = app.add_subcommand("verify", "Explain, then verify each explanation");
  verify->add_option("model", o.model_path, "Model JSON")->required();
  add_instance_flags(verify, o);
  verify->add_option("--mode", o.mode, "baseline or improved")
      ->check(CLI::IsMember({"baseline", "improved"}));
  verify->add_option("--samples", o.samples, "Random completions checked per explanation");
  add_engine_flags(verify, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*explain) return cmd_explain(o);
    if (*bounds) return cmd_bounds(o);
    if (*bench) return cmd_bench(o);
    if (*verify) return cmd_verify(o);
  } catch (const InputError& e) {
    std::cerr << "abdex: " << e.what() << '\n';
    return kExitInput;
  } catch (const SolverError& e) {
    std::cerr << "abdex: solver failure: " << e.what() << '\n';
    return kExitSolver;
  }
  return 0;
}
