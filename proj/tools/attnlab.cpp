// attnlab command line: graph building, density analytics, the equivalence and
// gradient suites, synthetic data, training, density-stratified evaluation and
// the attention head probe.
//
// Exit codes: 0 success, 1 a check failed, 2 usage or input error,
// 3 runtime error (for example a diverged training run).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "attnlab/attention_trace.hpp"
#include "attnlab/config.hpp"
#include "attnlab/context_example.hpp"
#include "attnlab/density.hpp"
#include "attnlab/entity_graph.hpp"
#include "attnlab/errors.hpp"
#include "attnlab/head_probe.hpp"
#include "attnlab/model.hpp"
#include "attnlab/reports.hpp"
#include "attnlab/suites.hpp"
#include "attnlab/synthetic.hpp"
#include "attnlab/text.hpp"
#include "attnlab/train.hpp"

namespace fs = std::filesystem;
using namespace attnlab;
using json = nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kUsage = 2;
constexpr int kRuntime = 3;

constexpr const char* kArtifactVersion = "v1";

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
};

struct Context {
  KeyValueConfig kv;
  SyntheticTaskConfig task;
  ExperimentConfig experiment;
  fs::path dir;  // versioned artifact directory
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "key=value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", opts.overrides, "override a config key (key=value), repeatable");
  cmd->add_option("--out", opts.out, "artifact directory (default $ATTNLAB_OUT or ./attnlab-out)");
}

Context load_context(const CommonOptions& opts) {
  Context ctx;
  if (!opts.config_path.empty()) ctx.kv = KeyValueConfig::from_file(opts.config_path);
  for (const auto& o : opts.overrides) ctx.kv.apply_override(o);
  ctx.kv.require_known(known_config_keys());
  ctx.task = SyntheticTaskConfig::from_config(ctx.kv);
  ctx.experiment = ExperimentConfig::from_config(ctx.kv);
  fs::path root = opts.out;
  if (root.empty()) {
    const char* env = std::getenv("ATTNLAB_OUT");
    root = env != nullptr && *env != '\0' ? fs::path(env) : fs::path("attnlab-out");
  }
  ctx.dir = root / kArtifactVersion;
  fs::create_directories(ctx.dir);
  return ctx;
}

std::string seeded(const std::string& stem, std::uint64_t seed, const std::string& ext) {
  return stem + "-seed" + std::to_string(seed) + ext;
}

void emit(const fs::path& path, const std::string& content) {
  write_text_file(path, content);
  std::cout << "wrote " << path.string() << '\n';
}

void emit_json(const fs::path& path, const json& j) { emit(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------- build-graph

int cmd_build_graph(const CommonOptions& opts, const std::string& input) {
  Context ctx = load_context(opts);
  const auto examples = read_context_jsonl(input);
  const std::string stem = fs::path(input).stem().string();
  std::string jsonl;
  std::ostringstream csv;
  csv << "id,n,density\n";
  for (const auto& ex : examples) {
    const EntityGraph g = build_graph(ex, ctx.experiment.mention_match);
    json j = to_json(g);
    j["id"] = ex.id;
    jsonl += j.dump() + "\n";
    csv << ex.id << ',' << g.n << ',' << format_double(density(g)) << '\n';
  }
  emit(ctx.dir / (stem + "-graphs.jsonl"), jsonl);
  emit(ctx.dir / (stem + "-graphs.csv"), csv.str());
  std::cout << "built " << examples.size() << " graphs\n";
  return kOk;
}

// ------------------------------------------------------------- density-report

int cmd_density_report(const CommonOptions& opts, const std::string& input) {
  Context ctx = load_context(opts);
  std::vector<ContextExample> examples;
  std::string name;
  if (!input.empty()) {
    examples = read_context_jsonl(input);
    name = fs::path(input).stem().string() + "-density";
  } else {
    for (auto& l : generate_synthetic(ctx.task, "test", ctx.task.num_test_examples)) {
      examples.push_back(std::move(l.example));
    }
    name = seeded("density", ctx.task.seed, "");
  }
  std::vector<double> densities;
  std::vector<std::string> ids;
  for (const auto& ex : examples) {
    densities.push_back(density(build_graph(ex, ctx.experiment.mention_match)));
    ids.push_back(ex.id);
  }
  const DensityReport report = quantile_partition(densities, ctx.experiment.quantiles, ids);
  emit_json(ctx.dir / (name + ".json"), to_json(report));
  emit(ctx.dir / (name + ".csv"), to_csv(report));
  return kOk;
}

// ---------------------------------------------------------- equivalence-check

int cmd_equivalence(const CommonOptions& opts) {
  Context ctx = load_context(opts);
  EquivalenceOptions eo;
  eo.instances = ctx.kv.get_count("equivalence_instances", eo.instances);
  eo.seed = ctx.experiment.seed;
  const EquivalenceReport rep = run_equivalence_suite(eo);
  emit_json(ctx.dir / seeded("equivalence", eo.seed, ".json"), to_json(rep));
  std::cout << "equivalence: " << rep.instances << " instances, bitwise mismatches "
            << rep.bitwise_mismatches << ", fusion mismatches " << rep.fusion_mismatches
            << ", max independent deviation " << format_double(rep.max_independent_deviation)
            << (rep.passed() ? " PASS" : " FAIL") << '\n';
  return rep.passed() ? kOk : kCheckFailed;
}

// ------------------------------------------------------------------ gradcheck

int cmd_gradcheck(const CommonOptions& opts) {
  Context ctx = load_context(opts);
  GradientOptions go;
  go.instances = ctx.kv.get_count("gradcheck_instances", go.instances);
  go.eps = ctx.kv.get_double("gradcheck_eps", go.eps);
  go.seed = ctx.experiment.seed;
  const GradientReport rep = run_gradient_suite(go);
  std::ostringstream csv;
  csv << "component,instances,redrawn,max_relative_error,worst_tensor\n";
  for (const auto& c : rep.components) {
    csv << c.component << ',' << c.instances << ',' << c.redrawn << ','
        << format_double(c.max_relative_error) << ',' << c.worst_tensor << '\n';
    std::cout << c.component << ": max relative error " << format_double(c.max_relative_error)
              << " (" << c.worst_tensor << ")\n";
  }
  emit_json(ctx.dir / seeded("gradcheck", go.seed, ".json"), to_json(rep));
  emit(ctx.dir / seeded("gradcheck", go.seed, ".csv"), csv.str());
  std::cout << (rep.passed() ? "gradcheck PASS" : "gradcheck FAIL") << '\n';
  return rep.passed() ? kOk : kCheckFailed;
}

// -------------------------------------------------------------- gen-synthetic

int cmd_gen_synthetic(const CommonOptions& opts) {
  Context ctx = load_context(opts);
  const auto seed = ctx.task.seed;
  const auto train = generate_synthetic(ctx.task, "train", ctx.task.num_examples);
  const auto test = generate_synthetic(ctx.task, "test", ctx.task.num_test_examples);
  json violations = json::array();
  for (const auto* split : {&train, &test}) {
    for (const auto& ex : *split) {
      const std::string why = two_hop_violation(ex, ctx.experiment.mention_match);
      if (!why.empty()) violations.push_back({{"id", ex.example.id}, {"reason", why}});
    }
  }
  write_labeled_jsonl(ctx.dir / seeded("synthetic-train", seed, ".jsonl"), train);
  write_labeled_jsonl(ctx.dir / seeded("synthetic-test", seed, ".jsonl"), test);
  std::cout << "wrote " << (ctx.dir / seeded("synthetic-train", seed, ".jsonl")).string() << '\n'
            << "wrote " << (ctx.dir / seeded("synthetic-test", seed, ".jsonl")).string() << '\n';
  emit_json(ctx.dir / seeded("synthetic", seed, ".json"),
            {{"config", ctx.task.to_json()},
             {"train_examples", train.size()},
             {"test_examples", test.size()},
             {"two_hop_violations", violations}});
  if (!violations.empty()) {
    std::cout << violations.size() << " examples violate the 2-hop property\n";
    return kCheckFailed;
  }
  return kOk;
}

// ---------------------------------------------------------------------- train

std::vector<Variant> parse_variant_list(const std::string& text, Variant fallback) {
  if (text.empty()) return {fallback};
  if (text == "all") {
    return {Variant::graph_attention, Variant::self_attention, Variant::transformer,
            Variant::none};
  }
  std::vector<Variant> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_variant(item));
  return out;
}

struct Splits {
  std::vector<LabeledExample> train, test;
};

Splits load_splits(const Context& ctx, const std::string& train_path,
                   const std::string& test_path) {
  Splits s;
  s.train = train_path.empty()
                ? generate_synthetic(ctx.task, "train", ctx.task.num_examples)
                : read_labeled_jsonl(train_path);
  s.test = test_path.empty() ? generate_synthetic(ctx.task, "test", ctx.task.num_test_examples)
                             : read_labeled_jsonl(test_path);
  return s;
}

void print_checks(const std::vector<CheckResult>& checks) {
  for (const auto& c : checks) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << " (" << c.detail << ")\n";
  }
}

bool all_passed(const std::vector<CheckResult>& checks) {
  for (const auto& c : checks) {
    if (!c.passed) return false;
  }
  return true;
}

int cmd_train(const CommonOptions& opts, const std::string& variants_text,
              const std::string& train_path, const std::string& test_path, bool keep_model) {
  Context ctx = load_context(opts);
  const auto variants = parse_variant_list(variants_text, ctx.experiment.variant);
  const Splits data = load_splits(ctx, train_path, test_path);
  const std::uint64_t seed = ctx.experiment.seed;
  const std::size_t export_traces = ctx.kv.get_count("export_traces", 0);

  std::map<Variant, VariantRun> runs;
  std::ostringstream timing;
  for (Variant v : variants) {
    ExperimentConfig cfg = ctx.experiment;
    cfg.variant = v;
    const auto start = std::chrono::steady_clock::now();
    VariantRun run;
    if (keep_model || (v == Variant::transformer && export_traces > 0)) {
      // Same computation as run_variant, keeping the trained model around.
      TrainedModel trained = train_model(cfg, data.train, &data.test);
      const auto encoded = encode_all(data.test, trained.model.vocab, cfg);
      run.variant = v;
      run.training = std::move(trained.report);
      run.test = evaluate(trained.model, encoded);
      run.bins = accuracy_by_density(encoded, run.test.is_correct, cfg.quantiles);
      if (keep_model) {
        const fs::path p = ctx.dir / seeded("model-" + to_string(v), seed, ".json");
        save_model(p, trained.model);
        std::cout << "wrote " << p.string() << '\n';
      }
      if (v == Variant::transformer && export_traces > 0) {
        std::vector<AttentionTrace> traces;
        for (std::size_t i = 0; i < std::min(export_traces, encoded.size()); ++i) {
          traces.push_back(transformer_trace(encoded[i], model_forward(trained.model, encoded[i])));
        }
        const fs::path p = ctx.dir / seeded("traces-transformer", seed, ".jsonl");
        write_trace_jsonl(p, traces);
        std::cout << "wrote " << p.string() << '\n';
      }
    } else {
      run = run_variant(cfg, data.train, data.test);
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    timing << to_string(v) << ' ' << format_double(std::round(seconds * 1000.0) / 1000.0)
           << "s\n";
    std::cout << to_string(v) << ": test accuracy " << format_double(run.test.accuracy) << " ("
              << run.test.correct << "/" << run.test.total << ")\n";

    json j = to_json(run);
    j["seed"] = seed;
    j["config"] = cfg.to_json();
    emit_json(ctx.dir / seeded("train-" + to_string(v), seed, ".json"), j);
    emit(ctx.dir / seeded("loss-" + to_string(v), seed, ".csv"), loss_curve_csv(run.training));
    emit(ctx.dir / seeded("epochs-" + to_string(v), seed, ".csv"), epoch_csv(run.training));
    runs.emplace(v, std::move(run));
  }
  // Wall-clock varies run to run, so it stays out of the JSON/CSV artifacts.
  emit(ctx.dir / seeded("timing", seed, ".txt"), timing.str());

  if (runs.size() < 2) return kOk;
  const auto checks = comparison_checks(runs, ctx.experiment);
  json accuracies = json::object();
  for (const auto& [v, run] : runs) accuracies[to_string(v)] = run.test.accuracy;
  json check_json = json::array();
  for (const auto& c : checks) check_json.push_back(to_json(c));
  emit_json(ctx.dir / seeded("comparison", seed, ".json"),
            {{"seed", seed},
             {"data_seed", ctx.task.seed},
             {"accuracy", accuracies},
             {"checks", check_json},
             {"passed", all_passed(checks)}});
  emit(ctx.dir / seeded("density-accuracy", seed, ".csv"), density_comparison_csv(runs));
  print_checks(checks);
  return all_passed(checks) ? kOk : kCheckFailed;
}

// --------------------------------------------------------------- eval-density

int cmd_eval_density(const CommonOptions& opts, const std::vector<std::string>& models,
                     const std::string& test_path) {
  Context ctx = load_context(opts);
  std::vector<LabeledExample> test =
      test_path.empty() ? generate_synthetic(ctx.task, "test", ctx.task.num_test_examples)
                        : read_labeled_jsonl(test_path);
  std::map<Variant, VariantRun> runs;
  for (const auto& path : models) {
    const Model model = load_model(path);
    const Variant v = model.config.variant;
    if (runs.count(v)) throw UsageError("two checkpoints for variant " + to_string(v));
    const auto encoded = encode_all(test, model.vocab, model.config);
    VariantRun run;
    run.variant = v;
    run.test = evaluate(model, encoded);
    run.bins = accuracy_by_density(encoded, run.test.is_correct, ctx.experiment.quantiles);
    std::cout << to_string(v) << ": test accuracy " << format_double(run.test.accuracy) << '\n';
    runs.emplace(v, std::move(run));
  }
  json per_variant = json::object();
  for (const auto& [v, run] : runs) {
    json bins = json::array();
    for (const auto& b : run.bins) bins.push_back(to_json(b));
    per_variant[to_string(v)] = {{"test_accuracy", run.test.accuracy}, {"density_bins", bins}};
  }
  std::vector<CheckResult> checks;
  if (runs.count(Variant::graph_attention) && runs.count(Variant::self_attention)) {
    for (auto& c : comparison_checks(runs, ctx.experiment)) {
      if (c.name.rfind("bin_gap", 0) == 0) checks.push_back(std::move(c));
    }
  }
  json check_json = json::array();
  for (const auto& c : checks) check_json.push_back(to_json(c));
  const std::uint64_t seed = ctx.task.seed;
  emit_json(ctx.dir / seeded("eval-density", seed, ".json"),
            {{"data_seed", seed}, {"variants", per_variant}, {"checks", check_json},
             {"passed", all_passed(checks)}});
  emit(ctx.dir / seeded("eval-density", seed, ".csv"), density_comparison_csv(runs));
  print_checks(checks);
  return all_passed(checks) ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------- probe-heads

int cmd_probe_heads(const CommonOptions& opts, const std::string& traces_path) {
  Context ctx = load_context(opts);
  const auto traces = read_trace_jsonl(traces_path);
  const auto direction = parse_score_direction(ctx.kv.get_string("probe_direction", "incoming"));
  const auto rank_by =
      parse_score_normalization(ctx.kv.get_string("probe_rank_by", "column_mean"));
  const auto ranks = rank_heads(traces, direction, rank_by);
  const std::string stem = fs::path(traces_path).stem().string();
  emit_json(ctx.dir / (stem + "-heads.json"), head_report_json(ranks));
  emit(ctx.dir / (stem + "-heads.csv"), head_report_csv(ranks));
  const HeadRank& top = ranks.front();
  std::cout << "top head: layer " << top.layer << " head " << top.head << " score "
            << format_double(rank_by == ScoreNormalization::column_mean ? top.score_colmean
                                                                        : top.score_rawsum)
            << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attnlab: graph attention and self-attention lab"};
  app.require_subcommand(1);

  CommonOptions common;
  std::string input, traces, variants, train_path, test_path;
  std::vector<std::string> models;
  bool save = false;

  auto* build = app.add_subcommand("build-graph", "build entity graphs from context JSONL");
  add_common(build, common);
  build->add_option("--input", input, "context JSONL")->required();

  auto* dens = app.add_subcommand("density-report", "adjacency density quantile report");
  add_common(dens, common);
  dens->add_option("--input", input, "context JSONL (default: synthetic test split)");

  auto* equiv = app.add_subcommand("equivalence-check", "graph vs self-attention degeneracy suite");
  add_common(equiv, common);

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  add_common(grad, common);

  auto* gen = app.add_subcommand("gen-synthetic", "write the synthetic 2-hop dataset");
  add_common(gen, common);

  auto* train = app.add_subcommand("train", "train and evaluate model variants");
  add_common(train, common);
  train->add_option("--variants", variants,
                    "comma-separated variants or 'all' (default: config variant)");
  train->add_option("--train", train_path, "labeled JSONL (default: generated)");
  train->add_option("--test", test_path, "labeled JSONL (default: generated)");
  train->add_flag("--save-model", save, "write a checkpoint per variant");

  auto* evald = app.add_subcommand("eval-density", "per-density-bin accuracy of checkpoints");
  add_common(evald, common);
  evald->add_option("--model", models, "checkpoint JSON, repeatable")->required();
  evald->add_option("--test", test_path, "labeled JSONL (default: generated)");

  auto* probe = app.add_subcommand("probe-heads", "rank attention heads by entity focus");
  add_common(probe, common);
  probe->add_option("--traces", traces, "attention trace JSONL")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*build) return cmd_build_graph(common, input);
    if (*dens) return cmd_density_report(common, input);
    if (*equiv) return cmd_equivalence(common);
    if (*grad) return cmd_gradcheck(common);
    if (*gen) return cmd_gen_synthetic(common);
    if (*train) return cmd_train(common, variants, train_path, test_path, save);
    if (*evald) return cmd_eval_density(common, models, test_path);
    if (*probe) return cmd_probe_heads(common, traces);
  } catch (const ParseError& e) {
    std::cerr << "attnlab: " << e.what() << '\n';
    return kUsage;
  } catch (const UsageError& e) {
    std::cerr << "attnlab: " << e.what() << '\n';
    return kUsage;
  } catch (const ValidationError& e) {
    std::cerr << "attnlab: invalid input: " << e.what() << '\n';
    return kUsage;
  } catch (const TrainingError& e) {
    std::cerr << "attnlab: training diverged at step " << e.step() << ": " << e.what() << '\n';
    return kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "attnlab: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
