// Runs every acceptance criterion and prints one PASS/FAIL line per criterion.
// Usage: attnlab_acceptance [criterion numbers...]   (default: all)

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "attnlab/config.hpp"
#include "attnlab/density.hpp"
#include "attnlab/entity_graph.hpp"
#include "attnlab/fusion.hpp"
#include "attnlab/graph_attention.hpp"
#include "attnlab/head_probe.hpp"
#include "attnlab/ops.hpp"
#include "attnlab/reports.hpp"
#include "attnlab/rng.hpp"
#include "attnlab/suites.hpp"
#include "attnlab/synthetic.hpp"
#include "attnlab/text.hpp"
#include "oracles.hpp"

#ifndef ATTNLAB_CLI_PATH
#define ATTNLAB_CLI_PATH "attnlab"
#endif

using namespace attnlab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

// 1. Fully connected graph attention against self-attention.
Outcome degeneracy() {
  const auto t0 = Clock::now();
  SeededRng root(101);
  std::size_t bitwise = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < 1000; ++i) {
    SeededRng rng = root.split(i);
    const std::size_t n = 1 + rng.below(32);
    const std::size_t d_in = 1 + rng.below(16);
    const std::size_t d_out = i % 4 == 0 ? d_in : 1 + rng.below(16);
    GraphAttentionParams p = GraphAttentionParams::init(d_in, d_out, rng, rng.uniform(0.05, 0.5));
    if (i % 4 == 0) p.proj = Matrix::identity(d_in);
    for (double& v : p.attn_vec.values()) v *= 1.0 + 3.0 * rng.uniform();
    const Matrix h = rng.normal_matrix(n, d_in, 1.0 + 2.0 * rng.uniform());
    const auto self = self_attention_forward(h, p);
    const auto graph = graph_attention_forward(h, Matrix::ones(n, n), p);
    if (!(self.output == graph.output) || !(self.alpha == graph.alpha)) ++bitwise;
    const auto ref = oracle::graph_attention(h, Matrix::ones(n, n), p.proj, p.attn_vec,
                                             p.leaky_slope);
    worst = std::max(worst, max_abs_diff(self.output, ref.output));
    worst = std::max(worst, max_abs_diff(self.alpha, ref.alpha));
  }
  const EquivalenceReport lib = run_equivalence_suite(EquivalenceOptions{});
  const double secs = seconds_since(t0);
  Outcome o;
  o.passed = bitwise == 0 && worst <= 1e-12 && lib.passed() && secs < 30.0;
  o.detail = "1000 instances, bitwise mismatches " + std::to_string(bitwise) +
             ", max deviation vs loop oracle " + fmt(worst) + ", library suite " +
             (lib.passed() ? "ok" : "FAILED") + " (fusion mismatches " +
             std::to_string(lib.fusion_mismatches) + "), " + fmt(secs) + " s < 30 s";
  return o;
}

// 2. Analytic gradients against central differences.
Outcome gradients() {
  const auto t0 = Clock::now();
  const GradientReport r = run_gradient_suite(GradientOptions{});
  const double secs = seconds_since(t0);
  Outcome o;
  o.passed = r.passed() && r.components.size() == 4 && secs < 120.0;
  for (const auto& c : r.components) {
    if (c.instances != 100) o.passed = false;
    o.detail += c.component + " " + fmt(c.max_relative_error) + " (" +
                std::to_string(c.instances) + "), ";
  }
  o.detail += "tol 1e-4, " + fmt(secs) + " s < 120 s";
  return o;
}

// 3. Graph rules, density and nearest-rank quantiles against brute force.
Outcome rule_oracle() {
  const auto t0 = Clock::now();
  std::size_t graph_bad = 0, density_bad = 0, quantile_bad = 0;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const auto ex = oracle::random_context(50000 + i, 1 + i % 12);
    if (!(build_graph(ex).adjacency == oracle::adjacency(ex))) ++graph_bad;
  }
  SeededRng rng(303);
  std::vector<double> pool;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const Matrix a = oracle::random_adjacency(60000 + i, 1 + rng.below(16), rng.uniform());
    const double d = density(a);
    if (d != oracle::density(a)) ++density_bad;
    pool.push_back(d);
  }
  const std::vector<double> q{0.2, 0.4, 0.6, 0.8, 1.0};
  for (std::size_t i = 0; i < 1000; ++i) {
    std::vector<double> sample(1 + rng.below(200));
    for (double& v : sample) v = pool[rng.below(pool.size())];
    const auto report = quantile_partition(sample, q);
    std::size_t covered = 0;
    bool ok = true;
    for (std::size_t k = 0; k < q.size(); ++k) {
      const double hi = oracle::nearest_rank(sample, q[k]);
      ok = ok && report.bins[k].boundary_density == hi;
      const double lo = k == 0 ? -1.0 : report.bins[k - 1].boundary_density;
      for (const auto& id : report.bins[k].example_ids) {
        const double v = sample[std::stoul(id)];
        ok = ok && v > lo && v <= hi;
      }
      covered += report.bins[k].example_ids.size();
    }
    if (!ok || covered != sample.size()) ++quantile_bad;
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.passed = graph_bad == 0 && density_bad == 0 && quantile_bad == 0 && secs < 10.0;
  o.detail = "graph mismatches " + std::to_string(graph_bad) + "/1000, density " +
             std::to_string(density_bad) + "/1000, quantile " + std::to_string(quantile_bad) +
             "/1000, " + fmt(secs) + " s < 10 s";
  return o;
}

std::map<Variant, VariantRun> g_runs;
ExperimentConfig g_thresholds;
bool g_trained = false;
double g_train_seconds = 0.0;

void train_variants() {
  if (g_trained) return;
  g_trained = true;
  KeyValueConfig kv = KeyValueConfig::from_file(fs::path(ATTNLAB_CONFIG_DIR) / "acceptance.conf");
  kv.require_known(known_config_keys());
  const SyntheticTaskConfig task = SyntheticTaskConfig::from_config(kv);
  const ExperimentConfig base = ExperimentConfig::from_config(kv);
  g_thresholds = base;
  const auto t0 = Clock::now();
  const auto train = generate_synthetic(task, "train", task.num_examples);
  const auto test = generate_synthetic(task, "test", task.num_test_examples);
  for (Variant v : {Variant::graph_attention, Variant::self_attention, Variant::transformer,
                    Variant::none}) {
    ExperimentConfig cfg = base;
    cfg.variant = v;
    const auto tv = Clock::now();
    g_runs[v] = run_variant(cfg, train, test);
    std::cout << "  " << to_string(v) << ": accuracy " << g_runs[v].test.accuracy << " ("
              << fmt(seconds_since(tv)) << " s)\n"
              << std::flush;
  }
  g_train_seconds = seconds_since(t0);
}

// 4. Variant comparison on the default task.
Outcome variant_comparison() {
  train_variants();
  Outcome o;
  o.passed = g_train_seconds <= 900.0;
  for (const auto& c : comparison_checks(g_runs, g_thresholds)) {
    if (c.name.rfind("bin_gap", 0) == 0) continue;
    o.passed = o.passed && c.passed;
    o.detail += c.name + " " + c.detail + (c.passed ? "" : " FAILED") + ", ";
  }
  o.detail += "total " + fmt(g_train_seconds) + " s <= 900 s";
  return o;
}

// 5. Per-density-bin gap between graph and self-attention.
Outcome density_bins() {
  train_variants();
  Outcome o;
  o.passed = true;
  const auto& ga = g_runs.at(Variant::graph_attention).bins;
  for (const auto& c : comparison_checks(g_runs, g_thresholds)) {
    if (c.name.rfind("bin_gap", 0) != 0) continue;
    o.passed = o.passed && c.passed;
    o.detail += c.name + " " + c.detail + (c.passed ? "" : " FAILED") + "; ";
  }
  o.detail += "bin sizes";
  for (const auto& b : ga) o.detail += " " + std::to_string(b.size);
  return o;
}

// 6. Planted entity-focused head among 48 decoys.
Outcome planted_head() {
  const auto t0 = Clock::now();
  SeededRng rng(606);
  const std::size_t layers = 7, heads = 7;
  std::size_t recovered = 0;
  for (std::size_t i = 0; i < 50; ++i) {
    const std::size_t pl = rng.below(layers), ph = rng.below(heads);
    const std::size_t length = 6 + rng.below(11);
    const auto traces =
        oracle::planted_traces(rng.next_u64(), 20, layers, heads, length, pl, ph, 0.9);
    const auto ranks = rank_heads(traces);
    if (ranks.front().layer == pl && ranks.front().head == ph) ++recovered;
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.passed = recovered == 50 && secs < 5.0;
  o.detail = "recovered " + std::to_string(recovered) + "/50 with " +
             std::to_string(layers * heads - 1) + " decoys, " + fmt(secs) + " s < 5 s";
  return o;
}

// 7. Exact zeros off the adjacency and unit row sums.
Outcome masking() {
  SeededRng root(707);
  std::size_t nonzero = 0, entries = 0;
  double worst_row = 0.0;
  const auto check = [&](const Matrix& alpha, const Matrix& adj) {
    for (std::size_t i = 0; i < alpha.rows(); ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < alpha.cols(); ++j) {
        if (adj(i, j) == 0.0) {
          ++entries;
          if (alpha(i, j) != 0.0) ++nonzero;
        }
        total += alpha(i, j);
      }
      worst_row = std::max(worst_row, std::abs(total - 1.0));
    }
  };
  for (std::size_t i = 0; i < 1000; ++i) {
    SeededRng rng = root.split(i);
    const std::size_t n = 1 + rng.below(32);
    const Matrix adj = oracle::random_adjacency(rng.next_u64(), n, rng.uniform());
    const auto p = GraphAttentionParams::init(8, 1 + rng.below(16), rng);
    check(graph_attention_forward(rng.normal_matrix(n, 8, 4.0), adj, p).alpha, adj);
  }
  // Same property through the fusion block on rule-built graphs.
  for (std::uint64_t i = 0; i < 200; ++i) {
    SeededRng rng = root.split("fusion").split(i);
    const auto ex = oracle::random_context(70000 + i, 1 + i % 12);
    const Matrix adj = build_graph(ex).adjacency;
    const auto a = SpanAssignment::from_example(ex);
    const auto p = FusionParams::init(4, 6, 2, rng);
    const auto r = fusion_block_forward(rng.normal_matrix(ex.tokens.size(), 4, 1.0), adj, a, p,
                                        AttentionMode::graph);
    for (const auto& alpha : r.alpha) check(alpha, adj);
  }
  Outcome o;
  o.passed = nonzero == 0 && worst_row <= 1e-12;
  o.detail = std::to_string(nonzero) + " non-zero of " + std::to_string(entries) +
             " masked entries, max |row sum - 1| " + fmt(worst_row);
  return o;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + ATTNLAB_CLI_PATH + "\" " + args + " > /dev/null";
  return std::system(cmd.c_str());
}

std::map<std::string, std::string> artifacts(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension().string();
    if (ext != ".json" && ext != ".csv" && ext != ".jsonl") continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[fs::relative(e.path(), dir).string()] =
        std::string(std::istreambuf_iterator<char>(in), {});
  }
  return out;
}

// 8. Two CLI suite runs give byte-identical artifacts.
Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "attnlab-determinism";
  fs::remove_all(root);
  const std::string conf =
      "--config \"" + (fs::path(ATTNLAB_CONFIG_DIR) / "smoke.conf").string() + "\"";
  Outcome o;
  std::vector<std::map<std::string, std::string>> runs;
  for (const char* name : {"run1", "run2"}) {
    const fs::path out = root / name;
    const std::string base = conf + " --out \"" + out.string() + "\"";
    const fs::path v1 = out / "v1";
    const std::vector<std::string> steps = {
        "gen-synthetic " + base,
        "build-graph " + base + " --input \"" + (v1 / "synthetic-test-seed20201.jsonl").string() +
            "\"",
        "density-report " + base,
        "equivalence-check " + base,
        "gradcheck " + base,
        "train " + base + " --variants all --save-model",
        "eval-density " + base + " --model \"" + (v1 / "model-graph_attention-seed7.json").string() +
            "\" --model \"" + (v1 / "model-self_attention-seed7.json").string() + "\"",
        "probe-heads " + base + " --traces \"" +
            (v1 / "traces-transformer-seed7.jsonl").string() + "\""};
    for (const auto& s : steps) {
      const int rc = run_cli(s);
      if (rc != 0) {
        o.detail = std::string(name) + ": '" + s.substr(0, s.find(' ')) + "' exited " +
                   std::to_string(rc);
        return o;
      }
    }
    runs.push_back(artifacts(out));
  }
  std::size_t differing = 0;
  std::string first_diff;
  std::set<std::string> names;
  for (const auto& r : runs) {
    for (const auto& [k, v] : r) names.insert(k);
  }
  for (const auto& n : names) {
    const auto a = runs[0].find(n), b = runs[1].find(n);
    if (a == runs[0].end() || b == runs[1].end() || a->second != b->second) {
      ++differing;
      if (first_diff.empty()) first_diff = n;
    }
  }
  o.passed = differing == 0 && names.size() >= 10;
  o.detail = std::to_string(names.size()) + " JSON/CSV artifacts compared, " +
             std::to_string(differing) + " differ" +
             (first_diff.empty() ? "" : " (first: " + first_diff + ")");
  if (o.passed) fs::remove_all(root);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"degeneracy", degeneracy},
      {"gradients", gradients},
      {"rule oracle", rule_oracle},
      {"variant comparison", variant_comparison},
      {"density bins", density_bins},
      {"planted head", planted_head},
      {"exact-zero masking", masking},
      {"determinism", determinism}};
  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoul(argv[i]));

  std::size_t failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected.empty() && !selected.count(i + 1)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.passed = false;
      o.detail = std::string("exception: ") + e.what();
    }
    if (!o.passed) ++failed;
    std::cout << (o.passed ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first
              << ": " << o.detail << '\n'
              << std::flush;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed")
            << '\n';
  return failed == 0 ? 0 : 1;
}
