#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "attnlab/density.hpp"
#include "attnlab/entity_graph.hpp"
#include "attnlab/errors.hpp"
#include "attnlab/model.hpp"
#include "attnlab/reports.hpp"
#include "attnlab/synthetic.hpp"
#include "attnlab/train.hpp"
#include "oracles.hpp"

using namespace attnlab;

namespace {

SyntheticTaskConfig small_task(std::size_t n = 60) {
  SyntheticTaskConfig t;
  t.num_examples = n;
  t.num_test_examples = n / 2;
  return t;
}

ExperimentConfig small_model(Variant v) {
  ExperimentConfig c;
  c.variant = v;
  c.hidden_dim = 8;
  c.num_heads = 2;
  c.ffn_dim = 12;
  c.epochs = 2;
  c.batch_size = 8;
  c.learning_rate = 1e-2;
  return c;
}

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Synthetic, MinimalInstanceIsAPath) {
  SyntheticTaskConfig t;
  t.sentences_per_context = 2;
  t.sentence_jitter = 0;
  t.distractor_count = 0;
  for (const auto& ex : generate_synthetic(t, "train", 20)) {
    const auto g = build_graph(ex.example);
    std::set<std::string> entities(g.mentions.begin(), g.mentions.end());
    EXPECT_EQ(entities.size(), 3u);
    const auto dist = oracle::entity_distances(ex);
    EXPECT_EQ(dist[ex.answer_node], 2);
    EXPECT_EQ(two_hop_violation(ex), "");
  }
}

TEST(Synthetic, BfsOracleOnEveryExample) {
  SyntheticTaskConfig t;
  for (const auto* split : {"train", "test"}) {
    for (const auto& ex : generate_synthetic(t, split, 500)) {
      ASSERT_NO_THROW(validate(ex.example));
      const auto dist = oracle::entity_distances(ex);
      ASSERT_EQ(dist[ex.answer_node], 2) << ex.example.id;
      const std::string answer = normalize_mention(ex.example.entity_spans[ex.answer_node].mention);
      for (std::size_t i = 0; i < dist.size(); ++i) {
        if (dist[i] == 2) {
          EXPECT_EQ(normalize_mention(ex.example.entity_spans[i].mention), answer) << ex.example.id;
        }
      }
      EXPECT_EQ(two_hop_violation(ex), "");
    }
  }
}

TEST(Synthetic, DeterministicAndSplitsDiffer) {
  const auto t = small_task();
  const auto dir = temp_dir("attnlab-synth-test");
  write_labeled_jsonl(dir / "a.jsonl", generate_synthetic(t, "train", 40));
  write_labeled_jsonl(dir / "b.jsonl", generate_synthetic(t, "train", 40));
  const auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  EXPECT_EQ(slurp(dir / "a.jsonl"), slurp(dir / "b.jsonl"));
  EXPECT_EQ(read_labeled_jsonl(dir / "a.jsonl"), generate_synthetic(t, "train", 40));
  EXPECT_NE(generate_synthetic(t, "train", 5), generate_synthetic(t, "test", 5));
  std::filesystem::remove_all(dir);
}

TEST(Synthetic, InfeasiblePoolThrows) {
  SyntheticTaskConfig t;
  t.num_entities_pool = 5;
  EXPECT_THROW(generate_synthetic(t, "train", 3), GenerationError);
}

TEST(Synthetic, ViolationDetected) {
  auto ex = generate_synthetic(SyntheticTaskConfig{}, "train", 1)[0];
  ex.answer_node = ex.query_node;
  EXPECT_NE(two_hop_violation(ex), "");
}

TEST(Training, AllOnesGraphAttentionIsStepIdenticalToSelfAttention) {
  const auto data = generate_synthetic(small_task(), "train", 60);
  auto ga = small_model(Variant::graph_attention);
  ga.adjacency_override = AdjacencyOverride::all_ones;
  const auto sa = small_model(Variant::self_attention);
  const auto a = train_model(ga, data);
  const auto b = train_model(sa, data);
  ASSERT_EQ(a.report.step_losses.size(), b.report.step_losses.size());
  for (std::size_t i = 0; i < a.report.step_losses.size(); ++i) {
    EXPECT_EQ(a.report.step_losses[i], b.report.step_losses[i]) << "step " << i;
  }
  // Without the override the masked run genuinely differs.
  const auto c = train_model(small_model(Variant::graph_attention), data);
  EXPECT_NE(c.report.step_losses.back(), b.report.step_losses.back());
}

TEST(Training, DeterministicGivenSeed) {
  const auto data = generate_synthetic(small_task(), "train", 40);
  for (auto v : {Variant::transformer, Variant::none}) {
    const auto a = train_model(small_model(v), data);
    const auto b = train_model(small_model(v), data);
    EXPECT_EQ(a.report.step_losses, b.report.step_losses);
  }
}

TEST(Training, DivergenceCarriesStepIndex) {
  const auto data = generate_synthetic(small_task(), "train", 40);
  auto cfg = small_model(Variant::graph_attention);
  cfg.learning_rate = 1e300;
  try {
    train_model(cfg, data);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_GE(e.step(), 1u);
  }
}

TEST(Training, LossDecreasesOnSmallRun) {
  const auto data = generate_synthetic(small_task(), "train", 60);
  auto cfg = small_model(Variant::graph_attention);
  cfg.epochs = 6;
  const auto r = train_model(cfg, data);
  EXPECT_LT(r.report.epochs.back().mean_loss, r.report.epochs.front().mean_loss);
}

TEST(Evaluation, PerBinAccuracyRecombines) {
  const auto t = small_task(80);
  const auto train = generate_synthetic(t, "train", 80);
  const auto test = generate_synthetic(t, "test", 60);
  const auto trained = train_model(small_model(Variant::graph_attention), train);
  const auto enc = encode_all(test, trained.model.vocab, trained.model.config);
  const auto eval = evaluate(trained.model, enc);
  const auto bins = accuracy_by_density(enc, eval.is_correct, {0.2, 0.4, 0.6, 0.8, 1.0});
  double weighted = 0.0;
  std::size_t total = 0;
  for (const auto& b : bins) {
    total += b.size;
    if (b.accuracy) {
      weighted += *b.accuracy * static_cast<double>(b.size);
    } else {
      EXPECT_EQ(b.size, 0u);
    }
  }
  EXPECT_EQ(total, enc.size());
  EXPECT_NEAR(weighted / static_cast<double>(total), eval.accuracy, 1e-12);
}

TEST(Evaluation, IdenticalDensitiesFillOneBin) {
  SyntheticTaskConfig t;
  t.sentences_per_context = 2;
  t.sentence_jitter = 0;
  t.distractor_count = 0;
  const auto data = generate_synthetic(t, "train", 30);
  const auto trained = train_model(small_model(Variant::none), data);
  const auto enc = encode_all(data, trained.model.vocab, trained.model.config);
  const auto eval = evaluate(trained.model, enc);
  const auto bins = accuracy_by_density(enc, eval.is_correct, {0.2, 0.4, 0.6, 0.8, 1.0});
  EXPECT_EQ(bins[0].size, 30u);
  for (std::size_t k = 1; k < bins.size(); ++k) {
    EXPECT_EQ(bins[k].size, 0u);
    EXPECT_FALSE(bins[k].accuracy.has_value());
    EXPECT_TRUE(to_json(bins[k])["accuracy"].is_null());
  }
}

TEST(Evaluation, CheckpointRoundTripKeepsPredictions) {
  const auto data = generate_synthetic(small_task(), "train", 40);
  for (auto v : {Variant::graph_attention, Variant::transformer}) {
    auto trained = train_model(small_model(v), data);
    const auto dir = temp_dir("attnlab-ckpt-test");
    save_model(dir / "m.json", trained.model);
    const Model loaded = load_model(dir / "m.json");
    const auto enc = encode_all(data, loaded.vocab, loaded.config);
    const auto a = evaluate(trained.model, enc), b = evaluate(loaded, enc);
    EXPECT_EQ(a.predictions, b.predictions);
    EXPECT_EQ(a.mean_loss, b.mean_loss);
    std::filesystem::remove_all(dir);
  }
}

TEST(Evaluation, TransformerTraceIsRowStochastic) {
  const auto data = generate_synthetic(small_task(), "train", 10);
  const auto trained = train_model(small_model(Variant::transformer), data);
  const auto enc = encode_all(data, trained.model.vocab, trained.model.config);
  const auto pass = model_forward(trained.model, enc[0]);
  const auto trace = transformer_trace(enc[0], pass);
  EXPECT_NO_THROW(validate(trace, 1e-12));
  EXPECT_EQ(trace.length(), data[0].example.tokens.size());
  const auto ga = train_model(small_model(Variant::graph_attention), data);
  EXPECT_THROW(transformer_trace(enc[0], model_forward(ga.model, enc[0])), DomainError);
}

TEST(Reports, ComparisonChecksAndCsv) {
  ExperimentConfig thresholds;
  std::map<Variant, VariantRun> runs;
  const auto make = [](Variant v, double acc, std::vector<std::optional<double>> bins) {
    VariantRun r;
    r.variant = v;
    r.test.accuracy = acc;
    for (std::size_t k = 0; k < bins.size(); ++k) {
      DensityBinAccuracy b;
      b.quantile = 0.5 * static_cast<double>(k + 1);
      b.size = bins[k] ? 10 : 0;
      b.accuracy = bins[k];
      r.bins.push_back(b);
    }
    return r;
  };
  runs[Variant::graph_attention] = make(Variant::graph_attention, 0.95, {0.9, std::nullopt});
  runs[Variant::self_attention] = make(Variant::self_attention, 0.93, {0.8, std::nullopt});
  runs[Variant::none] = make(Variant::none, 0.3, {0.3, std::nullopt});
  const auto checks = comparison_checks(runs, thresholds);
  std::map<std::string, bool> by_name;
  for (const auto& c : checks) by_name[c.name] = c.passed;
  EXPECT_TRUE(by_name.at("graph_self_gap"));
  EXPECT_TRUE(by_name.at("none_accuracy"));
  EXPECT_FALSE(by_name.at("bin_gap_q0.5"));
  EXPECT_TRUE(by_name.at("bin_gap_q1"));
  const auto csv = density_comparison_csv(runs);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "quantile,boundary_density,bin_size,graph_attention_accuracy,self_attention_accuracy,"
            "none_accuracy");
}
