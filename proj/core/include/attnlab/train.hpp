#pragma once

#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "attnlab/density.hpp"
#include "attnlab/model.hpp"

namespace attnlab {

class Adam {
 public:
  Adam(const ParamList& params, double learning_rate, double beta1, double beta2, double eps);

  // Applies one update with `grads` (same layout as the constructor params).
  void step(const ParamList& grads);
  std::size_t steps() const noexcept { return t_; }

 private:
  ParamList params_;
  std::vector<Matrix> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> test_accuracy;
};

struct TrainReport {
  std::vector<double> step_losses;  // mean batch loss per optimizer step
  std::vector<EpochRecord> epochs;
};

struct EvalResult {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy = 0.0;
  double mean_loss = 0.0;
  std::vector<std::size_t> predictions;
  std::vector<bool> is_correct;
};

struct TrainedModel {
  Model model;
  TrainReport report;
};

std::vector<EncodedExample> encode_all(const std::vector<LabeledExample>& examples,
                                       const Vocabulary& vocab, const ExperimentConfig& config);

// Deterministic given config.seed: init, shuffling and gradient summation order
// are all fixed. Throws TrainingError with the step index on a non-finite loss.
TrainedModel train_model(const ExperimentConfig& config, const std::vector<LabeledExample>& train,
                         const std::vector<LabeledExample>* test = nullptr);

EvalResult evaluate(const Model& model, const std::vector<EncodedExample>& examples);

struct DensityBinAccuracy {
  double quantile = 0.0;
  double boundary_density = 0.0;
  std::size_t size = 0;
  std::size_t correct = 0;
  std::optional<double> accuracy;  // empty bin has no accuracy
};

std::vector<DensityBinAccuracy> accuracy_by_density(const std::vector<EncodedExample>& examples,
                                                    const std::vector<bool>& is_correct,
                                                    const std::vector<double>& quantiles);

nlohmann::json to_json(const DensityBinAccuracy& bin);

}  // namespace attnlab
