#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "attnlab/train.hpp"

namespace attnlab {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

nlohmann::json to_json(const CheckResult& check);

struct VariantRun {
  Variant variant = Variant::none;
  TrainReport training;
  EvalResult test;
  std::vector<DensityBinAccuracy> bins;
};

nlohmann::json to_json(const VariantRun& run);
// Columns: step,loss
std::string loss_curve_csv(const TrainReport& report);
// Columns: epoch,mean_loss,test_accuracy
std::string epoch_csv(const TrainReport& report);

// Trains and evaluates one variant on a fixed split.
VariantRun run_variant(const ExperimentConfig& config, const std::vector<LabeledExample>& train,
                       const std::vector<LabeledExample>& test);

// Threshold checks over whichever of the four variants are present.
std::vector<CheckResult> comparison_checks(const std::map<Variant, VariantRun>& runs,
                                           const ExperimentConfig& thresholds);

// Columns: quantile,boundary_density,bin_size,<variant>_accuracy...
std::string density_comparison_csv(const std::map<Variant, VariantRun>& runs);

}  // namespace attnlab
