#include "attnlab/reports.hpp"

#include <cmath>
#include <sstream>

#include "attnlab/errors.hpp"
#include "attnlab/text.hpp"

namespace attnlab {

nlohmann::json to_json(const CheckResult& check) {
  return {{"name", check.name}, {"passed", check.passed}, {"detail", check.detail}};
}

nlohmann::json to_json(const VariantRun& run) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : run.training.epochs) {
    nlohmann::json j = {{"epoch", e.epoch}, {"mean_loss", e.mean_loss}};
    j["test_accuracy"] = e.test_accuracy ? nlohmann::json(*e.test_accuracy) : nlohmann::json();
    epochs.push_back(std::move(j));
  }
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& b : run.bins) bins.push_back(to_json(b));
  return {{"variant", to_string(run.variant)},
          {"test_accuracy", run.test.accuracy},
          {"test_correct", run.test.correct},
          {"test_total", run.test.total},
          {"test_mean_loss", run.test.mean_loss},
          {"steps", run.training.step_losses.size()},
          {"epochs", epochs},
          {"density_bins", bins}};
}

std::string loss_curve_csv(const TrainReport& report) {
  std::ostringstream out;
  out << "step,loss\n";
  for (std::size_t i = 0; i < report.step_losses.size(); ++i) {
    out << i + 1 << ',' << format_double(report.step_losses[i]) << '\n';
  }
  return out.str();
}

std::string epoch_csv(const TrainReport& report) {
  std::ostringstream out;
  out << "epoch,mean_loss,test_accuracy\n";
  for (const auto& e : report.epochs) {
    out << e.epoch << ',' << format_double(e.mean_loss) << ','
        << (e.test_accuracy ? format_double(*e.test_accuracy) : std::string()) << '\n';
  }
  return out.str();
}

VariantRun run_variant(const ExperimentConfig& config, const std::vector<LabeledExample>& train,
                       const std::vector<LabeledExample>& test) {
  VariantRun run;
  run.variant = config.variant;
  TrainedModel trained = train_model(config, train, &test);
  run.training = std::move(trained.report);
  const auto encoded = encode_all(test, trained.model.vocab, config);
  run.test = evaluate(trained.model, encoded);
  run.bins = accuracy_by_density(encoded, run.test.is_correct, config.quantiles);
  return run;
}

namespace {

std::string fmt(double x) { return format_double(std::round(x * 1e6) / 1e6); }

}  // namespace

std::vector<CheckResult> comparison_checks(const std::map<Variant, VariantRun>& runs,
                                           const ExperimentConfig& th) {
  std::vector<CheckResult> out;
  auto acc = [&](Variant v) { return runs.at(v).test.accuracy; };
  for (Variant v : {Variant::graph_attention, Variant::self_attention, Variant::transformer}) {
    if (!runs.count(v)) continue;
    out.push_back({to_string(v) + "_accuracy", acc(v) >= th.min_accuracy,
                   fmt(acc(v)) + " >= " + fmt(th.min_accuracy)});
  }
  if (runs.count(Variant::none)) {
    out.push_back({"none_accuracy", acc(Variant::none) <= th.max_baseline_accuracy,
                   fmt(acc(Variant::none)) + " <= " + fmt(th.max_baseline_accuracy)});
  }
  if (runs.count(Variant::graph_attention) && runs.count(Variant::self_attention)) {
    const double gap = std::abs(acc(Variant::graph_attention) - acc(Variant::self_attention));
    out.push_back({"graph_self_gap", gap <= th.max_gap, fmt(gap) + " <= " + fmt(th.max_gap)});
    const auto& ga = runs.at(Variant::graph_attention).bins;
    const auto& sa = runs.at(Variant::self_attention).bins;
    if (ga.size() != sa.size()) throw StateError("density bins differ between variants");
    for (std::size_t k = 0; k < ga.size(); ++k) {
      const std::string name = "bin_gap_q" + format_double(ga[k].quantile);
      if (!ga[k].accuracy || !sa[k].accuracy) {
        out.push_back({name, true, "empty bin"});
        continue;
      }
      const double g = std::abs(*ga[k].accuracy - *sa[k].accuracy);
      out.push_back({name, g <= th.max_bin_gap, fmt(g) + " <= " + fmt(th.max_bin_gap)});
    }
  }
  return out;
}

std::string density_comparison_csv(const std::map<Variant, VariantRun>& runs) {
  if (runs.empty()) throw DomainError("no variant runs to compare");
  std::ostringstream out;
  out << "quantile,boundary_density,bin_size";
  for (const auto& [v, run] : runs) out << ',' << to_string(v) << "_accuracy";
  out << '\n';
  const auto& first = runs.begin()->second.bins;
  for (std::size_t k = 0; k < first.size(); ++k) {
    out << format_double(first[k].quantile) << ',' << format_double(first[k].boundary_density)
        << ',' << first[k].size;
    for (const auto& [v, run] : runs) {
      const auto& a = run.bins.at(k).accuracy;
      out << ',' << (a ? format_double(*a) : std::string());
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace attnlab
