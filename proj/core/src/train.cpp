#include "attnlab/train.hpp"

#include <cmath>
#include <numeric>
#include <span>

#include "attnlab/errors.hpp"
#include "attnlab/ops.hpp"

namespace attnlab {

Adam::Adam(const ParamList& params, double learning_rate, double beta1, double beta2, double eps)
    : params_(params), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.value->rows(), p.value->cols());
    v_.emplace_back(p.value->rows(), p.value->cols());
  }
}

void Adam::step(const ParamList& grads) {
  if (grads.size() != params_.size()) {
    throw ShapeError("optimizer got " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params_.size()) + " parameters");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    require_same_shape(*params_[i].value, *grads[i].value, params_[i].name.c_str());
    auto w = params_[i].value->values();
    auto g = grads[i].value->values();
    auto m = m_[i].values();
    auto v = v_[i].values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      w[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

std::vector<EncodedExample> encode_all(const std::vector<LabeledExample>& examples,
                                       const Vocabulary& vocab, const ExperimentConfig& config) {
  std::vector<EncodedExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(encode_example(ex, vocab, config));
  return out;
}

TrainedModel train_model(const ExperimentConfig& config, const std::vector<LabeledExample>& train,
                         const std::vector<LabeledExample>* test) {
  config.validate();
  if (train.empty()) throw ValidationError("training set is empty");
  TrainedModel out;
  Model& model = out.model;
  model.config = config;
  model.vocab = Vocabulary::build(train);
  SeededRng root(config.seed);
  SeededRng init_rng = root.split("init");
  model.params = ModelParams::init(config, model.vocab.size(), init_rng);

  const auto encoded = encode_all(train, model.vocab, config);
  std::vector<EncodedExample> encoded_test;
  if (test != nullptr && config.eval_each_epoch) encoded_test = encode_all(*test, model.vocab, config);

  ParamList params = model.params.parameters(config.variant);
  Adam adam(params, config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps);
  std::vector<std::size_t> order(encoded.size());

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    SeededRng shuffle_rng = root.split("shuffle").split(static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      ModelParams grads = ModelParams::zeros_like(model.params);
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = encoded[order[i]];
        ForwardPass fp;
        try {
          fp = model_forward(model, ex);
        } catch (const NumericError& e) {
          throw TrainingError(adam.steps(), e.what());
        }
        if (!std::isfinite(fp.loss)) {
          throw TrainingError(adam.steps(), "non-finite loss on example " + ex.id);
        }
        batch_loss += fp.loss;
        model_backward(model, ex, fp, grads);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      ParamList g = grads.parameters(config.variant);
      for (auto& p : g) {
        *p.value *= inv;
        if (!all_finite(*p.value)) {
          throw TrainingError(adam.steps(), "non-finite gradient for " + p.name);
        }
      }
      adam.step(g);
      out.report.step_losses.push_back(batch_loss * inv);
      epoch_loss += batch_loss;
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.mean_loss = epoch_loss / static_cast<double>(encoded.size());
    if (!encoded_test.empty()) rec.test_accuracy = evaluate(model, encoded_test).accuracy;
    out.report.epochs.push_back(rec);
  }
  return out;
}

EvalResult evaluate(const Model& model, const std::vector<EncodedExample>& examples) {
  EvalResult r;
  r.total = examples.size();
  double loss = 0.0;
  for (const auto& ex : examples) {
    ForwardPass fp = model_forward(model, ex);
    const bool ok = fp.prediction == ex.answer;
    r.correct += ok ? 1 : 0;
    r.predictions.push_back(fp.prediction);
    r.is_correct.push_back(ok);
    loss += fp.loss;
  }
  if (r.total > 0) {
    r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
    r.mean_loss = loss / static_cast<double>(r.total);
  }
  return r;
}

std::vector<DensityBinAccuracy> accuracy_by_density(const std::vector<EncodedExample>& examples,
                                                    const std::vector<bool>& is_correct,
                                                    const std::vector<double>& quantiles) {
  if (examples.size() != is_correct.size()) {
    throw ShapeError("accuracy_by_density: " + std::to_string(examples.size()) + " examples but " +
                     std::to_string(is_correct.size()) + " outcomes");
  }
  std::vector<double> densities;
  for (const auto& ex : examples) densities.push_back(ex.density);
  const DensityReport part = quantile_partition(densities, quantiles);
  std::vector<DensityBinAccuracy> out;
  for (const auto& bin : part.bins) {
    DensityBinAccuracy b;
    b.quantile = bin.quantile;
    b.boundary_density = bin.boundary_density;
    out.push_back(b);
  }
  for (std::size_t i = 0; i < examples.size(); ++i) {
    auto& b = out.at(part.bin_of[i]);
    ++b.size;
    b.correct += is_correct[i] ? 1 : 0;
  }
  for (auto& b : out) {
    if (b.size > 0) b.accuracy = static_cast<double>(b.correct) / static_cast<double>(b.size);
  }
  return out;
}

nlohmann::json to_json(const DensityBinAccuracy& bin) {
  nlohmann::json j = {{"quantile", bin.quantile},
                      {"boundary_density", bin.boundary_density},
                      {"bin_size", bin.size},
                      {"correct", bin.correct}};
  j["accuracy"] = bin.accuracy ? nlohmann::json(*bin.accuracy) : nlohmann::json(nullptr);
  return j;
}

}  // namespace attnlab
