#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace attnlab {

struct EquivalenceOptions {
  std::size_t instances = 1000;
  std::uint64_t seed = 1;
  std::size_t max_nodes = 32;
  std::size_t max_dim = 16;
  double tolerance = 1e-12;
};

struct EquivalenceReport {
  std::size_t instances = 0;
  std::size_t bitwise_mismatches = 0;  // self vs graph with all-ones, same code path
  std::size_t fusion_mismatches = 0;   // same, lifted through the fusion block
  std::size_t fusion_instances = 0;
  double max_independent_deviation = 0.0;  // vs dense_additive_attention
  double tolerance = 1e-12;

  bool passed() const noexcept {
    return bitwise_mismatches == 0 && fusion_mismatches == 0 &&
           max_independent_deviation <= tolerance;
  }
};

EquivalenceReport run_equivalence_suite(const EquivalenceOptions& options);
nlohmann::json to_json(const EquivalenceReport& report);

struct GradientOptions {
  std::size_t instances = 100;
  std::uint64_t seed = 2;
  double eps = 1e-6;
  double tolerance = 1e-4;
  // Instances with a ReLU/LeakyReLU input or a max-pool gap closer than this
  // to a kink are redrawn, so finite differences never straddle one.
  double kink_margin = 1e-4;
  double norm_floor = 1e-3;
};

struct ComponentGradients {
  std::string component;
  std::size_t instances = 0;
  std::size_t redrawn = 0;
  double max_relative_error = 0.0;
  std::string worst_tensor;
};

struct GradientReport {
  std::vector<ComponentGradients> components;
  double tolerance = 1e-4;

  bool passed() const noexcept {
    for (const auto& c : components) {
      if (!(c.max_relative_error <= tolerance)) return false;
    }
    return true;
  }
};

// Components: graph_attention, graph2doc, fusion_block, transformer.
GradientReport run_gradient_suite(const GradientOptions& options);
nlohmann::json to_json(const GradientReport& report);

}  // namespace attnlab
