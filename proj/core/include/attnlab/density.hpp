#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace attnlab {

struct DensityBin {
  double quantile = 0.0;
  // Nearest-rank order statistic of the sorted densities at `quantile`.
  double boundary_density = 0.0;
  std::vector<std::string> example_ids;
};

struct DensityReport {
  std::vector<DensityBin> bins;
  double mean = 0.0;
  std::size_t count = 0;
  // Bin index of every input density, in input order.
  std::vector<std::size_t> bin_of;
};

// Bin k holds densities in (boundary[k-1], boundary[k]]; the first bin is
// closed below. When the last quantile is below 1 an extra bin with quantile
// 1.0 collects the remainder, so the bins always partition the input.
// `ids` may be empty, in which case input indices are used as ids.
DensityReport quantile_partition(std::span<const double> densities,
                                 std::span<const double> quantiles,
                                 std::span<const std::string> ids = {});

// Nearest-rank index ceil(q·n) − 1 into a sorted array of length n.
std::size_t nearest_rank_index(double quantile, std::size_t n);

std::vector<double> parse_quantiles(const std::string& csv);

nlohmann::json to_json(const DensityReport& report);
// Columns: quantile,boundary_density,bin_size
std::string to_csv(const DensityReport& report);

}  // namespace attnlab
