#include "attnlab/density.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "attnlab/errors.hpp"
#include "attnlab/text.hpp"

namespace attnlab {

std::size_t nearest_rank_index(double quantile, std::size_t n) {
  if (n == 0) throw DomainError("nearest_rank_index: empty input");
  // Round q·n before ceil so 0.6·5 = 3.0000000000000004 still maps to rank 3.
  const double scaled = std::round(quantile * static_cast<double>(n) * 1e9) / 1e9;
  auto rank = static_cast<std::size_t>(std::ceil(scaled));
  rank = std::clamp<std::size_t>(rank, 1, n);
  return rank - 1;
}

DensityReport quantile_partition(std::span<const double> densities,
                                 std::span<const double> quantiles,
                                 std::span<const std::string> ids) {
  if (densities.empty()) throw DomainError("quantile_partition: no densities");
  if (quantiles.empty()) throw DomainError("quantile_partition: no quantiles");
  if (!ids.empty() && ids.size() != densities.size()) {
    throw ShapeError("quantile_partition: ids and densities differ in length");
  }
  for (std::size_t k = 0; k < quantiles.size(); ++k) {
    const double q = quantiles[k];
    if (!(q > 0.0 && q <= 1.0)) throw DomainError("quantile outside (0, 1]");
    if (k > 0 && !(q > quantiles[k - 1])) throw DomainError("quantiles must be strictly increasing");
  }

  std::vector<double> sorted(densities.begin(), densities.end());
  std::sort(sorted.begin(), sorted.end());

  DensityReport report;
  report.count = densities.size();
  for (double q : quantiles) {
    report.bins.push_back({q, sorted[nearest_rank_index(q, sorted.size())], {}});
  }
  if (quantiles.back() < 1.0) report.bins.push_back({1.0, sorted.back(), {}});

  double total = 0.0;
  report.bin_of.resize(densities.size());
  for (std::size_t i = 0; i < densities.size(); ++i) {
    const double d = densities[i];
    total += d;
    std::size_t k = 0;
    while (k + 1 < report.bins.size() && d > report.bins[k].boundary_density) ++k;
    report.bin_of[i] = k;
    report.bins[k].example_ids.push_back(ids.empty() ? std::to_string(i) : ids[i]);
  }
  report.mean = total / static_cast<double>(densities.size());
  return report;
}

std::vector<double> parse_quantiles(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(' ') == std::string::npos) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw UsageError("bad quantile '" + item + "'");
    }
  }
  return out;
}

nlohmann::json to_json(const DensityReport& report) {
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& b : report.bins) {
    bins.push_back({{"quantile", b.quantile},
                    {"boundary_density", b.boundary_density},
                    {"bin_size", b.example_ids.size()},
                    {"example_ids", b.example_ids}});
  }
  return {{"count", report.count}, {"mean_density", report.mean}, {"bins", bins}};
}

std::string to_csv(const DensityReport& report) {
  std::string out = "quantile,boundary_density,bin_size\n";
  for (const auto& b : report.bins) {
    out += format_double(b.quantile) + "," + format_double(b.boundary_density) + "," +
           std::to_string(b.example_ids.size()) + "\n";
  }
  return out;
}

}  // namespace attnlab
