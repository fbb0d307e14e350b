#include "attnlab/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "attnlab/errors.hpp"

namespace attnlab {

std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> x, double eps) {
  if (!(eps > 0.0)) throw DomainError("finite_diff_grad: eps must be positive");
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + eps;
    const double up = f(probe);
    probe[i] = saved - eps;
    const double down = f(probe);
    probe[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_grad: non-finite evaluation at coordinate " +
                         std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

double relative_error(std::span<const double> analytic, std::span<const double> numeric,
                      double floor) {
  if (analytic.size() != numeric.size()) throw ShapeError("relative_error: length mismatch");
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double d = analytic[i] - numeric[i];
    diff += d * d;
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nn), floor});
  if (scale == 0.0) return 0.0;
  return std::sqrt(diff) / scale;
}

TensorCheck check_tensor_gradient(const std::string& name, const std::function<double()>& loss,
                                  Matrix& param, const Matrix& analytic, double eps,
                                  double floor) {
  require_same_shape(param, analytic, "check_tensor_gradient");
  auto values = param.values();
  auto f = [&](std::span<const double> x) {
    std::copy(x.begin(), x.end(), values.begin());
    return loss();
  };
  const std::vector<double> original(values.begin(), values.end());
  std::vector<double> numeric;
  try {
    numeric = finite_diff_grad(f, original, eps);
  } catch (...) {
    std::copy(original.begin(), original.end(), values.begin());
    throw;
  }
  std::copy(original.begin(), original.end(), values.begin());

  TensorCheck out{name, relative_error(analytic.values(), numeric, floor), 0.0};
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    out.max_abs_error = std::max(out.max_abs_error, std::abs(analytic.values()[i] - numeric[i]));
  }
  return out;
}

}  // namespace attnlab
