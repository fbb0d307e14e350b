#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "attnlab/matrix.hpp"

namespace attnlab {

// Central differences (f(x+εeᵢ) − f(x−εeᵢ)) / 2ε for every coordinate.
// Throws NumericError if any evaluation is non-finite.
std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> x, double eps);

// ‖a − b‖ / max(‖a‖, ‖b‖, floor). The floor keeps gradients that are zero by
// construction from dividing round-off noise by round-off noise.
double relative_error(std::span<const double> analytic, std::span<const double> numeric,
                      double floor = 1e-10);

struct TensorCheck {
  std::string name;
  double relative_error = 0.0;
  double max_abs_error = 0.0;
};

// Perturbs `param` in place, re-evaluating `loss` each time, then compares
// the finite-difference gradient against `analytic`.
TensorCheck check_tensor_gradient(const std::string& name, const std::function<double()>& loss,
                                  Matrix& param, const Matrix& analytic, double eps,
                                  double floor = 1e-10);

}  // namespace attnlab
