#pragma once

#include <span>
#include <vector>

#include "attnlab/matrix.hpp"

namespace attnlab {

Matrix matmul(const Matrix& a, const Matrix& b);
// aᵀ · b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a · bᵀ
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// out += a · b
void matmul_acc(const Matrix& a, const Matrix& b, Matrix& out);
// out += aᵀ · b
void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out);

Matrix transpose(const Matrix& a);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix add(const Matrix& a, const Matrix& b);
Matrix scaled(const Matrix& a, double s);

// [a | b] column-wise; rows must agree.
Matrix concat_cols(const Matrix& a, const Matrix& b);
Matrix slice_cols(const Matrix& a, std::size_t begin, std::size_t end);
void add_row_broadcast(Matrix& a, const Matrix& row);
// Column sums as a 1 × cols matrix.
Matrix column_sums(const Matrix& a);

double max_abs_diff(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& a);
bool all_finite(std::span<const double> v);
inline bool all_finite(const Matrix& m) { return all_finite(m.values()); }
// Throws NumericError naming `what` on NaN/Inf.
void require_finite(const Matrix& m, const char* what);

// Max-subtracted softmax. Throws DomainError on empty input, NumericError on non-finite.
std::vector<double> softmax_row(std::span<const double> v);

inline double relu(double x) noexcept { return x > 0.0 ? x : 0.0; }
inline double leaky_relu(double x, double slope) noexcept { return x >= 0.0 ? x : slope * x; }

}  // namespace attnlab
