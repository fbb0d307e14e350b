#include "attnlab/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "attnlab/errors.hpp"

namespace attnlab {

namespace {

// c (n×m) += a b with a n×k, b k×m. Rows of a are taken four at a time so
// each row of b is loaded once per block; per-entry summation order is the
// plain p = 0..k-1 order.
void gemm_acc(const double* __restrict a, const double* __restrict b, double* __restrict c,
              std::size_t n, std::size_t k, std::size_t m) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    double* c0 = c + i * m;
    double* c1 = c0 + m;
    double* c2 = c1 + m;
    double* c3 = c2 + m;
    const double* a0 = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double v0 = a0[p], v1 = a0[k + p], v2 = a0[2 * k + p], v3 = a0[3 * k + p];
      if (v0 == 0.0 && v1 == 0.0 && v2 == 0.0 && v3 == 0.0) continue;
      const double* bp = b + p * m;
      for (std::size_t j = 0; j < m; ++j) {
        const double bj = bp[j];
        c0[j] += v0 * bj;
        c1[j] += v1 * bj;
        c2[j] += v2 * bj;
        c3[j] += v3 * bj;
      }
    }
  }
  for (; i < n; ++i) {
    double* ci = c + i * m;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
}

// c (k×m) += aᵀ b with a n×k, b n×m.
void gemm_tn_acc(const double* __restrict a, const double* __restrict b, double* __restrict c,
                 std::size_t n, std::size_t k, std::size_t m) {
  std::size_t r = 0;
  for (; r + 2 <= n; r += 2) {
    const double* a0 = a + r * k;
    const double* a1 = a0 + k;
    const double* b0 = b + r * m;
    const double* b1 = b0 + m;
    for (std::size_t i = 0; i < k; ++i) {
      const double v0 = a0[i], v1 = a1[i];
      if (v0 == 0.0 && v1 == 0.0) continue;
      double* ci = c + i * m;
      for (std::size_t j = 0; j < m; ++j) {
        double x = ci[j];
        x += v0 * b0[j];
        x += v1 * b1[j];
        ci[j] = x;
      }
    }
  }
  for (; r < n; ++r) {
    const double* ar = a + r * k;
    const double* br = b + r * m;
    for (std::size_t i = 0; i < k; ++i) {
      const double av = ar[i];
      if (av == 0.0) continue;
      double* ci = c + i * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += av * br[j];
    }
  }
}

// c (n×m) = a bᵀ with a n×k, b m×k, as row dot products. Partial sums are
// kept in 4-wide vectors (lane p mod 4) and four rows of b share each load of a.
using v4d = double __attribute__((vector_size(32)));

inline v4d load4(const double* p) {
  v4d v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline double reduce4(v4d v) { return (v[0] + v[1]) + (v[2] + v[3]); }

void gemm_nt(const double* __restrict a, const double* __restrict b, double* __restrict c,
             std::size_t n, std::size_t k, std::size_t m) {
  const std::size_t k4 = k - k % 4;
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * m;
    std::size_t j = 0;
    for (; j + 4 <= m; j += 4) {
      const double* b0 = b + j * k;
      const double* b1 = b0 + k;
      const double* b2 = b1 + k;
      const double* b3 = b2 + k;
      v4d s0{}, s1{}, s2{}, s3{};
      for (std::size_t p = 0; p < k4; p += 4) {
        const v4d av = load4(ai + p);
        s0 += av * load4(b0 + p);
        s1 += av * load4(b1 + p);
        s2 += av * load4(b2 + p);
        s3 += av * load4(b3 + p);
      }
      double t0 = reduce4(s0), t1 = reduce4(s1), t2 = reduce4(s2), t3 = reduce4(s3);
      for (std::size_t p = k4; p < k; ++p) {
        t0 += ai[p] * b0[p];
        t1 += ai[p] * b1[p];
        t2 += ai[p] * b2[p];
        t3 += ai[p] * b3[p];
      }
      ci[j] = t0;
      ci[j + 1] = t1;
      ci[j + 2] = t2;
      ci[j + 3] = t3;
    }
    for (; j < m; ++j) {
      const double* bj = b + j * k;
      v4d s0{};
      for (std::size_t p = 0; p < k4; p += 4) s0 += load4(ai + p) * load4(bj + p);
      double t = reduce4(s0);
      for (std::size_t p = k4; p < k; ++p) t += ai[p] * bj[p];
      ci[j] = t;
    }
  }
}

std::string dims(const Matrix& a, const Matrix& b) {
  return a.shape_string() + " and " + b.shape_string();
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  matmul_acc(a, b, out);
  return out;
}

void matmul_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ: " + dims(a, b));
  if (out.rows() != a.rows() || out.cols() != b.cols()) {
    throw ShapeError("matmul: output shape " + out.shape_string());
  }
  gemm_acc(a.values().data(), b.values().data(), out.values().data(), a.rows(), a.cols(),
           b.cols());
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  Matrix out(a.cols(), b.cols());
  matmul_tn_acc(a, b, out);
  return out;
}

void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn: row counts differ: " + dims(a, b));
  if (out.rows() != a.cols() || out.cols() != b.cols()) {
    throw ShapeError("matmul_tn: output shape " + out.shape_string());
  }
  gemm_tn_acc(a.values().data(), b.values().data(), out.values().data(), a.rows(), a.cols(),
              b.cols());
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: column counts differ: " + dims(a, b));
  Matrix out(a.rows(), b.rows());
  gemm_nt(a.values().data(), b.values().data(), out.values().data(), a.rows(), a.cols(),
          b.rows());
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  Matrix out = a;
  out += b;
  return out;
}

Matrix scaled(const Matrix& a, double s) {
  Matrix out = a;
  out *= s;
  return out;
}

Matrix concat_cols(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("concat_cols: row counts differ: " + dims(a, b));
  Matrix out(a.rows(), a.cols() + b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    std::copy(a.row(i).begin(), a.row(i).end(), dst.begin());
    std::copy(b.row(i).begin(), b.row(i).end(), dst.begin() + static_cast<long>(a.cols()));
  }
  return out;
}

Matrix slice_cols(const Matrix& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.cols()) throw ShapeError("slice_cols: range out of bounds");
  Matrix out(a.rows(), end - begin);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto src = a.row(i);
    std::copy(src.begin() + static_cast<long>(begin), src.begin() + static_cast<long>(end),
              out.row(i).begin());
  }
  return out;
}

void add_row_broadcast(Matrix& a, const Matrix& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ShapeError("add_row_broadcast: " + dims(a, row));
  }
  auto r = row.row(0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = a.row(i);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += r[j];
  }
}

Matrix column_sums(const Matrix& a) {
  Matrix out(1, a.cols());
  auto o = out.row(0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) o[j] += r[j];
  }
  return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) worst = std::max(worst, std::abs(av[i] - bv[i]));
  return worst;
}

double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void require_finite(const Matrix& m, const char* what) {
  if (!all_finite(m)) throw NumericError(std::string(what) + " contains non-finite values");
}

std::vector<double> softmax_row(std::span<const double> v) {
  if (v.empty()) throw DomainError("softmax_row: empty input");
  if (!all_finite(v)) throw NumericError("softmax_row: non-finite input");
  const double peak = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - peak);
    total += out[i];
  }
  for (double& x : out) x /= total;
  return out;
}

}  // namespace attnlab
