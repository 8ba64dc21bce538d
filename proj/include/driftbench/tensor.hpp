#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "driftbench/errors.hpp"
#include "driftbench/util.hpp"

namespace driftbench {

// Dense row-major 64-bit matrix. Kernels accumulate each output element in a
// fixed sequential order, so results are bitwise identical regardless of the
// worker count.
struct Tensor2 {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  Tensor2() = default;
  Tensor2(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}

  double& at(std::size_t i, std::size_t j) { return v[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
  double* row(std::size_t i) { return v.data() + i * cols; }
  const double* row(std::size_t i) const { return v.data() + i * cols; }
  void zero() { std::fill(v.begin(), v.end(), 0.0); }

  bool operator==(const Tensor2&) const = default;
};

inline bool all_finite(const Tensor2& t) {
  for (double x : t.v)
    if (!std::isfinite(x)) return false;
  return true;
}

// out = a * b
inline void matmul(const Tensor2& a, const Tensor2& b, Tensor2& out) {
  if (a.cols != b.rows) throw SpecError("matmul: inner dimensions disagree");
  out = Tensor2(a.rows, b.cols);
  parallel_for(
      a.rows,
      [&](std::size_t i0, std::size_t i1) {
        for (std::size_t i = i0; i < i1; ++i) {
          double* out_row = out.row(i);
          const double* a_row = a.row(i);
          for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a_row[k];
            if (aik == 0.0) continue;
            const double* b_row = b.row(k);
            for (std::size_t j = 0; j < b.cols; ++j) out_row[j] += aik * b_row[j];
          }
        }
      },
      8);
}

// out = a^T * b  (a: n x r, b: n x c -> out: r x c)
inline void matmul_tn(const Tensor2& a, const Tensor2& b, Tensor2& out) {
  if (a.rows != b.rows) throw SpecError("matmul_tn: row counts disagree");
  out = Tensor2(a.cols, b.cols);
  parallel_for(
      a.cols,
      [&](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r) {
          double* out_row = out.row(r);
          for (std::size_t i = 0; i < a.rows; ++i) {
            const double air = a.at(i, r);
            if (air == 0.0) continue;
            const double* b_row = b.row(i);
            for (std::size_t j = 0; j < b.cols; ++j) out_row[j] += air * b_row[j];
          }
        }
      },
      8);
}

// out = a * b^T  (a: n x k, b: m x k -> out: n x m)
inline void matmul_nt(const Tensor2& a, const Tensor2& b, Tensor2& out) {
  if (a.cols != b.cols) throw SpecError("matmul_nt: column counts disagree");
  out = Tensor2(a.rows, b.rows);
  parallel_for(
      a.rows,
      [&](std::size_t i0, std::size_t i1) {
        for (std::size_t i = i0; i < i1; ++i) {
          const double* a_row = a.row(i);
          double* out_row = out.row(i);
          for (std::size_t j = 0; j < b.rows; ++j) {
            const double* b_row = b.row(j);
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) acc += a_row[k] * b_row[k];
            out_row[j] = acc;
          }
        }
      },
      8);
}

}  // namespace driftbench
