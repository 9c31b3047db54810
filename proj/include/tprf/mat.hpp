#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

namespace tprf {

// Dense row-major matrix of doubles. Model math runs in 64-bit; the
// float32 representation only appears at the storage boundaries
// (embedding stores, checkpoints).
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}
  Mat(int r, int c, std::vector<double> values) : rows(r), cols(c), a(std::move(values)) {
    assert(a.size() == static_cast<size_t>(r) * c);
  }

  double& at(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }

  double* row(int r) { return a.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return a.data() + static_cast<size_t>(r) * cols; }

  size_t size() const { return a.size(); }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (double v : a)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

// C = A * B
inline Mat matmul(const Mat& A, const Mat& B) {
  assert(A.cols == B.rows);
  Mat C(A.rows, B.cols);
  for (int i = 0; i < A.rows; ++i) {
    double* ci = C.row(i);
    const double* ai = A.row(i);
    for (int k = 0; k < A.cols; ++k) {
      const double aik = ai[k];
      const double* bk = B.row(k);
      for (int j = 0; j < B.cols; ++j) ci[j] += aik * bk[j];
    }
  }
  return C;
}

// C = A * B^T
inline Mat matmul_nt(const Mat& A, const Mat& B) {
  assert(A.cols == B.cols);
  Mat C(A.rows, B.rows);
  for (int i = 0; i < A.rows; ++i) {
    const double* ai = A.row(i);
    for (int j = 0; j < B.rows; ++j) {
      const double* bj = B.row(j);
      double s = 0.0;
      for (int k = 0; k < A.cols; ++k) s += ai[k] * bj[k];
      C.at(i, j) = s;
    }
  }
  return C;
}

// C = A^T * B
inline Mat matmul_tn(const Mat& A, const Mat& B) {
  assert(A.rows == B.rows);
  Mat C(A.cols, B.cols);
  for (int k = 0; k < A.rows; ++k) {
    const double* ak = A.row(k);
    const double* bk = B.row(k);
    for (int i = 0; i < A.cols; ++i) {
      const double aki = ak[i];
      double* ci = C.row(i);
      for (int j = 0; j < B.cols; ++j) ci[j] += aki * bk[j];
    }
  }
  return C;
}

inline void add_inplace(Mat& dst, const Mat& src) {
  assert(dst.same_shape(src));
  for (size_t i = 0; i < dst.a.size(); ++i) dst.a[i] += src.a[i];
}

inline void scale_inplace(Mat& dst, double s) {
  for (double& v : dst.a) v *= s;
}

}  // namespace tprf
