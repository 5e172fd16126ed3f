#pragma once

#include <array>
#include <cmath>

#include "advgen/common.hpp"

namespace advgen {

using Mat3 = std::array<double, 9>;  // row-major 3x3
using Pt = std::array<double, 2>;

inline Mat3 mat3_identity() { return {1, 0, 0, 0, 1, 0, 0, 0, 1}; }

inline Mat3 mat3_mul(const Mat3& a, const Mat3& b) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      r[size_t(i) * 3 + j] = a[size_t(i) * 3] * b[size_t(j)] +
                             a[size_t(i) * 3 + 1] * b[size_t(j) + 3] +
                             a[size_t(i) * 3 + 2] * b[size_t(j) + 6];
  return r;
}

inline Pt mat3_apply(const Mat3& m, const Pt& p) {
  double x = m[0] * p[0] + m[1] * p[1] + m[2];
  double y = m[3] * p[0] + m[4] * p[1] + m[5];
  double z = m[6] * p[0] + m[7] * p[1] + m[8];
  if (std::fabs(z) < 1e-12) throw ParamError("degenerate homography");
  return {x / z, y / z};
}

inline Mat3 mat3_inverse(const Mat3& m) {
  double a = m[0], b = m[1], c = m[2], d = m[3], e = m[4], f = m[5], g = m[6], h = m[7],
         i = m[8];
  double A = e * i - f * h, B = -(d * i - f * g), C = d * h - e * g;
  double det = a * A + b * B + c * C;
  if (std::fabs(det) < 1e-12) throw ParamError("singular homography");
  double inv = 1.0 / det;
  return {A * inv,
          -(b * i - c * h) * inv,
          (b * f - c * e) * inv,
          B * inv,
          (a * i - c * g) * inv,
          -(a * f - c * d) * inv,
          C * inv,
          -(a * h - b * g) * inv,
          (a * e - b * d) * inv};
}

// Homography H with H*src_k ~ dst_k for four point pairs (classic DLT
// reduced to an 8x8 linear solve, h22 fixed at 1).
inline Mat3 solve_homography(const std::array<Pt, 4>& src, const std::array<Pt, 4>& dst) {
  double A[8][9] = {};
  for (int k = 0; k < 4; ++k) {
    double x = src[size_t(k)][0], y = src[size_t(k)][1];
    double u = dst[size_t(k)][0], v = dst[size_t(k)][1];
    double* r0 = A[2 * k];
    double* r1 = A[2 * k + 1];
    r0[0] = x; r0[1] = y; r0[2] = 1; r0[6] = -u * x; r0[7] = -u * y; r0[8] = u;
    r1[3] = x; r1[4] = y; r1[5] = 1; r1[6] = -v * x; r1[7] = -v * y; r1[8] = v;
  }
  // Gaussian elimination with partial pivoting on the augmented system
  for (int col = 0; col < 8; ++col) {
    int piv = col;
    for (int r = col + 1; r < 8; ++r)
      if (std::fabs(A[r][col]) > std::fabs(A[piv][col])) piv = r;
    if (std::fabs(A[piv][col]) < 1e-12) throw ParamError("degenerate point configuration");
    if (piv != col)
      for (int c = 0; c < 9; ++c) std::swap(A[piv][c], A[col][c]);
    for (int r = 0; r < 8; ++r) {
      if (r == col) continue;
      double f = A[r][col] / A[col][col];
      if (f == 0.0) continue;
      for (int c = col; c < 9; ++c) A[r][c] -= f * A[col][c];
    }
  }
  Mat3 h;
  for (int k = 0; k < 8; ++k) h[size_t(k)] = A[k][8] / A[k][k];
  h[8] = 1.0;
  return h;
}

}  // namespace advgen
