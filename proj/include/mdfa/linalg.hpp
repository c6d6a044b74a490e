#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mdfa/types.hpp"

namespace mdfa::linalg {

/// Leading singular triplets, singular values descending.
struct ThinSvd {
  Matrix u;  // n x k
  Vector s;  // k
  Matrix v;  // p x k
};

/// Eigendecomposition of a symmetric matrix, eigenvalues descending.
struct SpectralDecomp {
  Vector values;   // k, descending
  Matrix vectors;  // p x k
};

inline Matrix sym(const Matrix& s) { return 0.5 * (s + s.transpose()); }

namespace detail {

/// Flip column signs so the entry of largest magnitude in each column of
/// `primary` is nonnegative (first index wins ties). `paired` columns are
/// flipped jointly when present.
inline void fix_column_signs(Matrix& primary, Matrix* paired) {
  for (Index j = 0; j < primary.cols(); ++j) {
    Index at = 0;
    double best = -1.0;
    for (Index i = 0; i < primary.rows(); ++i) {
      const double a = std::abs(primary(i, j));
      if (a > best) {
        best = a;
        at = i;
      }
    }
    if (primary(at, j) < 0.0) {
      primary.col(j) = -primary.col(j);
      if (paired) paired->col(j) = -paired->col(j);
    }
  }
}

}  // namespace detail

/// k leading singular triplets of m (n x p), k <= min(n, p). Column signs are
/// fixed via the left factor.
inline ThinSvd thin_svd(const Matrix& m, Index k) {
  if (k < 1 || k > std::min(m.rows(), m.cols()))
    throw DimensionError("thin_svd: k out of range");
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  ThinSvd out;
  out.u = svd.matrixU().leftCols(k);
  out.s = svd.singularValues().head(k);
  out.v = svd.matrixV().leftCols(k);
  detail::fix_column_signs(out.u, &out.v);
  return out;
}

/// Full eigendecomposition of a symmetric matrix, eigenvalues descending,
/// eigenvector signs fixed by largest-magnitude entry.
inline SpectralDecomp spectral(const Matrix& s) {
  if (s.rows() != s.cols()) throw DimensionError("spectral: matrix must be square");
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym(s));
  if (es.info() != Eigen::Success) throw EvalError("spectral: eigensolver failed");
  const Index p = s.rows();
  SpectralDecomp out;
  out.values = es.eigenvalues().reverse();
  out.vectors = es.eigenvectors().rowwise().reverse();
  (void)p;
  detail::fix_column_signs(out.vectors, nullptr);
  return out;
}

/// Symmetric square root built from the k leading eigenpairs, with
/// eigenvalues clamped at zero. Rejects matrices whose most negative
/// eigenvalue exceeds the PSD tolerance (relative to max(1, lambda_max)).
inline Matrix psd_sqrt(const Matrix& s, Index k = -1, const Tolerances& tol = {}) {
  SpectralDecomp ed = spectral(s);
  const Index p = s.rows();
  if (k < 0) k = p;
  if (k > p) throw DimensionError("psd_sqrt: k out of range");
  const double scale = std::max(1.0, ed.values.size() ? ed.values(0) : 0.0);
  if (ed.values(ed.values.size() - 1) < -tol.psd * scale)
    throw NotPsd("psd_sqrt: negative eigenvalue beyond tolerance");
  Vector root = ed.values.head(k).cwiseMax(0.0).cwiseSqrt();
  return ed.vectors.leftCols(k) * root.asDiagonal() *
         ed.vectors.leftCols(k).transpose();
}

/// Moore-Penrose pseudoinverse via SVD; singular values below
/// eig_clamp_rel * s_max are treated as zero.
inline Matrix pinv(const Matrix& m, const Tolerances& tol = {}) {
  if (m.rows() == 0 || m.cols() == 0) return Matrix::Zero(m.cols(), m.rows());
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double cutoff = tol.eig_clamp_rel * (s.size() ? s(0) : 0.0);
  Vector sinv = Vector::Zero(s.size());
  for (Index i = 0; i < s.size(); ++i)
    if (s(i) > cutoff && s(i) > 0.0) sinv(i) = 1.0 / s(i);
  return svd.matrixV() * sinv.asDiagonal() * svd.matrixU().transpose();
}

/// Deterministic orthonormal basis of dimension m orthogonal to the columns
/// of k (which must be orthonormal). Candidate coordinate vectors are ranked
/// by their residual norm against k (descending, index ascending on ties) and
/// accepted through twice-reorthogonalized Gram-Schmidt.
inline Matrix orth_complement(const Matrix& k, Index m, const Tolerances& tol = {}) {
  const Index n = k.rows();
  const Index r = k.cols();
  if (m < 0 || m + r > n) throw DimensionError("orth_complement: m out of range");
  if (m == 0) return Matrix(n, 0);

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Vector res(n);  // squared residual of each coordinate vector against span(k)
  for (Index i = 0; i < n; ++i) res(i) = 1.0 - k.row(i).squaredNorm();
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    if (res(a) != res(b)) return res(a) > res(b);
    return a < b;
  });

  Matrix b(n, m);
  Index got = 0;
  for (Index idx : order) {
    if (got == m) break;
    Vector v = Vector::Zero(n);
    v(idx) = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      v -= k * (k.transpose() * v);
      if (got > 0) v -= b.leftCols(got) * (b.leftCols(got).transpose() * v);
    }
    const double nv = v.norm();
    if (nv > tol.mgs_accept) {
      b.col(got++) = v / nv;
    }
  }
  if (got < m) throw RankDeficient("orth_complement: could not complete basis");
  return b;
}

/// Orthogonal p (k x k) minimizing ||a * p - b||_F for a, b of shape n x k.
inline Matrix procrustes(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("procrustes: shape mismatch");
  Eigen::JacobiSVD<Matrix> svd(a.transpose() * b,
                               Eigen::ComputeThinU | Eigen::ComputeThinV);
  return svd.matrixU() * svd.matrixV().transpose();
}

/// Column-stacked lower-triangle half-vectorization (j outer, i >= j inner).
inline Vector vech(const Matrix& s) {
  if (s.rows() != s.cols()) throw DimensionError("vech: matrix must be square");
  const Index p = s.rows();
  Vector v(p * (p + 1) / 2);
  Index t = 0;
  for (Index j = 0; j < p; ++j)
    for (Index i = j; i < p; ++i) v(t++) = s(i, j);
  return v;
}

/// Inverse of vech for symmetric matrices.
inline Matrix unvech(const Vector& v, Index p) {
  if (v.size() != p * (p + 1) / 2) throw DimensionError("unvech: size mismatch");
  Matrix s(p, p);
  Index t = 0;
  for (Index j = 0; j < p; ++j)
    for (Index i = j; i < p; ++i) {
      s(i, j) = v(t);
      s(j, i) = v(t);
      ++t;
    }
  return s;
}

}  // namespace mdfa::linalg
