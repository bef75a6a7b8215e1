#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <utility>

#include "qbo/errors.hpp"

namespace qbo {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Escalating diagonal jitter for borderline-PSD covariance matrices.
// Starts at zero; on failure retries at initial, initial*growth, ... up to max.
struct JitterPolicy {
  double initial = 1e-9;
  double growth_factor = 10.0;
  double max = 1e-3;
};

struct CholeskyResult {
  Matrix L;           // lower triangular, strictly positive diagonal
  double jitter_used; // 0 when the factorization succeeded unmodified
};

namespace detail {

// In-place lower Cholesky; returns false if a pivot is not strictly positive.
inline bool try_cholesky(const Matrix& a, Matrix& L) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) return false;
  L = llt.matrixL();
  // LLT can succeed with denormal pivots on nearly singular inputs
  for (Eigen::Index i = 0; i < L.rows(); ++i) {
    if (!(L(i, i) > 0.0) || !std::isfinite(L(i, i))) return false;
  }
  return true;
}

}  // namespace detail

// Factor sigma (+ jitter*I when needed) as L*L^T.
// Throws NotPositiveDefinite if even policy.max jitter does not rescue it.
inline CholeskyResult cholesky(const Matrix& sigma,
                               const JitterPolicy& policy = {}) {
  if (sigma.rows() != sigma.cols())
    throw DimensionMismatch("cholesky: matrix not square");
  const double asym = (sigma - sigma.transpose()).cwiseAbs().maxCoeff();
  const double scale = sigma.cwiseAbs().maxCoeff();
  if (asym > 1e-10 * (scale > 0.0 ? scale : 1.0))
    throw DimensionMismatch("cholesky: matrix not symmetric");

  Matrix L;
  if (detail::try_cholesky(sigma, L)) return {std::move(L), 0.0};

  const Matrix eye = Matrix::Identity(sigma.rows(), sigma.cols());
  for (double jitter = policy.initial; jitter <= policy.max * (1.0 + 1e-12);
       jitter *= policy.growth_factor) {
    if (detail::try_cholesky(sigma + jitter * eye, L)) return {std::move(L), jitter};
  }
  throw NotPositiveDefinite("cholesky: not positive definite at max jitter");
}

// Solve L*x = b by forward substitution (L lower triangular).
inline Matrix tri_solve_lower(const Matrix& L, const Matrix& b) {
  if (L.rows() != L.cols()) throw DimensionMismatch("tri_solve_lower: L not square");
  if (b.rows() != L.rows()) throw DimensionMismatch("tri_solve_lower: row count mismatch");
  for (Eigen::Index i = 0; i < L.rows(); ++i) {
    if (std::abs(L(i, i)) < 1e-14)
      throw SingularTriangular("tri_solve_lower: near-zero diagonal entry");
  }
  return L.triangularView<Eigen::Lower>().solve(b);
}

// Directional derivative of the Cholesky map at L*L^T in direction dSigma:
//   dL = L * Phi(L^{-1} dSigma L^{-T}),  Phi = lower half with halved diagonal.
inline Matrix cholesky_pushforward(const Matrix& L, const Matrix& dSigma) {
  if (dSigma.rows() != L.rows() || dSigma.cols() != L.cols())
    throw DimensionMismatch("cholesky_pushforward: shape mismatch");
  // A = L^{-1} dSigma L^{-T}
  Matrix A = tri_solve_lower(L, dSigma);
  A = tri_solve_lower(L, A.transpose()).transpose();
  Matrix phi = A.triangularView<Eigen::StrictlyLower>();
  phi.diagonal() = 0.5 * A.diagonal();
  return L * phi;
}

}  // namespace qbo
