#pragma once

#include <cmath>

#include "qbo/linalg.hpp"

namespace qbo {

// ARD squared-exponential hyperparameters. The benchmark default is
// signal_variance 1, lengthscale 0.2 per dimension on the unit box, and a
// near-noiseless 1e-6 observation variance.
struct KernelParams {
  double signal_variance = 1.0;
  Vector lengthscales;      // one positive entry per input dimension
  double noise_variance = 1e-6;

  static KernelParams isotropic(int dim, double signal_variance = 1.0,
                                double lengthscale = 0.2,
                                double noise_variance = 1e-6) {
    KernelParams p;
    p.signal_variance = signal_variance;
    p.lengthscales = Vector::Constant(dim, lengthscale);
    p.noise_variance = noise_variance;
    return p;
  }
};

// k(x, x2) = signal_variance * exp(-1/2 sum_i ((x_i - x2_i)/l_i)^2)
inline double kern(const Vector& x, const Vector& x2, const KernelParams& params) {
  if (x.size() != x2.size() || x.size() != params.lengthscales.size())
    throw DimensionMismatch("kern: dimension mismatch");
  const double r2 = ((x - x2).array() / params.lengthscales.array()).square().sum();
  return params.signal_variance * std::exp(-0.5 * r2);
}

// d k(x, x2) / dx = -k(x, x2) * (x - x2) / l^2, elementwise
inline Vector grad_x_kern(const Vector& x, const Vector& x2,
                          const KernelParams& params) {
  const double k = kern(x, x2, params);
  return (-k * (x - x2).array() / params.lengthscales.array().square()).matrix();
}

// Covariance between the rows of A and the rows of B. When called with the
// same matrix on both sides, noise_variance is added on the diagonal.
inline Matrix cross_cov(const Matrix& A, const Matrix& B,
                        const KernelParams& params) {
  if (A.cols() != B.cols() || A.cols() != params.lengthscales.size())
    throw DimensionMismatch("cross_cov: dimension mismatch");
  Matrix K(A.rows(), B.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < B.rows(); ++j)
      K(i, j) = kern(A.row(i), B.row(j), params);
  const bool same = A.rows() == B.rows() && A == B;
  if (same && params.noise_variance > 0.0)
    K.diagonal().array() += params.noise_variance;
  return K;
}

}  // namespace qbo
