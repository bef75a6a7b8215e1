#pragma once

#include <memory>
#include <utility>

#include "qbo/kernel.hpp"
#include "qbo/linalg.hpp"

namespace qbo {

// Observed data plus the box domain it lives in.
struct Dataset {
  Matrix inputs;   // n x d, all rows inside [lower, upper]
  Vector outputs;  // n
  Vector lower;    // d
  Vector upper;    // d

  Eigen::Index size() const { return inputs.rows(); }
  Eigen::Index dim() const { return lower.size(); }

  static Dataset empty(const Vector& lower, const Vector& upper) {
    return {Matrix(0, lower.size()), Vector(0), lower, upper};
  }
};

// Zero-mean posterior belief over the q outcomes of a pool.
struct PosteriorGaussian {
  Vector mu;           // q
  Matrix sigma;        // q x q, symmetric
  Matrix chol;         // lower triangular, chol*chol^T = sigma + jitter_used*I
  double jitter_used = 0.0;

  Eigen::Index q() const { return mu.size(); }
};

// Derivatives of the posterior with respect to the pool entries, flattened:
// column j*d + k is the derivative in direction X(j, k); dsigma row i*q + l
// holds d sigma(i, l).
struct PosteriorJacobians {
  Matrix dmu;     // q x (q*d)
  Matrix dsigma;  // (q*q) x (q*d)
};

// Immutable per-iteration conditioning state: one Cholesky of K_nn shared by
// every posterior query against the same data. Safe to share across threads
// once constructed.
class FittedGp {
 public:
  FittedGp(Dataset data, KernelParams params, JitterPolicy policy = {})
      : data_(std::move(data)), params_(std::move(params)), policy_(policy) {
    const Eigen::Index n = data_.size();
    if (n > 0) {
      const Matrix knn = cross_cov(data_.inputs, data_.inputs, params_);
      auto fac = cholesky(knn, policy_);
      chol_nn_ = std::move(fac.L);
      // weights = K_nn^{-1} y via two triangular solves
      weights_ = tri_solve_lower(chol_nn_, data_.outputs);
      weights_ = chol_nn_.transpose()
                     .triangularView<Eigen::Upper>()
                     .solve(weights_);
    }
  }

  const Dataset& data() const { return data_; }
  const KernelParams& params() const { return params_; }
  const JitterPolicy& policy() const { return policy_; }
  const Matrix& chol_nn() const { return chol_nn_; }
  const Vector& weights() const { return weights_; }

  // K_nn^{-1} b for an n x m right-hand side
  Matrix solve_nn(const Matrix& b) const {
    Matrix v = tri_solve_lower(chol_nn_, b);
    return chol_nn_.transpose().triangularView<Eigen::Upper>().solve(v);
  }

 private:
  Dataset data_;
  KernelParams params_;
  JitterPolicy policy_;
  Matrix chol_nn_;   // empty when the dataset is empty
  Vector weights_;
};

// Standard zero-mean GP conditioning:
//   mu = K_Xn K_nn^{-1} y,  sigma = K_XX - K_Xn K_nn^{-1} K_nX.
// K_XX carries the observation noise, so with no data the posterior reduces
// to the prior cross_cov(X, X).
inline PosteriorGaussian posterior(const FittedGp& gp, const Matrix& X) {
  PosteriorGaussian post;
  const Matrix kxx = cross_cov(X, X, gp.params());
  if (gp.data().size() == 0) {
    post.mu = Vector::Zero(X.rows());
    post.sigma = kxx;
  } else {
    const Matrix kxn = cross_cov(X, gp.data().inputs, gp.params());
    post.mu = kxn * gp.weights();
    const Matrix v = tri_solve_lower(gp.chol_nn(), kxn.transpose());  // n x q
    post.sigma = kxx - v.transpose() * v;
    post.sigma = 0.5 * (post.sigma + post.sigma.transpose().eval());  // enforce symmetry
  }
  auto fac = cholesky(post.sigma, gp.policy());
  post.chol = std::move(fac.L);
  post.jitter_used = fac.jitter_used;
  return post;
}

inline PosteriorGaussian posterior(const Dataset& data, const Matrix& X,
                                   const KernelParams& params,
                                   const JitterPolicy& policy = {}) {
  return posterior(FittedGp(data, params, policy), X);
}

// Exact analytic derivatives of the conditioning formulas. Row/column layout
// as documented on PosteriorJacobians.
inline PosteriorJacobians posterior_jacobians(const FittedGp& gp, const Matrix& X) {
  const Eigen::Index q = X.rows();
  const Eigen::Index d = X.cols();
  const Eigen::Index n = gp.data().size();
  const KernelParams& params = gp.params();

  PosteriorJacobians jac;
  jac.dmu = Matrix::Zero(q, q * d);
  jac.dsigma = Matrix::Zero(q * q, q * d);

  // dk[j] column k holds d k(train, x_j) / d x_j(k)
  std::vector<Matrix> dk(static_cast<size_t>(q));
  Matrix G;  // K_nn^{-1} K_nX, n x q
  if (n > 0) {
    const Matrix kxn = cross_cov(X, gp.data().inputs, params);
    G = gp.solve_nn(kxn.transpose());
    for (Eigen::Index j = 0; j < q; ++j) {
      Matrix m(n, d);
      for (Eigen::Index t = 0; t < n; ++t)
        m.row(t) = grad_x_kern(X.row(j), gp.data().inputs.row(t), params);
      dk[static_cast<size_t>(j)] = std::move(m);
    }
  }

  for (Eigen::Index j = 0; j < q; ++j) {
    for (Eigen::Index k = 0; k < d; ++k) {
      const Eigen::Index col = j * d + k;
      if (n > 0) jac.dmu(j, col) = dk[static_cast<size_t>(j)].col(k).dot(gp.weights());
      for (Eigen::Index i = 0; i < q; ++i) {
        for (Eigen::Index l = 0; l < q; ++l) {
          double v = 0.0;
          if (i != l) {
            // prior term: k(x_i, x_l) moves with whichever argument is row j
            if (i == j) v += grad_x_kern(X.row(i), X.row(l), params)(k);
            if (l == j) v += grad_x_kern(X.row(l), X.row(i), params)(k);
          }
          if (n > 0) {
            if (i == j) v -= dk[static_cast<size_t>(j)].col(k).dot(G.col(l));
            if (l == j) v -= G.col(i).dot(dk[static_cast<size_t>(j)].col(k));
          }
          jac.dsigma(i * q + l, col) = v;
        }
      }
    }
  }
  return jac;
}

inline PosteriorJacobians posterior_jacobians(const Dataset& data, const Matrix& X,
                                              const KernelParams& params) {
  return posterior_jacobians(FittedGp(data, params), X);
}

}  // namespace qbo
