#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "qbo/gp.hpp"
#include "qbo/random.hpp"

namespace qbo {

// A batch of q candidate query locations inside a box domain.
struct Pool {
  Matrix X;      // q x d
  Vector lower;  // d
  Vector upper;  // d

  Eigen::Index q() const { return X.rows(); }
  Eigen::Index d() const { return X.cols(); }
};

enum class Family { EI, PI, UCB, SR, ES_INNER };

inline const char* family_name(Family f) {
  switch (f) {
    case Family::EI: return "EI";
    case Family::PI: return "PI";
    case Family::UCB: return "UCB";
    case Family::SR: return "SR";
    case Family::ES_INNER: return "ES_INNER";
  }
  return "?";
}

// Acquisition family plus its parameters. Parameters irrelevant to a family
// are stored but ignored (alpha for SR, beta for EI, ...).
struct AcquisitionSpec {
  Family family = Family::EI;
  double alpha = 0.0;                 // improvement threshold (EI, PI)
  double beta = 1.7320508075688772;   // confidence parameter (UCB)
  double tau = 0.01;                  // relaxation temperature (PI, ES)
  int n_samples = 128;
};

enum class SamplePolicy { FIXED, RESAMPLED };

// An n x q block of standard-normal base draws. Under FIXED the block is
// reused for every objective evaluation of one optimizer run, which makes
// the MC objective a deterministic function of the pool.
struct BaseSampleBlock {
  Matrix Z;  // n x q, rows are i.i.d. N(0, I_q)
  SamplePolicy policy = SamplePolicy::FIXED;
  std::uint64_t seed = 0;

  static BaseSampleBlock draw(int n, int q, std::uint64_t seed,
                              SamplePolicy policy = SamplePolicy::FIXED) {
    BaseSampleBlock block;
    block.Z.resize(n, q);
    block.policy = policy;
    block.seed = seed;
    Rng rng(seed);
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < q; ++j) block.Z(k, j) = rng.normal();
    return block;
  }
};

struct AcqGradient {
  double value = 0.0;
  Matrix grad;  // q x d, dH/dX
  double std_error = 0.0;
};

// y_k = mu + L z_k for every row z_k of the block.
inline Matrix reparam_outcomes(const PosteriorGaussian& post, const BaseSampleBlock& block) {
  if (block.Z.cols() != post.q())
    throw DimensionMismatch("reparam_outcomes: Z column count != q");
  Matrix y = block.Z * post.chol.transpose();
  y.rowwise() += post.mu.transpose();
  return y;
}

namespace detail {

inline double sigmoid(double t) {
  return t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
}

inline Eigen::Index argmax(const Vector& v) {
  Eigen::Index m = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(m)) m = i;  // strict: ties break to the lowest index
  return m;
}

}  // namespace detail

// Table of reparameterized integrands. Each one maps a single outcome draw
// to its value contribution.

inline double integrand_ei(const Vector& y, double alpha) {
  return std::max(0.0, y.maxCoeff() - alpha);
}

inline double integrand_pi(const Vector& y, double alpha, double tau) {
  return detail::sigmoid((y.maxCoeff() - alpha) / tau);
}

inline double integrand_sr(const Vector& y) { return y.maxCoeff(); }

// z-space form of the parallel UCB integrand: max(mu + sqrt(beta*pi/2)|L z|).
inline double integrand_ucb(const Vector& z_row, const PosteriorGaussian& post,
                            double beta) {
  const double c = std::sqrt(beta * 1.5707963267948966);  // beta*pi/2
  const Vector w = post.chol * z_row;
  return (post.mu + c * w.cwiseAbs()).maxCoeff();
}

// softmax(y / tau); the relaxed membership vector for p_max.
inline Vector integrand_es_pmax(const Vector& y, double tau) {
  Vector s = y / tau;
  const double m = s.maxCoeff();
  s = (s.array() - m).exp();
  return s / s.sum();
}

namespace detail {

// Canonical evaluation order of pool members, keyed on (mu_i, sigma_ii).
// Both estimate and estimate_gradient order their work this way, which makes
// acquisition values exact functions of the pool *as a set*: permuting the
// pool rows (and base-sample columns with them) cannot change the result.
inline std::vector<Eigen::Index> canonical_order(const PosteriorGaussian& post) {
  std::vector<Eigen::Index> idx(static_cast<size_t>(post.q()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (post.mu(a) != post.mu(b)) return post.mu(a) < post.mu(b);
    return post.sigma(a, a) < post.sigma(b, b);
  });
  return idx;
}

inline bool is_identity(const std::vector<Eigen::Index>& p) {
  for (size_t i = 0; i < p.size(); ++i)
    if (p[i] != static_cast<Eigen::Index>(i)) return false;
  return true;
}

// Posterior and base samples reordered into canonical member order.
// The covariance is re-factorized; its spectrum is permutation-invariant, so
// the jitter escalation resolves identically.
inline void canonicalize(const PosteriorGaussian& post, const Matrix& Z,
                         const JitterPolicy& policy, PosteriorGaussian& post_c,
                         Matrix& z_c, std::vector<Eigen::Index>& perm) {
  perm = canonical_order(post);
  if (is_identity(perm)) {
    post_c = post;
    z_c = Z;
    return;
  }
  const Eigen::Index q = post.q();
  post_c.mu.resize(q);
  post_c.sigma.resize(q, q);
  z_c.resize(Z.rows(), q);
  for (Eigen::Index i = 0; i < q; ++i) {
    post_c.mu(i) = post.mu(perm[static_cast<size_t>(i)]);
    z_c.col(i) = Z.col(perm[static_cast<size_t>(i)]);
    for (Eigen::Index l = 0; l < q; ++l)
      post_c.sigma(i, l) =
          post.sigma(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(l)]);
  }
  auto fac = cholesky(post_c.sigma, policy);
  post_c.chol = std::move(fac.L);
  post_c.jitter_used = fac.jitter_used;
}

// Per-family accumulation over the sample block, in canonical order.
// Produces the MC value, its standard error, and (when wanted) the adjoints
// d value / d mu and d value / d L of the fixed-Z objective.
struct Accumulated {
  double value = 0.0;
  double std_error = 0.0;
  Vector g_mu;  // q
  Matrix g_chol;  // q x q, lower
};

inline Accumulated accumulate(const AcquisitionSpec& spec,
                              const PosteriorGaussian& post, const Matrix& Z,
                              bool with_grad) {
  const Eigen::Index n = Z.rows();
  const Eigen::Index q = post.q();
  const double inv_n = 1.0 / static_cast<double>(n);
  Accumulated acc;
  if (with_grad) {
    acc.g_mu = Vector::Zero(q);
    acc.g_chol = Matrix::Zero(q, q);
  }

  if (spec.family == Family::ES_INNER) {
    // Scalar reduction: entropy of the sample-averaged p_max vector.
    Matrix probs(n, q);
    const Matrix y = Z * post.chol.transpose();
    for (Eigen::Index k = 0; k < n; ++k)
      probs.row(k) =
          integrand_es_pmax(post.mu + y.row(k).transpose(), spec.tau).transpose();
    const Vector pbar = probs.colwise().mean().transpose();
    double entropy = 0.0;
    Vector gbar = Vector::Zero(q);  // d entropy / d pbar
    for (Eigen::Index i = 0; i < q; ++i) {
      if (pbar(i) > 0.0) {
        entropy -= pbar(i) * std::log(pbar(i));
        gbar(i) = -(std::log(pbar(i)) + 1.0);
      }
    }
    acc.value = entropy;
    // delta-method standard error through the averaging
    const Matrix centered = probs.rowwise() - pbar.transpose();
    const Vector proj = centered * gbar;
    const double var =
        n > 1 ? proj.squaredNorm() / static_cast<double>(n - 1) : 0.0;
    acc.std_error = std::sqrt(var * inv_n);
    if (with_grad) {
      for (Eigen::Index k = 0; k < n; ++k) {
        const Vector p = probs.row(k);
        // (J_softmax)^T gbar / tau, scaled by the outer 1/n
        const Vector gy =
            (p.array() * (gbar.array() - p.dot(gbar))).matrix() * (inv_n / spec.tau);
        acc.g_mu += gy;
        acc.g_chol += gy * Z.row(k);
      }
      acc.g_chol = acc.g_chol.triangularView<Eigen::Lower>();
    }
    return acc;
  }

  const double c_ucb = std::sqrt(spec.beta * 1.5707963267948966);
  const Matrix y = Z * post.chol.transpose();
  double sum = 0.0, sumsq = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    double h = 0.0;
    if (spec.family == Family::UCB) {
      const Vector w = y.row(k).transpose();  // L z_k
      const Vector s = post.mu + c_ucb * w.cwiseAbs();
      const Eigen::Index m = argmax(s);
      h = s(m);
      if (with_grad) {
        acc.g_mu(m) += inv_n;
        const double sgn = w(m) >= 0.0 ? 1.0 : -1.0;
        acc.g_chol.row(m) += (c_ucb * sgn * inv_n) * Z.row(k);
      }
    } else {
      const Vector yk = post.mu + y.row(k).transpose();
      const Eigen::Index m = argmax(yk);
      double gm = 0.0;  // d h / d y_m
      switch (spec.family) {
        case Family::EI: {
          const double imp = yk(m) - spec.alpha;
          h = std::max(0.0, imp);
          gm = imp > 0.0 ? 1.0 : 0.0;
          break;
        }
        case Family::PI: {
          const double s = sigmoid((yk(m) - spec.alpha) / spec.tau);
          h = s;
          gm = s * (1.0 - s) / spec.tau;
          break;
        }
        case Family::SR: {
          h = yk(m);
          gm = 1.0;
          break;
        }
        default: break;
      }
      if (with_grad && gm != 0.0) {
        acc.g_mu(m) += gm * inv_n;
        acc.g_chol.row(m) += (gm * inv_n) * Z.row(k);
      }
    }
    sum += h;
    sumsq += h * h;
  }
  acc.value = sum * inv_n;
  const double var =
      n > 1 ? std::max(0.0, (sumsq - sum * sum * inv_n) / static_cast<double>(n - 1))
            : 0.0;
  acc.std_error = std::sqrt(var * inv_n);
  if (with_grad) acc.g_chol = acc.g_chol.triangularView<Eigen::Lower>();
  return acc;
}

}  // namespace detail

// Monte Carlo estimate of the acquisition value: value = mean_k h(mu + L z_k)
// plus its standard error. ES_INNER reduces to the entropy of the averaged
// p_max vector.
inline std::pair<double, double> estimate(const AcquisitionSpec& spec,
                                          const PosteriorGaussian& post,
                                          const BaseSampleBlock& block,
                                          const JitterPolicy& policy = {}) {
  if (block.Z.cols() != post.q())
    throw DimensionMismatch("estimate: Z column count != q");
  if (spec.n_samples != block.Z.rows())
    throw DimensionMismatch("estimate: spec.n_samples != sample block rows");
  PosteriorGaussian post_c;
  Matrix z_c;
  std::vector<Eigen::Index> perm;
  detail::canonicalize(post, block.Z, policy, post_c, z_c, perm);
  const auto acc = detail::accumulate(spec, post_c, z_c, /*with_grad=*/false);
  return {acc.value, acc.std_error};
}

// Pathwise gradient of the fixed-Z MC objective with respect to the pool:
//   dH/dX(j,k) = g_mu . dmu/dX(j,k)  +  < g_L , dL[ dsigma/dX(j,k) ] >
// with dL the Cholesky pushforward. Exact wherever the objective is
// differentiable; max ties take the lowest-index subgradient.
inline AcqGradient estimate_gradient(const AcquisitionSpec& spec, const FittedGp& gp,
                                     const Pool& pool, const BaseSampleBlock& block) {
  const Eigen::Index q = pool.q();
  const Eigen::Index d = pool.d();
  if (block.Z.cols() != q)
    throw DimensionMismatch("estimate_gradient: Z column count != q");
  if (spec.n_samples != block.Z.rows())
    throw DimensionMismatch("estimate_gradient: spec.n_samples != sample block rows");

  const PosteriorGaussian post = posterior(gp, pool.X);
  const auto perm = detail::canonical_order(post);

  // Reorder the pool itself, then condition in canonical order so the
  // Jacobian layout needs no reshuffling.
  Matrix xc(q, d);
  Matrix z_c(block.Z.rows(), q);
  for (Eigen::Index i = 0; i < q; ++i) {
    xc.row(i) = pool.X.row(perm[static_cast<size_t>(i)]);
    z_c.col(i) = block.Z.col(perm[static_cast<size_t>(i)]);
  }
  const PosteriorGaussian post_c = posterior(gp, xc);
  const PosteriorJacobians jac = posterior_jacobians(gp, xc);

  const auto acc = detail::accumulate(spec, post_c, z_c, /*with_grad=*/true);

  Matrix grad_c(q, d);
  for (Eigen::Index j = 0; j < q; ++j) {
    for (Eigen::Index k = 0; k < d; ++k) {
      const Eigen::Index col = j * d + k;
      Matrix dsig(q, q);
      for (Eigen::Index i = 0; i < q; ++i)
        for (Eigen::Index l = 0; l < q; ++l) dsig(i, l) = jac.dsigma(i * q + l, col);
      const Matrix dchol = cholesky_pushforward(post_c.chol, dsig);
      grad_c(j, k) =
          acc.g_mu.dot(jac.dmu.col(col)) + acc.g_chol.cwiseProduct(dchol).sum();
    }
  }

  AcqGradient out;
  out.value = acc.value;
  out.std_error = acc.std_error;
  out.grad.resize(q, d);
  for (Eigen::Index i = 0; i < q; ++i)
    out.grad.row(perm[static_cast<size_t>(i)]) = grad_c.row(i);
  return out;
}

inline AcqGradient estimate_gradient(const AcquisitionSpec& spec, const Dataset& data,
                                     const Pool& pool, const BaseSampleBlock& block,
                                     const KernelParams& params) {
  return estimate_gradient(spec, FittedGp(data, params), pool, block);
}

}  // namespace qbo
