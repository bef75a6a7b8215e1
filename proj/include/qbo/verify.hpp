#pragma once

#include <Eigen/Eigenvalues>
#include <cmath>
#include <functional>
#include <vector>

#include "qbo/acquisition.hpp"

namespace qbo {

inline double norm_pdf(double x) {
  return 0.3989422804014326779 * std::exp(-0.5 * x * x);
}

inline double norm_cdf(double x) {
  return 0.5 * std::erfc(-x * 0.70710678118654752440);
}

// Nodes and weights normalized against the standard normal measure:
// sum(weights) = 1, nodes symmetric about 0.
struct QuadratureRule {
  int order = 0;
  Vector nodes;
  Vector weights;
};

// Probabilists' Gauss-Hermite rule via Golub-Welsch on the Jacobi matrix
// (diagonal 0, off-diagonal sqrt(k)).
inline QuadratureRule hermite_rule(int order) {
  if (order < 2) throw DimensionMismatch("hermite_rule: order must be >= 2");
  Matrix jacobi = Matrix::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    const double b = std::sqrt(static_cast<double>(k));
    jacobi(k, k - 1) = b;
    jacobi(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(jacobi);
  QuadratureRule rule;
  rule.order = order;
  rule.nodes = es.eigenvalues();
  rule.weights = es.eigenvectors().row(0).transpose().array().square();
  rule.weights /= rule.weights.sum();
  return rule;
}

// Deterministic tensor-product quadrature of E[h(y)], y ~ N(mu, Sigma),
// replacing the MC average: sum over the order^q grid of
// prod(weights) * h(mu + L * node_vector). Guarded at q <= 3.
inline double gauss_hermite_expectation(
    const std::function<double(const Vector&)>& integrand,
    const PosteriorGaussian& post, int order) {
  const Eigen::Index q = post.q();
  if (q > 3) throw DimensionTooLarge("gauss_hermite_expectation: q > 3");
  const QuadratureRule rule = hermite_rule(order);
  std::vector<int> idx(static_cast<size_t>(q), 0);
  Vector z(q);
  double total = 0.0;
  while (true) {
    double w = 1.0;
    for (Eigen::Index i = 0; i < q; ++i) {
      z(i) = rule.nodes(idx[static_cast<size_t>(i)]);
      w *= rule.weights(idx[static_cast<size_t>(i)]);
    }
    total += w * integrand(post.mu + post.chol * z);
    Eigen::Index pos = 0;
    while (pos < q) {
      if (++idx[static_cast<size_t>(pos)] < order) break;
      idx[static_cast<size_t>(pos)] = 0;
      ++pos;
    }
    if (pos == q) break;
  }
  return total;
}

// Standard marginal EI closed form: sigma*(phi(u) + u*Phi(u)), u=(mu-alpha)/sigma.
inline double closed_form_ei(double mu, double sigma, double alpha) {
  const double u = (mu - alpha) / sigma;
  return sigma * (norm_pdf(u) + u * norm_cdf(u));
}

// Exact marginal PI (Heaviside integrand): Phi((mu - alpha)/sigma).
inline double closed_form_pi(double mu, double sigma, double alpha) {
  return norm_cdf((mu - alpha) / sigma);
}

// Marginal UCB: mu + sqrt(beta)*sigma.
inline double closed_form_ucb1(double mu, double sigma, double beta) {
  return mu + std::sqrt(beta) * sigma;
}

namespace detail {

// Gauss-Legendre rule on [-1, 1], Golub-Welsch form.
inline QuadratureRule legendre_rule(int order) {
  Matrix jacobi = Matrix::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    const double kk = static_cast<double>(k);
    const double b = kk / std::sqrt(4.0 * kk * kk - 1.0);
    jacobi(k, k - 1) = b;
    jacobi(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(jacobi);
  QuadratureRule rule;
  rule.order = order;
  rule.nodes = es.eigenvalues();
  rule.weights = 2.0 * es.eigenvectors().row(0).transpose().array().square();
  return rule;
}

}  // namespace detail

// Composite Gauss-Legendre integral of a smooth integrand over [a, b].
inline double integrate_smooth(const std::function<double(double)>& f, double a,
                               double b, int panels = 16, int order = 24) {
  const QuadratureRule rule = detail::legendre_rule(order);
  const double width = (b - a) / panels;
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double lo = a + p * width;
    for (int i = 0; i < order; ++i) {
      const double t = lo + 0.5 * width * (rule.nodes(i) + 1.0);
      total += 0.5 * width * rule.weights(i) * f(t);
    }
  }
  return total;
}

// Integral identity behind the UCB derivation:
//   int_0^inf sqrt(2*pi) * y * N(y; 0, sigma^2) dy = sigma.
inline double halfline_identity_quadrature(double sigma) {
  const double tail = 14.0 * sigma;  // mass beyond is ~1e-43
  return integrate_smooth(
      [sigma](double y) {
        return std::sqrt(2.0 * M_PI) * y * norm_pdf(y / sigma) / sigma;
      },
      0.0, tail);
}

// Simplified marginal UCB: mu plus the mean exceedance above mu of a
// N(mu, 2*pi*beta*sigma^2) variable, evaluated by quadrature. Equals
// closed_form_ucb1 analytically.
inline double ucb_marginal_quadrature(double mu, double sigma, double beta) {
  const double shat = std::sqrt(2.0 * M_PI * beta) * sigma;
  const double exceedance = integrate_smooth(
      [shat](double z) { return shat * z * norm_pdf(z); }, 0.0, 14.0);
  return mu + exceedance;
}

// Central finite differences of a pool objective, the gradient oracle.
inline Matrix finite_diff_grad(const std::function<double(const Pool&)>& objective,
                               const Pool& pool, double h) {
  Matrix grad(pool.q(), pool.d());
  Pool probe = pool;
  for (Eigen::Index j = 0; j < pool.q(); ++j) {
    for (Eigen::Index k = 0; k < pool.d(); ++k) {
      const double x0 = pool.X(j, k);
      probe.X(j, k) = x0 + h;
      const double fp = objective(probe);
      probe.X(j, k) = x0 - h;
      const double fm = objective(probe);
      probe.X(j, k) = x0;
      grad(j, k) = (fp - fm) / (2.0 * h);
    }
  }
  return grad;
}

}  // namespace qbo
