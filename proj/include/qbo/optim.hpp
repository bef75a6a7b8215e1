#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "qbo/acquisition.hpp"
#include "qbo/random.hpp"

namespace qbo {

// Flattened q*d pool search space. Row j of a pool maps to coordinates
// [j*d, (j+1)*d).
struct Box {
  Vector lower;  // q*d
  Vector upper;  // q*d
  int q = 1;
  int d = 0;

  static Box pool_space(int q, const Vector& dom_lower, const Vector& dom_upper) {
    Box box;
    box.q = q;
    box.d = static_cast<int>(dom_lower.size());
    box.lower.resize(q * box.d);
    box.upper.resize(q * box.d);
    for (int j = 0; j < q; ++j) {
      box.lower.segment(j * box.d, box.d) = dom_lower;
      box.upper.segment(j * box.d, box.d) = dom_upper;
    }
    return box;
  }

  Vector clamp(const Vector& x) const {
    return x.cwiseMax(lower).cwiseMin(upper);
  }

  Pool to_pool(const Vector& x) const {
    Pool pool;
    pool.X = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                            Eigen::RowMajor>>(x.data(), q, d);
    pool.lower = lower.head(d);
    pool.upper = upper.head(d);
    return pool;
  }

  Vector flatten(const Pool& pool) const {
    Vector x(q * d);
    for (int j = 0; j < q; ++j) x.segment(j * d, d) = pool.X.row(j).transpose();
    return x;
  }

  Vector sample(Rng& rng) const {
    Vector x(lower.size());
    for (Eigen::Index i = 0; i < x.size(); ++i)
      x(i) = rng.uniform(lower(i), upper(i));
    return x;
  }
};

enum class OptimizerKind { RS, DIRECT, LBFGS, ADAM };

inline const char* optimizer_name(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::RS: return "RS";
    case OptimizerKind::DIRECT: return "DIRECT";
    case OptimizerKind::LBFGS: return "LBFGS";
    case OptimizerKind::ADAM: return "ADAM";
  }
  return "?";
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::LBFGS;
  int eval_budget = 2048;       // RS / DIRECT pool evaluations
  int n_starts = 32;
  int sgd_steps = 1024;
  int minibatch = 64;
  double learning_rate = 0.01;
  int lbfgs_memory = 10;
  double direct_epsilon = 1e-4;
  int lbfgs_max_iters = 30;
  int n_candidates = 512;       // multistart candidate draws
  int rescore_samples = 1024;   // final fixed-Z re-scoring of candidates
};

struct OptResult {
  Pool best_pool;
  double best_value = -std::numeric_limits<double>::infinity();
  long evals_used = 0;
  std::vector<std::pair<long, double>> trace;  // (step, incumbent value)
  int line_search_failures = 0;
};

using PoolObjective = std::function<double(const Pool&)>;
// value and dvalue/dX for a pool
using PoolObjectiveWithGrad = std::function<std::pair<double, Matrix>(const Pool&)>;
// stochastic variant; the step index selects the resampled base block
using StochasticPoolGrad = std::function<std::pair<double, Matrix>(const Pool&, int)>;

// Evaluates exactly `budget` uniform pools and returns the argmax.
inline OptResult random_search(const PoolObjective& objective, const Box& box,
                               int budget, std::uint64_t seed) {
  Rng rng(seed);
  OptResult res;
  Vector best_x;
  for (int i = 0; i < budget; ++i) {
    const Vector x = box.sample(rng);
    const double v = objective(box.to_pool(x));
    ++res.evals_used;
    if (v > res.best_value) {
      res.best_value = v;
      best_x = x;
      res.trace.emplace_back(i, v);
    }
  }
  res.best_pool = box.to_pool(best_x);
  return res;
}

namespace detail {

struct DirectRect {
  Vector center;          // unit-cube coordinates
  std::vector<int> levels;  // trisection count per dimension
  double value;           // objective at the center (maximization)

  double size() const {
    double s = 0.0;
    for (int t : levels) s += std::pow(9.0, -t);
    return 0.5 * std::sqrt(s);
  }
};

}  // namespace detail

// Dividing Rectangles over the normalized box: evaluate the center, then
// repeatedly trisect potentially-optimal rectangles (epsilon-slack Pareto
// test on size vs value) along their longest sides until the evaluation
// budget runs out. Deterministic.
inline OptResult direct(const PoolObjective& objective, const Box& box, int budget,
                        double epsilon = 1e-4) {
  using detail::DirectRect;
  const Eigen::Index dim = box.lower.size();
  const Vector span = box.upper - box.lower;
  OptResult res;

  const auto eval_unit = [&](const Vector& u) {
    const Vector x = box.lower + u.cwiseProduct(span);
    ++res.evals_used;
    return objective(box.to_pool(x));
  };

  std::vector<DirectRect> rects;
  {
    DirectRect root;
    root.center = Vector::Constant(dim, 0.5);
    root.levels.assign(static_cast<size_t>(dim), 0);
    root.value = eval_unit(root.center);
    res.best_value = root.value;
    res.best_pool = box.to_pool(box.lower + root.center.cwiseProduct(span));
    res.trace.emplace_back(0, root.value);
    rects.push_back(std::move(root));
  }

  const auto note_best = [&](const Vector& u, double v) {
    if (v > res.best_value) {
      res.best_value = v;
      res.best_pool = box.to_pool(box.lower + u.cwiseProduct(span));
      res.trace.emplace_back(res.evals_used - 1, v);
    }
  };

  while (res.evals_used < budget) {
    // Potentially optimal rects: for each size class take the best value,
    // then keep those passing the epsilon-slack lower-bound test. Internally
    // phrased on minimization values f = -value.
    std::vector<std::pair<double, size_t>> classes;  // (size, argbest index)
    for (size_t i = 0; i < rects.size(); ++i) {
      const double sz = rects[i].size();
      bool found = false;
      for (auto& c : classes) {
        if (std::abs(c.first - sz) < 1e-13) {
          if (rects[i].value > rects[c.second].value) c.second = i;
          found = true;
          break;
        }
      }
      if (!found) classes.emplace_back(sz, i);
    }
    std::sort(classes.begin(), classes.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    const double fmin = -res.best_value;
    std::vector<size_t> selected;
    for (size_t ci = 0; ci < classes.size(); ++ci) {
      const auto [dj, j] = classes[ci];
      const double fj = -rects[j].value;
      double max_lb = -std::numeric_limits<double>::infinity();
      for (size_t a = 0; a < ci; ++a)
        max_lb = std::max(max_lb, (fj + rects[classes[a].second].value) /
                                      (dj - classes[a].first));
      double min_ub = std::numeric_limits<double>::infinity();
      for (size_t a = ci + 1; a < classes.size(); ++a)
        min_ub = std::min(min_ub, (-rects[classes[a].second].value - fj) /
                                      (classes[a].first - dj));
      if (max_lb > min_ub + 1e-13) continue;
      if (std::isfinite(min_ub)) {
        const double slack = std::abs(fmin) > 0.0 ? epsilon * std::abs(fmin) : 1e-8;
        if (fj - min_ub * dj > fmin - slack) continue;
      }
      selected.push_back(j);
    }
    if (selected.empty()) selected.push_back(classes.back().second);

    bool out_of_budget = false;
    for (size_t j : selected) {
      if (res.evals_used >= budget) { out_of_budget = true; break; }
      DirectRect& rect = rects[j];
      const int tmin = *std::min_element(rect.levels.begin(), rect.levels.end());
      std::vector<Eigen::Index> long_dims;
      for (Eigen::Index i = 0; i < dim; ++i)
        if (rect.levels[static_cast<size_t>(i)] == tmin) long_dims.push_back(i);

      struct Probe {
        Eigen::Index dim;
        double v_plus, v_minus;
        Vector c_plus, c_minus;
        double best() const { return std::max(v_plus, v_minus); }
      };
      std::vector<Probe> probes;
      const double delta = std::pow(3.0, -(tmin + 1));
      for (Eigen::Index i : long_dims) {
        if (res.evals_used + 2 > budget) { out_of_budget = true; break; }
        Probe p;
        p.dim = i;
        p.c_plus = rect.center;
        p.c_plus(i) += delta;
        p.c_minus = rect.center;
        p.c_minus(i) -= delta;
        p.v_plus = eval_unit(p.c_plus);
        note_best(p.c_plus, p.v_plus);
        p.v_minus = eval_unit(p.c_minus);
        note_best(p.c_minus, p.v_minus);
        probes.push_back(std::move(p));
      }
      // Divide the dimension with the best probe first; children along later
      // dimensions inherit the earlier trisections.
      std::stable_sort(probes.begin(), probes.end(),
                       [](const Probe& a, const Probe& b) { return a.best() > b.best(); });
      for (const Probe& p : probes) {
        rect.levels[static_cast<size_t>(p.dim)] += 1;
        DirectRect child_plus{p.c_plus, rect.levels, p.v_plus};
        DirectRect child_minus{p.c_minus, rect.levels, p.v_minus};
        rects.push_back(std::move(child_plus));
        rects.push_back(std::move(child_minus));
      }
      if (out_of_budget) break;
    }
    if (out_of_budget) break;
  }
  return res;
}

namespace detail {

struct LbfgsHistory {
  std::deque<std::pair<Vector, Vector>> pairs;  // (s, y)
  int memory;

  explicit LbfgsHistory(int m) : memory(m) {}

  void push(const Vector& s, const Vector& y) {
    if (static_cast<int>(pairs.size()) == memory) pairs.pop_front();
    pairs.emplace_back(s, y);
  }

  // Two-loop recursion: approximates H * g.
  Vector apply(const Vector& g) const {
    Vector q = g;
    std::vector<double> alpha(pairs.size());
    for (size_t i = pairs.size(); i-- > 0;) {
      const auto& [s, y] = pairs[i];
      const double rho = 1.0 / y.dot(s);
      alpha[i] = rho * s.dot(q);
      q -= alpha[i] * y;
    }
    if (!pairs.empty()) {
      const auto& [s, y] = pairs.back();
      q *= s.dot(y) / y.dot(y);
    }
    for (size_t i = 0; i < pairs.size(); ++i) {
      const auto& [s, y] = pairs[i];
      const double rho = 1.0 / y.dot(s);
      const double beta = rho * y.dot(q);
      q += (alpha[i] - beta) * s;
    }
    return q;
  }
};

}  // namespace detail

// Projected limited-memory BFGS for box-constrained maximization of a
// deterministic objective (fixed base samples). Per start: two-loop L-BFGS
// directions with active bounds zeroed, a strong-Wolfe line search capped at
// the feasible segment, and the gradient-projection stopping test
// max|x - clamp(x - g)| < 1e-6. A failed line search ends that start with
// its best iterate kept.
inline OptResult lbfgs_box(const PoolObjectiveWithGrad& objective_with_grad,
                           const std::vector<Pool>& starts, const Box& box,
                           int max_iters, int memory = 10) {
  OptResult res;
  const double c1 = 1e-4, c2 = 0.9;
  const double pg_tol = 1e-6;

  const auto eval = [&](const Vector& x) {
    auto [v, g] = objective_with_grad(box.to_pool(x));
    ++res.evals_used;
    // flatten gradient, negate: internally we minimize F = -value
    Vector gf(x.size());
    for (int j = 0; j < box.q; ++j)
      gf.segment(j * box.d, box.d) = -g.row(j).transpose();
    return std::make_pair(-v, gf);
  };

  long step_counter = 0;
  for (const Pool& start : starts) {
    Vector x = box.clamp(box.flatten(start));
    auto [f, g] = eval(x);
    double best_f = f;
    Vector best_x = x;
    res.trace.emplace_back(step_counter++, -f);
    detail::LbfgsHistory history(memory);

    for (int iter = 0; iter < max_iters; ++iter) {
      const Vector pg = x - box.clamp(x - g);
      if (pg.cwiseAbs().maxCoeff() < pg_tol) break;

      Vector dir = -history.apply(g);
      // zero direction components pushing out of active bounds
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        if ((x(i) <= box.lower(i) && dir(i) < 0.0) ||
            (x(i) >= box.upper(i) && dir(i) > 0.0))
          dir(i) = 0.0;
      }
      double dg = dir.dot(g);
      if (!(dg < -1e-14 * dir.norm() * g.norm()) || !dir.allFinite()) {
        dir = -pg;  // steepest-descent restart
        history.pairs.clear();
        dg = dir.dot(g);
        if (!(dg < 0.0)) break;  // fully blocked
      }

      // largest feasible step along dir
      double a_max = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (dir(i) > 0.0) a_max = std::min(a_max, (box.upper(i) - x(i)) / dir(i));
        else if (dir(i) < 0.0) a_max = std::min(a_max, (box.lower(i) - x(i)) / dir(i));
      }
      if (!(a_max > 0.0)) break;

      // strong-Wolfe bracketing line search on phi(a) = F(x + a dir)
      const double phi0 = f, dphi0 = dg;
      double a_prev = 0.0, phi_prev = phi0;
      double a = std::min(1.0, a_max);
      double a_acc = -1.0, phi_acc = 0.0;
      Vector g_acc;
      bool failed = false;
      Vector x_trial;
      for (int ls = 0; ls < 20; ++ls) {
        x_trial = box.clamp(x + a * dir);
        auto [phi, g_trial] = eval(x_trial);
        const double dphi = g_trial.dot(dir);
        bool zoom = false;
        double zlo = 0.0, zhi = 0.0, philo = 0.0;
        if (phi > phi0 + c1 * a * dphi0 || (ls > 0 && phi >= phi_prev)) {
          zlo = a_prev; philo = phi_prev; zhi = a; zoom = true;
        } else if (std::abs(dphi) <= -c2 * dphi0) {
          a_acc = a; phi_acc = phi; g_acc = g_trial;
          break;
        } else if (dphi >= 0.0) {
          zlo = a; philo = phi; zhi = a_prev; zoom = true;
        }
        if (zoom) {
          for (int zi = 0; zi < 24; ++zi) {
            const double am = 0.5 * (zlo + zhi);
            x_trial = box.clamp(x + am * dir);
            auto [phim, gm] = eval(x_trial);
            const double dphim = gm.dot(dir);
            if (phim > phi0 + c1 * am * dphi0 || phim >= philo) {
              zhi = am;
            } else {
              if (std::abs(dphim) <= -c2 * dphi0) {
                a_acc = am; phi_acc = phim; g_acc = gm;
                break;
              }
              if (dphim * (zhi - zlo) >= 0.0) zhi = zlo;
              zlo = am; philo = phim;
            }
            if (std::abs(zhi - zlo) < 1e-14 * std::max(1.0, std::abs(zlo))) break;
          }
          if (a_acc < 0.0 && philo < phi0 + c1 * zlo * dphi0 && zlo > 0.0) {
            // settle for the Armijo point found while zooming
            a_acc = zlo;
            x_trial = box.clamp(x + zlo * dir);
            auto [phz, gz] = eval(x_trial);
            phi_acc = phz; g_acc = gz;
          }
          break;
        }
        if (a >= a_max) {
          // boundary hit while still descending: accept if Armijo holds
          if (phi <= phi0 + c1 * a * dphi0) { a_acc = a; phi_acc = phi; g_acc = g_trial; }
          break;
        }
        a_prev = a; phi_prev = phi;
        a = std::min(2.0 * a, a_max);
      }
      if (a_acc <= 0.0) failed = true;

      if (failed) {
        ++res.line_search_failures;
        break;
      }
      const Vector x_new = box.clamp(x + a_acc * dir);
      const Vector s = x_new - x;
      const Vector yv = g_acc - g;
      if (s.dot(yv) > 1e-10 * s.norm() * yv.norm()) history.push(s, yv);
      x = x_new;
      f = phi_acc;
      g = g_acc;
      if (f < best_f) { best_f = f; best_x = x; }
      res.trace.emplace_back(step_counter++, -f);
    }

    if (-best_f > res.best_value) {
      res.best_value = -best_f;
      res.best_pool = box.to_pool(best_x);
    }
  }
  return res;
}

// Adam ascent with projection onto the box after every step. The final
// candidate of each start is re-scored with the supplied deterministic
// scorer (a high-sample fixed-Z estimate), and the best re-scored candidate
// wins.
inline OptResult adam_box(const StochasticPoolGrad& stochastic_grad,
                          const PoolObjective& rescore,
                          const std::vector<Pool>& starts, const Box& box,
                          int steps, double lr) {
  OptResult res;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  long step_counter = 0;
  for (const Pool& start : starts) {
    Vector x = box.clamp(box.flatten(start));
    Vector m = Vector::Zero(x.size());
    Vector v = Vector::Zero(x.size());
    for (int t = 1; t <= steps; ++t) {
      auto [val, grad] = stochastic_grad(box.to_pool(x), t);
      (void)val;
      ++res.evals_used;
      Vector gf(x.size());
      for (int j = 0; j < box.q; ++j)
        gf.segment(j * box.d, box.d) = grad.row(j).transpose();
      m = b1 * m + (1.0 - b1) * gf;
      v = b2 * v + (1.0 - b2) * gf.cwiseProduct(gf);
      const double mc = 1.0 - std::pow(b1, t);
      const double vc = 1.0 - std::pow(b2, t);
      const Vector step =
          (m / mc).cwiseQuotient(((v / vc).cwiseSqrt().array() + eps).matrix());
      x = box.clamp(x + lr * step);
    }
    const double score = rescore(box.to_pool(x));
    ++res.evals_used;
    res.trace.emplace_back(step_counter++, score);
    if (score > res.best_value) {
      res.best_value = score;
      res.best_pool = box.to_pool(x);
    }
  }
  return res;
}

// Boltzmann-weighted start selection: score a uniform candidate set with a
// cheap estimate, then sample n_starts without replacement with probability
// proportional to exp(value / T), T the sample standard deviation of the
// scores (1 when degenerate). Flat surfaces degrade to uniform sampling.
inline std::vector<Pool> multistart_init(const PoolObjective& cheap_objective,
                                         const Box& box, int n_candidates,
                                         int n_starts, std::uint64_t seed) {
  if (n_starts > n_candidates)
    throw DimensionMismatch("multistart_init: n_starts > n_candidates");
  Rng rng(seed);
  std::vector<Vector> xs;
  xs.reserve(static_cast<size_t>(n_candidates));
  Vector scores(n_candidates);
  for (int i = 0; i < n_candidates; ++i) {
    xs.push_back(box.sample(rng));
    scores(i) = cheap_objective(box.to_pool(xs.back()));
  }
  const double mean = scores.mean();
  double temp = n_candidates > 1
                    ? std::sqrt((scores.array() - mean).square().sum() /
                                (n_candidates - 1))
                    : 0.0;
  if (!(temp > 1e-12) || !std::isfinite(temp)) temp = 1.0;
  const double smax = scores.maxCoeff();
  std::vector<double> weights(static_cast<size_t>(n_candidates));
  for (int i = 0; i < n_candidates; ++i)
    weights[static_cast<size_t>(i)] = std::exp((scores(i) - smax) / temp);

  std::vector<Pool> out;
  out.reserve(static_cast<size_t>(n_starts));
  std::vector<int> remaining(static_cast<size_t>(n_candidates));
  std::iota(remaining.begin(), remaining.end(), 0);
  for (int pick = 0; pick < n_starts; ++pick) {
    double total = 0.0;
    for (int idx : remaining) total += weights[static_cast<size_t>(idx)];
    double u = rng.uniform() * total;
    size_t chosen = remaining.size() - 1;
    for (size_t r = 0; r < remaining.size(); ++r) {
      u -= weights[static_cast<size_t>(remaining[r])];
      if (u <= 0.0) { chosen = r; break; }
    }
    out.push_back(box.to_pool(xs[static_cast<size_t>(remaining[chosen])]));
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(chosen));
  }
  return out;
}

}  // namespace qbo
