#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qbo/optim.hpp"

namespace qbo {

// An approximate draw from the zero-mean SE-kernel GP prior, realized as a
// random trigonometric basis: f(x) = sum_j w_j cos(omega_j . x + b_j).
// Frequencies follow the kernel's spectral density, so the covariance of the
// induced random function converges to the kernel as m grows. Unlike a
// lazily conditioned exact draw, the record is analytic, differentiable, and
// cheap to re-evaluate, which lets the global maximum be estimated offline.
struct SyntheticTask {
  int dim = 1;
  int feature_count = 1024;
  Matrix frequencies;  // m x d
  Vector phases;       // m, uniform on [0, 2*pi)
  Vector weights;      // m, N(0, 1) scaled by sqrt(2*signal_variance/m)
  KernelParams params;
  std::uint64_t seed = 0;
  std::optional<double> estimated_max;
  Vector lower;  // domain, default unit box
  Vector upper;
};

inline SyntheticTask sample_task(int d, const KernelParams& params, int m,
                                 std::uint64_t seed) {
  SyntheticTask task;
  task.dim = d;
  task.feature_count = m;
  task.params = params;
  task.seed = seed;
  task.lower = Vector::Zero(d);
  task.upper = Vector::Ones(d);
  task.frequencies.resize(m, d);
  task.phases.resize(m);
  task.weights.resize(m);
  Rng rng(seed);
  for (int j = 0; j < m; ++j)
    for (int k = 0; k < d; ++k)
      task.frequencies(j, k) = rng.normal() / params.lengthscales(k);
  for (int j = 0; j < m; ++j)
    task.phases(j) = rng.uniform(0.0, 6.283185307179586476925286766559);
  const double scale = std::sqrt(2.0 * params.signal_variance / m);
  for (int j = 0; j < m; ++j) task.weights(j) = scale * rng.normal();
  return task;
}

inline double task_eval_point(const SyntheticTask& task, const Vector& x) {
  const Vector phase = task.frequencies * x + task.phases;
  return task.weights.dot(phase.array().cos().matrix());
}

// Noiseless observations for every row of X.
inline Vector task_eval(const SyntheticTask& task, const Matrix& X) {
  Vector y(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    y(i) = task_eval_point(task, X.row(i).transpose());
  return y;
}

inline Vector task_grad(const SyntheticTask& task, const Vector& x) {
  const Vector phase = task.frequencies * x + task.phases;
  const Vector coeff =
      (task.weights.array() * phase.array().sin()).matrix();  // -d cos
  return -task.frequencies.transpose() * coeff;
}

// Regret reference value: multistart projected L-BFGS on the analytic task
// with analytic gradients. Starts are drawn sequentially from one stream, so
// a larger restart count extends (never replaces) a smaller one.
inline double estimate_task_max(const SyntheticTask& task, int restarts,
                                std::uint64_t seed) {
  const Box box = Box::pool_space(1, task.lower, task.upper);
  Rng rng(seed);
  std::vector<Pool> starts;
  starts.reserve(static_cast<size_t>(restarts));
  for (int r = 0; r < restarts; ++r) starts.push_back(box.to_pool(box.sample(rng)));
  const PoolObjectiveWithGrad obj = [&task](const Pool& pool) {
    const Vector x = pool.X.row(0).transpose();
    Matrix g(1, task.dim);
    g.row(0) = task_grad(task, x).transpose();
    return std::make_pair(task_eval_point(task, x), g);
  };
  const OptResult res = lbfgs_box(obj, starts, box, /*max_iters=*/200);
  return res.best_value;
}

struct TrialEntry {
  int iteration = 0;
  Matrix pool;      // q x d evaluated this iteration
  Vector observed;  // q
  double best_so_far = 0.0;
  double wall_time_s = 0.0;
  bool fallback = false;  // proposal replaced by a uniform pool
};

struct TrialLog {
  std::uint64_t task_seed = 0;
  std::vector<TrialEntry> entries;
  std::string config_digest;
};

// One acquisition maximization. Exposed separately from bo_run so the
// benchmark driver and tests can exercise proposal logic directly.
inline Pool propose_pool(const FittedGp& gp, const AcquisitionSpec& spec,
                         const OptimizerConfig& opt, int q, std::uint64_t seed) {
  const Box box = Box::pool_space(q, gp.data().lower, gp.data().upper);
  const int qi = q;

  const auto value_objective = [&gp, &spec](const BaseSampleBlock& block) {
    return [&gp, &spec, &block](const Pool& pool) {
      AcquisitionSpec s = spec;
      s.n_samples = static_cast<int>(block.Z.rows());
      return estimate(s, posterior(gp, pool.X), block).first;
    };
  };

  switch (opt.kind) {
    case OptimizerKind::RS: {
      const auto block =
          BaseSampleBlock::draw(spec.n_samples, qi, derive_seed(seed, 1));
      return random_search(value_objective(block), box, opt.eval_budget,
                           derive_seed(seed, 2))
          .best_pool;
    }
    case OptimizerKind::DIRECT: {
      const auto block =
          BaseSampleBlock::draw(spec.n_samples, qi, derive_seed(seed, 1));
      return direct(value_objective(block), box, opt.eval_budget, opt.direct_epsilon)
          .best_pool;
    }
    case OptimizerKind::LBFGS: {
      const auto cheap_block = BaseSampleBlock::draw(32, qi, derive_seed(seed, 3));
      const auto starts =
          multistart_init(value_objective(cheap_block), box, opt.n_candidates,
                          opt.n_starts, derive_seed(seed, 4));
      // common random numbers: one fixed block per restart
      std::vector<Pool> finals;
      finals.reserve(starts.size());
      for (size_t r = 0; r < starts.size(); ++r) {
        const auto block = BaseSampleBlock::draw(spec.n_samples, qi,
                                                 derive_seed(seed, 5, r));
        AcquisitionSpec s = spec;
        const PoolObjectiveWithGrad grad_obj = [&gp, s, &block](const Pool& pool) {
          const AcqGradient ag = estimate_gradient(s, gp, pool, block);
          return std::make_pair(ag.value, ag.grad);
        };
        const OptResult one = lbfgs_box(grad_obj, {starts[r]}, box,
                                        opt.lbfgs_max_iters, opt.lbfgs_memory);
        finals.push_back(one.best_pool);
      }
      const auto rescore_block =
          BaseSampleBlock::draw(opt.rescore_samples, qi, derive_seed(seed, 6));
      const auto rescore = value_objective(rescore_block);
      double best = -std::numeric_limits<double>::infinity();
      const Pool* best_pool = &finals.front();
      for (const Pool& cand : finals) {
        const double v = rescore(cand);
        if (v > best) { best = v; best_pool = &cand; }
      }
      return *best_pool;
    }
    case OptimizerKind::ADAM: {
      const auto cheap_block = BaseSampleBlock::draw(32, qi, derive_seed(seed, 3));
      const auto starts =
          multistart_init(value_objective(cheap_block), box, opt.n_candidates,
                          opt.n_starts, derive_seed(seed, 4));
      const auto rescore_block =
          BaseSampleBlock::draw(opt.rescore_samples, qi, derive_seed(seed, 6));
      const auto rescore = value_objective(rescore_block);
      OptResult best;
      for (size_t r = 0; r < starts.size(); ++r) {
        const std::uint64_t stream = derive_seed(seed, 7, r);
        AcquisitionSpec s = spec;
        s.n_samples = opt.minibatch;
        const StochasticPoolGrad sg = [&gp, s, qi, stream](const Pool& pool, int step) {
          const auto block =
              BaseSampleBlock::draw(s.n_samples, qi, derive_seed(stream, step),
                                    SamplePolicy::RESAMPLED);
          const AcqGradient ag = estimate_gradient(s, gp, pool, block);
          return std::make_pair(ag.value, ag.grad);
        };
        const OptResult one = adam_box(sg, rescore, {starts[r]}, box, opt.sgd_steps,
                                       opt.learning_rate);
        if (one.best_value > best.best_value) best = one;
      }
      return best.best_pool;
    }
  }
  throw ConfigError("propose_pool: unknown optimizer kind");
}

// The synchronous BO loop: q uniform initial observations, then
// (total_evals/q - 1) rounds of fit / maximize acquisition / evaluate.
// alpha for EI and PI tracks the best observed output. A NotPositiveDefinite
// raised at proposal time falls back to one uniform pool (flagged).
inline TrialLog bo_run(const SyntheticTask& task, const AcquisitionSpec& spec,
                       const OptimizerConfig& opt, int q, int total_evals,
                       std::uint64_t seed) {
  if (total_evals % q != 0)
    throw ConfigError("bo_run: total_evals must be divisible by q");
  using clock = std::chrono::steady_clock;
  TrialLog log;
  log.task_seed = task.seed;

  const Box box = Box::pool_space(q, task.lower, task.upper);
  Rng init_rng(derive_seed(seed, 0xa11));
  Matrix inputs(0, task.dim);
  Vector outputs(0);
  double best = -std::numeric_limits<double>::infinity();

  const auto append_batch = [&](int iteration, const Matrix& X, bool fallback,
                                const clock::time_point& t0) {
    const Vector y = task_eval(task, X);
    const Eigen::Index n0 = inputs.rows();
    inputs.conservativeResize(n0 + X.rows(), Eigen::NoChange);
    inputs.bottomRows(X.rows()) = X;
    outputs.conservativeResize(n0 + y.size());
    outputs.tail(y.size()) = y;
    best = std::max(best, y.maxCoeff());
    TrialEntry entry;
    entry.iteration = iteration;
    entry.pool = X;
    entry.observed = y;
    entry.best_so_far = best;
    entry.fallback = fallback;
    entry.wall_time_s =
        std::chrono::duration<double>(clock::now() - t0).count();
    log.entries.push_back(std::move(entry));
  };

  {
    const auto t0 = clock::now();
    Matrix x0(q, task.dim);
    for (int j = 0; j < q; ++j)
      x0.row(j) = box.sample(init_rng).head(task.dim).transpose();
    append_batch(0, x0, false, t0);
  }

  const int rounds = total_evals / q - 1;
  for (int t = 1; t <= rounds; ++t) {
    const auto t0 = clock::now();
    Dataset data{inputs, outputs, task.lower, task.upper};
    AcquisitionSpec spec_t = spec;
    if (spec.family == Family::EI || spec.family == Family::PI)
      spec_t.alpha = best;
    Matrix proposal;
    bool fallback = false;
    try {
      const FittedGp gp(std::move(data), task.params);
      proposal = propose_pool(gp, spec_t, opt, q, derive_seed(seed, 0xb0, t)).X;
    } catch (const NotPositiveDefinite&) {
      fallback = true;
      Rng fb(derive_seed(seed, 0xfb, t));
      proposal.resize(q, task.dim);
      for (int j = 0; j < q; ++j)
        proposal.row(j) = box.sample(fb).head(task.dim).transpose();
    }
    append_batch(t, proposal, fallback, t0);
  }
  return log;
}

// Per entry: (cumulative evaluations, log10(task_max - best_so_far + floor)).
// The 1e-9 floor keeps exact hits finite.
inline std::vector<std::pair<int, double>> regret_curve(const TrialLog& log,
                                                        double task_max) {
  std::vector<std::pair<int, double>> curve;
  curve.reserve(log.entries.size());
  for (const TrialEntry& entry : log.entries) {
    if (entry.best_so_far > task_max)
      throw InconsistentMax("regret_curve: observation exceeds task_max");
    const int evals = static_cast<int>(entry.observed.size()) * (entry.iteration + 1);
    curve.emplace_back(evals, std::log10(task_max - entry.best_so_far + 1e-9));
  }
  return curve;
}

}  // namespace qbo
