#pragma once

#include "lcgp/curve_models.hpp"
#include "lcgp/detail/bfgs.hpp"
#include "lcgp/detail/parallel.hpp"
#include "lcgp/errors.hpp"
#include "lcgp/gp_core.hpp"
#include "lcgp/math_stats.hpp"
#include "lcgp/priors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace lcgp {

//! Box from which a start value is drawn; log-uniform when `log_scale`.
struct InitRange
{
  double lo = 0.0;
  double hi = 1.0;
  bool log_scale = false;

  double draw(Rng& rng) const
  {
    const double u = rng.uniform01();
    if (log_scale)
      return lo * std::pow(hi / lo, u);
    return lo + (hi - lo) * u;
  }
};

struct FitConfig
{
  int n_starts = 16;
  int max_iters = 500;
  double convergence_tol = 1e-9;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  //! When set, (tau, sigma, lambda, epsilon) stay fixed and only theta is fitted.
  std::optional<Eta> frozen_eta;

  InitRange pow_theta1{ 1e-2, 10.0, true };
  InitRange pow_theta2{ -1.0, 0.0, false };
  InitRange arc_theta1{ 1e-4, 1.0, true };
  InitRange arc_theta2{ 0.0, 3.0, false };

  void validate() const
  {
    if (n_starts < 1)
      throw InvalidParams("n_starts must be >= 1");
    if (max_iters < 1)
      throw InvalidParams("max_iters must be >= 1");
    if (!(convergence_tol > 0.0))
      throw InvalidParams("convergence_tol must be > 0");
  }
};

//! Outcome of one local search.
struct StartRecord
{
  double initial_objective = -kInf;
  double final_objective = -kInf;
  int iterations = 0;
  bool failed = true;
};

struct FittedModel
{
  CurveDataset data;
  MeanFamily family = MeanFamily::PowerLaw;
  ModelParams params_hat;
  PriorConfig prior_cfg;
  double objective_value = -kInf;
  std::vector<StartRecord> optimizer_trace;
  std::uint64_t seed = 0;
};

struct DeterministicFit
{
  MeanFamily family = MeanFamily::PowerLaw;
  MeanParams mean_params;
  double sse = 0.0;
};

namespace detail {

inline double sigmoid(double z)
{
  if (z >= 0.0)
    return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double logit_between(double v, double lo, double hi)
{
  return std::log((v - lo) / (hi - v));
}

} // namespace detail

//! Map between constrained model parameters and an unconstrained vector z.
//! Positive quantities use log, power-law theta2 a sigmoid onto (-1, 0),
//! epsilon a sigmoid onto (eps_lo, eps_hi). Layout of z:
//!   [theta1, theta2, epsilon, sigma, lambda, tau]  (first two only when eta is frozen)
class Reparameterization
{
public:
  Reparameterization(MeanFamily family,
                     double eps_lo,
                     double eps_hi,
                     std::optional<Eta> frozen = std::nullopt)
    : family_(family)
    , eps_lo_(eps_lo)
    , eps_hi_(eps_hi)
    , frozen_(frozen)
  {}

  Eigen::Index dim() const { return frozen_ ? 2 : 6; }
  MeanFamily family() const { return family_; }

  ModelParams to_params(const Eigen::VectorXd& z) const
  {
    ModelParams p;
    p.family = family_;
    p.mean.theta1 = std::exp(z[0]);
    p.mean.theta2 = family_ == MeanFamily::PowerLaw ? -1.0 + detail::sigmoid(z[1]) : std::exp(z[1]);
    if (frozen_) {
      p.mean.epsilon = frozen_->epsilon;
      p.kernel = { frozen_->sigma, frozen_->lambda };
      p.tau = frozen_->tau;
    } else {
      p.mean.epsilon = eps_lo_ + (eps_hi_ - eps_lo_) * detail::sigmoid(z[2]);
      p.kernel = { std::exp(z[3]), std::exp(z[4]) };
      p.tau = std::exp(z[5]);
    }
    return p;
  }

  //! Requires every parameter strictly inside its constraint set.
  Eigen::VectorXd to_unconstrained(const ModelParams& p) const
  {
    Eigen::VectorXd z(dim());
    z[0] = std::log(p.mean.theta1);
    z[1] = family_ == MeanFamily::PowerLaw ? detail::logit_between(p.mean.theta2, -1.0, 0.0)
                                           : std::log(p.mean.theta2);
    if (!frozen_) {
      z[2] = detail::logit_between(p.mean.epsilon, eps_lo_, eps_hi_);
      z[3] = std::log(p.kernel.sigma);
      z[4] = std::log(p.kernel.lambda);
      z[5] = std::log(p.tau);
    }
    return z;
  }

  //! d(constrained)/dz for each coordinate, in the layout of z.
  Eigen::VectorXd jacobian_diagonal(const Eigen::VectorXd& z) const
  {
    Eigen::VectorXd j(dim());
    const ModelParams p = to_params(z);
    j[0] = p.mean.theta1;
    if (family_ == MeanFamily::PowerLaw) {
      const double s = detail::sigmoid(z[1]);
      j[1] = s * (1.0 - s);
    } else {
      j[1] = p.mean.theta2;
    }
    if (!frozen_) {
      const double s = detail::sigmoid(z[2]);
      j[2] = (eps_hi_ - eps_lo_) * s * (1.0 - s);
      j[3] = p.kernel.sigma;
      j[4] = p.kernel.lambda;
      j[5] = p.tau;
    }
    return j;
  }

private:
  MeanFamily family_;
  double eps_lo_;
  double eps_hi_;
  std::optional<Eta> frozen_;
};

namespace detail {

// keeps a draw off the exact constraint boundary so the transforms stay finite
inline double interior(double v, double a, double b)
{
  const double pad = 1e-9 * (b - a);
  return std::clamp(v, a + pad, b - pad);
}

inline MeanParams draw_theta(MeanFamily family, const FitConfig& cfg, Rng& rng)
{
  MeanParams m;
  if (family == MeanFamily::PowerLaw) {
    m.theta1 = cfg.pow_theta1.draw(rng);
    m.theta2 = interior(cfg.pow_theta2.draw(rng), -1.0, 0.0);
  } else {
    m.theta1 = cfg.arc_theta1.draw(rng);
    m.theta2 = std::max(cfg.arc_theta2.draw(rng), 1e-9);
  }
  return m;
}

// theta uniform over the init boxes, eta from the priors (or frozen)
inline ModelParams draw_start(MeanFamily family,
                              const PriorConfig& prior,
                              const FitConfig& cfg,
                              Rng& rng)
{
  ModelParams p;
  p.family = family;
  p.mean = draw_theta(family, cfg, rng);
  const auto [lo, hi] = prior.epsilon_support();
  p.mean.epsilon = interior(lo + (hi - lo) * rng.uniform01(), lo, hi);
  p.tau = std::max(trunc_normal_sample(prior.tau_prior, rng), 1e-8);
  p.kernel.sigma = std::max(trunc_normal_sample(prior.sigma_prior, rng), 1e-8);
  p.kernel.lambda = std::max(trunc_normal_sample(prior.lambda_prior, rng), 1e-8);
  if (cfg.frozen_eta) {
    p.mean.epsilon = cfg.frozen_eta->epsilon;
    p.kernel = { cfg.frozen_eta->sigma, cfg.frozen_eta->lambda };
    p.tau = cfg.frozen_eta->tau;
  }
  return p;
}

} // namespace detail

//! Negative MAP objective and its gradient in the unconstrained coordinates.
//! Returns +inf where the objective cannot be evaluated.
inline double negative_map_objective(const Eigen::VectorXd& z,
                                     Eigen::VectorXd& grad,
                                     const CurveDataset& data,
                                     const PriorConfig& prior,
                                     const Reparameterization& rp)
{
  grad.setZero(rp.dim());
  try {
    const ModelParams p = rp.to_params(z);
    const double lp = log_prior_eta(p.eta(), prior);
    if (!std::isfinite(lp))
      return kInf;
    const auto [lml, g] = log_marginal_likelihood_with_gradient(data, p);
    const Eta gp = log_prior_eta_gradient(p.eta(), prior);
    const Eigen::VectorXd jac = rp.jacobian_diagonal(z);
    grad[0] = -g.theta1 * jac[0];
    grad[1] = -g.theta2 * jac[1];
    if (rp.dim() == 6) {
      grad[2] = -(g.epsilon + gp.epsilon) * jac[2];
      grad[3] = -(g.sigma + gp.sigma) * jac[3];
      grad[4] = -(g.lambda + gp.lambda) * jac[4];
      grad[5] = -(g.tau + gp.tau) * jac[5];
    }
    const double v = -(lml + lp);
    return std::isfinite(v) ? v : kInf;
  } catch (const Error&) {
    return kInf;
  }
}

//! MAP estimate of (theta, eta) from n_starts local searches. The best final
//! objective wins; ties go to the lowest start index.
inline FittedModel fit_map(const CurveDataset& data,
                           MeanFamily family,
                           const PriorConfig& prior_cfg,
                           const FitConfig& fit_cfg)
{
  data.validate_curve();
  prior_cfg.validate();
  fit_cfg.validate();
  const auto [eps_lo, eps_hi] = prior_cfg.epsilon_support();
  if (fit_cfg.frozen_eta) {
    const Eta& e = *fit_cfg.frozen_eta;
    if (!(e.tau > 0.0 && e.sigma > 0.0 && e.lambda > 0.0) || e.epsilon < eps_lo || e.epsilon > eps_hi)
      throw InfeasibleError("frozen eta lies outside the prior support");
  }
  const Reparameterization rp(family, eps_lo, eps_hi, fit_cfg.frozen_eta);

  const auto n_starts = static_cast<std::size_t>(fit_cfg.n_starts);
  std::vector<StartRecord> trace(n_starts);
  std::vector<Eigen::VectorXd> solutions(n_starts);
  detail::BfgsOptions opt;
  opt.max_iters = fit_cfg.max_iters;
  opt.rel_tol = fit_cfg.convergence_tol;

  detail::parallel_for(n_starts, fit_cfg.threads, [&](std::size_t k) {
    Rng rng = Rng::derive(fit_cfg.seed, k);
    const ModelParams init = detail::draw_start(family, prior_cfg, fit_cfg, rng);
    const Eigen::VectorXd z0 = rp.to_unconstrained(init);
    auto fg = [&](const Eigen::VectorXd& z, Eigen::VectorXd& g) {
      return negative_map_objective(z, g, data, prior_cfg, rp);
    };
    Eigen::VectorXd g0;
    const double f0 = fg(z0, g0);
    StartRecord rec;
    rec.initial_objective = std::isfinite(f0) ? -f0 : -kInf;
    const auto res = detail::bfgs_minimize(fg, z0, opt);
    rec.iterations = res.iterations;
    if (std::isfinite(res.f)) {
      rec.final_objective = -res.f;
      rec.failed = false;
    }
    trace[k] = rec;
    solutions[k] = res.x;
  });

  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < n_starts; ++k) {
    if (trace[k].failed)
      continue;
    if (!best || trace[k].final_objective > trace[*best].final_objective)
      best = k;
  }
  if (!best)
    throw NumericalError("MAP fit failed: every start hit a factorization failure");

  FittedModel out;
  out.data = data;
  out.family = family;
  out.params_hat = rp.to_params(solutions[*best]);
  out.prior_cfg = prior_cfg;
  out.objective_value = map_objective(data, out.params_hat, prior_cfg);
  out.optimizer_trace = std::move(trace);
  out.seed = fit_cfg.seed;
  return out;
}

//! Least-squares "best-fit" mean curve with epsilon held fixed.
inline DeterministicFit fit_deterministic(const CurveDataset& data,
                                          MeanFamily family,
                                          double epsilon_fixed,
                                          const FitConfig& fit_cfg = {})
{
  data.validate_curve();
  fit_cfg.validate();
  if (!(epsilon_fixed >= 0.0 && epsilon_fixed < 1.0))
    throw InvalidParams("fixed epsilon must lie in [0,1)");
  const Reparameterization rp(family, 0.0, 1.0, Eta{ 1.0, 1.0, 1.0, epsilon_fixed });

  auto fg = [&](const Eigen::VectorXd& z, Eigen::VectorXd& g) {
    g.setZero(2);
    const ModelParams p = rp.to_params(z);
    if (!std::isfinite(p.mean.theta1) || !std::isfinite(p.mean.theta2))
      return kInf;
    double sse = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double x = data.sizes[i];
      const double m = family == MeanFamily::PowerLaw ? detail::mean_power_law_unchecked(x, p.mean)
                                                      : detail::mean_arctan_unchecked(x, p.mean);
      const double r = data.accuracies[i] - m;
      const auto dm = mean_gradient(x, family, p.mean);
      sse += r * r;
      g[0] -= 2.0 * r * dm[0];
      g[1] -= 2.0 * r * dm[1];
    }
    const Eigen::VectorXd jac = rp.jacobian_diagonal(z);
    g = g.cwiseProduct(jac);
    return std::isfinite(sse) ? sse : kInf;
  };

  detail::BfgsOptions opt;
  opt.max_iters = fit_cfg.max_iters;
  opt.rel_tol = fit_cfg.convergence_tol;
  opt.grad_tol = 1e-15;

  const auto n_starts = static_cast<std::size_t>(fit_cfg.n_starts);
  std::vector<detail::BfgsResult> results(n_starts);
  detail::parallel_for(n_starts, fit_cfg.threads, [&](std::size_t k) {
    Rng rng = Rng::derive(fit_cfg.seed, k);
    ModelParams init;
    init.family = family;
    init.mean = detail::draw_theta(family, fit_cfg, rng);
    results[k] = detail::bfgs_minimize(fg, rp.to_unconstrained(init), opt);
  });

  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < n_starts; ++k)
    if (std::isfinite(results[k].f) && (!best || results[k].f < results[*best].f))
      best = k;
  if (!best)
    throw NumericalError("least-squares fit failed for every start");

  DeterministicFit out;
  out.family = family;
  out.mean_params = rp.to_params(results[*best].x).mean;
  out.sse = results[*best].f;
  return out;
}

//! Predictive at the query sizes plus central intervals per requested level.
struct Extrapolation
{
  PredictiveDistribution predictive;
  std::vector<double> levels;
  //! intervals[q][l] = (lo, hi) for query q at levels[l]
  std::vector<std::vector<std::pair<double, double>>> intervals;
};

inline Extrapolation extrapolate(const FittedModel& model,
                                 std::span<const double> query_sizes,
                                 std::span<const double> levels = {})
{
  Extrapolation out;
  out.predictive = posterior_predictive(model.data, model.params_hat, query_sizes);
  out.levels.assign(levels.begin(), levels.end());
  out.intervals.resize(out.predictive.size());
  for (std::size_t q = 0; q < out.predictive.size(); ++q)
    for (double level : levels)
      out.intervals[q].push_back(out.predictive.central_interval(q, level));
  return out;
}

} // namespace lcgp
