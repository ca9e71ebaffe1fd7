#pragma once

#include "lcgp/detail/parallel.hpp"
#include "lcgp/errors.hpp"
#include "lcgp/math_stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <utility>
#include <vector>

namespace lcgp {

//! Uncertainty and asymptote parameters: noise tau, kernel sigma and lambda,
//! saturation gap epsilon.
struct Eta
{
  double tau = 0.0;
  double sigma = 0.0;
  double lambda = 0.0;
  double epsilon = 0.0;

  bool operator==(const Eta&) const = default;
};

//! Prior on tau. Places about three standard deviations at 0.03.
inline TruncNormalParams default_tau_prior()
{
  return { 0.0, 0.01, 0.0, kInf };
}

//! Prior on the log-space length scale, N[0,inf)(-1.23, 2.14^2).
inline TruncNormalParams default_lambda_prior()
{
  return { -1.23, 2.14, 0.0, kInf };
}

//! Support of the uniform prior on epsilon: [epsilon_min, 1 - y_best].
inline std::pair<double, double> epsilon_bounds(double y_best_observed, double epsilon_min)
{
  if (!(y_best_observed > 0.0 && y_best_observed < 1.0)) {
    std::ostringstream ss;
    ss << "best observed accuracy must lie in (0,1) (got " << y_best_observed << ")";
    throw DomainError(ss.str());
  }
  if (!(epsilon_min >= 0.0 && epsilon_min < 1.0)) {
    std::ostringstream ss;
    ss << "epsilon_min must lie in [0,1) (got " << epsilon_min << ")";
    throw DomainError(ss.str());
  }
  const double hi = 1.0 - y_best_observed;
  if (!(epsilon_min < hi)) {
    std::ostringstream ss;
    ss << "infeasible epsilon bounds: epsilon_min=" << epsilon_min
       << " is not below 1 - y_best_observed=" << hi << " (y_best_observed=" << y_best_observed
       << ")";
    throw InfeasibleError(ss.str());
  }
  return { epsilon_min, hi };
}

//! Hyperparameters of the four priors on (tau, sigma, lambda, epsilon).
struct PriorConfig
{
  TruncNormalParams tau_prior = default_tau_prior();
  //! Calibrated for W = 0.25 (y' = 0.7, max accuracy 0.95) with figure targets.
  TruncNormalParams sigma_prior{ 0.0125, 0.00601631, 0.0, kInf };
  TruncNormalParams lambda_prior = default_lambda_prior();
  double epsilon_min = 0.0;
  double y_best_observed = 0.5;

  void validate() const
  {
    for (const auto* p : { &tau_prior, &sigma_prior, &lambda_prior }) {
      p->validate();
      if (p->lower != 0.0 || p->upper != kInf)
        throw InvalidParams("tau, sigma and lambda priors must be supported on [0,inf)");
    }
    epsilon_bounds(y_best_observed, epsilon_min);
  }

  std::pair<double, double> epsilon_support() const
  {
    return epsilon_bounds(y_best_observed, epsilon_min);
  }

  bool operator==(const PriorConfig&) const = default;
};

//! log p(eta): three truncated normals plus a uniform on epsilon.
//! Returns -inf when any parameter leaves its support.
inline double log_prior_eta(const Eta& eta, const PriorConfig& cfg)
{
  cfg.validate();
  const auto [lo, hi] = cfg.epsilon_support();
  if (eta.epsilon < lo || eta.epsilon > hi)
    return -kInf;
  return trunc_normal_logpdf(eta.tau, cfg.tau_prior) +
         trunc_normal_logpdf(eta.sigma, cfg.sigma_prior) +
         trunc_normal_logpdf(eta.lambda, cfg.lambda_prior) - std::log(hi - lo);
}

//! Gradient of log_prior_eta with respect to (tau, sigma, lambda, epsilon)
//! inside the support.
inline Eta log_prior_eta_gradient(const Eta& eta, const PriorConfig& cfg)
{
  auto d = [](double v, const TruncNormalParams& p) { return -(v - p.loc) / (p.scale * p.scale); };
  return { d(eta.tau, cfg.tau_prior), d(eta.sigma, cfg.sigma_prior),
           d(eta.lambda, cfg.lambda_prior), 0.0 };
}

//! Length scale lambda at which the log-RBF correlation between x and r*x
//! equals `fraction`.
inline double solve_lambda_for_fraction(double r, double fraction)
{
  if (!(r > 1.0) || !std::isfinite(r))
    throw DomainError("solve_lambda_for_fraction: size ratio must exceed 1");
  if (!(fraction > 0.0 && fraction < 1.0))
    throw DomainError("solve_lambda_for_fraction: fraction must lie in (0,1)");
  return std::log(r) / std::sqrt(-2.0 * std::log(fraction));
}

// ---------------------------------------------------------------------------
// sigma-prior calibration

//! Which pair of fractions of W the 20th/80th percentiles of the window
//! w = 6 sqrt(tau^2 + sigma^2) should hit.
enum class PercentileTargets
{
  Figure,   //!< (W/4, W/2)
  Equation  //!< (W/2, 3W/4)
};

inline std::pair<double, double> target_fractions(PercentileTargets t)
{
  return t == PercentileTargets::Figure ? std::pair{ 0.25, 0.5 } : std::pair{ 0.5, 0.75 };
}

struct CalibrationTargets
{
  double width = 0.25;          //!< W = max accuracy - y_best_observed
  double pct_lo_target = 0.25;  //!< target for the 20th percentile, as a fraction of W
  double pct_hi_target = 0.5;   //!< target for the 80th percentile, as a fraction of W
  std::size_t mc_samples = 1'000'000;
  std::vector<double> mu_grid;
  std::vector<double> nu_grid;
  //! Candidates are first ranked on this many of the shared draws; the best
  //! `finalists` are then scored on all mc_samples.
  std::size_t screen_samples = 20'000;
  std::size_t finalists = 8;

  //! 41x41 grid: mu linear on [0, W], nu log-spaced on [1e-3, W].
  static CalibrationTargets make(double y_best_observed,
                                 double max_accuracy,
                                 PercentileTargets which = PercentileTargets::Figure,
                                 std::size_t mc_samples = 1'000'000)
  {
    if (!(max_accuracy > y_best_observed) || !(max_accuracy <= 1.0)) {
      std::ostringstream ss;
      ss << "max accuracy " << max_accuracy << " must exceed the best observed accuracy "
         << y_best_observed << " and be <= 1";
      throw InfeasibleError(ss.str());
    }
    CalibrationTargets t;
    t.width = max_accuracy - y_best_observed;
    std::tie(t.pct_lo_target, t.pct_hi_target) = target_fractions(which);
    t.mc_samples = mc_samples;
    constexpr int n = 41;
    const double nu_lo = std::min(1e-3, t.width / 10.0);
    for (int i = 0; i < n; ++i) {
      const double f = static_cast<double>(i) / (n - 1);
      t.mu_grid.push_back(t.width * f);
      t.nu_grid.push_back(nu_lo * std::pow(t.width / nu_lo, f));
    }
    return t;
  }

  void validate() const
  {
    if (!(width > 0.0))
      throw DomainError("calibration width W must be positive");
    if (!(0.0 < pct_lo_target && pct_lo_target < pct_hi_target && pct_hi_target < 1.0))
      throw DomainError("percentile targets must satisfy 0 < lo < hi < 1");
    if (mc_samples < 100'000)
      throw DomainError("calibration needs at least 1e5 Monte-Carlo samples");
    if (mu_grid.empty() || nu_grid.empty())
      throw DomainError("calibration grid is empty");
    for (double nu : nu_grid)
      if (!(nu > 0.0))
        throw DomainError("calibration grid scales must be positive");
    if (screen_samples == 0 || finalists == 0)
      throw DomainError("screen_samples and finalists must be positive");
  }

  double target_lo() const { return pct_lo_target * width; }
  double target_hi() const { return pct_hi_target * width; }
};

struct CalibrationResult
{
  TruncNormalParams sigma_prior;
  double achieved_lo = 0.0;  //!< 20th percentile of w
  double achieved_hi = 0.0;  //!< 80th percentile of w
  double target_lo = 0.0;
  double target_hi = 0.0;
  double loss = 0.0;
};

namespace detail {

struct WindowPercentiles
{
  double lo;
  double hi;
};

// 20th/80th nearest-rank percentiles of w = 6 sqrt(tau^2 + sigma^2) over the
// first n shared uniform draws.
inline WindowPercentiles window_percentiles(std::span<const double> tau_draws,
                                            std::span<const double> sigma_uniforms,
                                            const TruncNormalQuantile& sigma_q,
                                            std::size_t n,
                                            std::vector<double>& buffer)
{
  buffer.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = sigma_q(sigma_uniforms[i]);
    buffer[i] = 6.0 * std::sqrt(tau_draws[i] * tau_draws[i] + s * s);
  }
  const double lo = percentile_nearest_rank_inplace(buffer, 0.2);
  const double hi = percentile_nearest_rank_inplace(buffer, 0.8);
  return { lo, hi };
}

} // namespace detail

//! Grid search for the sigma prior N[0,inf)(mu, nu^2) whose implied window
//! w = 6 sqrt(tau^2 + sigma^2) has 20th/80th percentiles closest (in squared
//! error) to the targets. All candidates share the same uniform draws, so the
//! result is deterministic in `seed` regardless of `threads`.
inline CalibrationResult calibrate_sigma_prior(const TruncNormalParams& tau_prior,
                                               const CalibrationTargets& targets,
                                               std::uint64_t seed,
                                               unsigned threads = 1)
{
  targets.validate();
  tau_prior.validate();

  const std::size_t n = targets.mc_samples;
  std::vector<double> tau_draws(n);
  std::vector<double> sigma_uniforms(n);
  {
    Rng rng_tau = Rng::derive(seed, 0);
    Rng rng_sigma = Rng::derive(seed, 1);
    const TruncNormalQuantile tau_q(tau_prior);
    for (std::size_t i = 0; i < n; ++i) {
      tau_draws[i] = tau_q(rng_tau.uniform01());
      sigma_uniforms[i] = rng_sigma.uniform01();
    }
  }

  const double t_lo = targets.target_lo();
  const double t_hi = targets.target_hi();
  auto loss_of = [&](detail::WindowPercentiles w) {
    return (w.lo - t_lo) * (w.lo - t_lo) + (w.hi - t_hi) * (w.hi - t_hi);
  };

  const std::size_t n_mu = targets.mu_grid.size();
  const std::size_t n_cand = n_mu * targets.nu_grid.size();
  auto candidate = [&](std::size_t c) {
    return TruncNormalParams{ targets.mu_grid[c % n_mu], targets.nu_grid[c / n_mu], 0.0, kInf };
  };

  const std::size_t n_screen = std::min(n, targets.screen_samples);
  std::vector<double> screen_loss(n_cand);
  detail::parallel_for(n_cand, threads, [&](std::size_t c) {
    std::vector<double> buffer;
    const TruncNormalQuantile q(candidate(c));
    screen_loss[c] = loss_of(detail::window_percentiles(tau_draws, sigma_uniforms, q, n_screen, buffer));
  });

  std::vector<std::size_t> order(n_cand);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t n_final = std::min(targets.finalists, n_cand);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_final), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return screen_loss[a] < screen_loss[b] ||
                             (screen_loss[a] == screen_loss[b] && a < b);
                    });
  order.resize(n_final);

  std::vector<detail::WindowPercentiles> final_pct(n_final);
  detail::parallel_for(n_final, threads, [&](std::size_t k) {
    std::vector<double> buffer;
    const TruncNormalQuantile q(candidate(order[k]));
    final_pct[k] = detail::window_percentiles(tau_draws, sigma_uniforms, q, n, buffer);
  });

  std::size_t best = 0;
  for (std::size_t k = 1; k < n_final; ++k) {
    const double lk = loss_of(final_pct[k]);
    const double lb = loss_of(final_pct[best]);
    if (lk < lb || (lk == lb && order[k] < order[best]))
      best = k;
  }

  CalibrationResult out;
  out.sigma_prior = candidate(order[best]);
  out.achieved_lo = final_pct[best].lo;
  out.achieved_hi = final_pct[best].hi;
  out.target_lo = t_lo;
  out.target_hi = t_hi;
  out.loss = loss_of(final_pct[best]);
  return out;
}

} // namespace lcgp
