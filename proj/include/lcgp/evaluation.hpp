#pragma once

#include "lcgp/errors.hpp"
#include "lcgp/gp_core.hpp"
#include "lcgp/math_stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

namespace lcgp {

namespace detail {

inline void check_same_length(std::span<const double> a, std::span<const double> b)
{
  if (a.size() != b.size())
    throw DomainError("metric inputs differ in length");
  if (a.empty())
    throw DomainError("metric inputs are empty");
}

} // namespace detail

inline double rmse(std::span<const double> pred_means, std::span<const double> observed)
{
  detail::check_same_length(pred_means, observed);
  double s = 0.0;
  for (std::size_t i = 0; i < pred_means.size(); ++i) {
    const double r = pred_means[i] - observed[i];
    s += r * r;
  }
  return std::sqrt(s / static_cast<double>(pred_means.size()));
}

inline double mae(std::span<const double> pred_means, std::span<const double> observed)
{
  detail::check_same_length(pred_means, observed);
  double s = 0.0;
  for (std::size_t i = 0; i < pred_means.size(); ++i)
    s += std::abs(pred_means[i] - observed[i]);
  return s / static_cast<double>(pred_means.size());
}

//! P(Y in (y_star - delta, y_star + delta)) under the truncated predictive.
inline double quantized_likelihood(const TruncNormalParams& pred, double y_star, double delta = 0.01)
{
  if (!(delta > 0.0) || !std::isfinite(delta))
    throw DomainError("quantized likelihood needs delta > 0");
  if (!(y_star >= 0.0 && y_star <= 1.0))
    throw DomainError("observed accuracy outside [0,1]");
  return std::clamp(trunc_normal_mass(y_star - delta, y_star + delta, pred), 0.0, 1.0);
}

//! Same window mass under a uniform density on [y_min_train, y_max_task].
inline double uniform_baseline_likelihood(double y_min_train,
                                          double y_max_task,
                                          double y_star,
                                          double delta = 0.01)
{
  if (!(y_min_train < y_max_task))
    throw DomainError("uniform baseline needs y_min_train < y_max_task");
  if (!(delta > 0.0))
    throw DomainError("uniform baseline needs delta > 0");
  const double lo = std::max(y_star - delta, y_min_train);
  const double hi = std::min(y_star + delta, y_max_task);
  return hi > lo ? (hi - lo) / (y_max_task - y_min_train) : 0.0;
}

//! Highest-density interval of a truncated normal at probability `level`.
//! The density is unimodal with mode clamp(loc), so every superlevel set is
//! [loc - d, loc + d] clipped to the support; bisection finds the half-width d
//! whose set holds `level`. Interior endpoints therefore have equal density,
//! and the interval is anchored at a bound when the mode sits there.
inline std::pair<double, double> highest_density_interval(const TruncNormalParams& p, double level)
{
  p.validate();
  if (!(level > 0.0 && level < 1.0))
    throw DomainError("HDI level must lie in (0,1)");
  if (!std::isfinite(p.lower) || !std::isfinite(p.upper))
    throw DomainError("HDI requires a bounded support");

  auto set_of = [&](double d) {
    return std::pair{ std::max(p.lower, p.loc - d), std::min(p.upper, p.loc + d) };
  };
  auto mass_of = [&](double d) {
    const auto [a, b] = set_of(d);
    return a < b ? trunc_normal_mass(a, b, p) : 0.0;
  };

  double lo = std::max({ 0.0, p.lower - p.loc, p.loc - p.upper });
  double hi = std::max(std::abs(p.loc - p.lower), std::abs(p.upper - p.loc));
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    (mass_of(mid) < level ? lo : hi) = mid;
  }
  return set_of(hi);
}

//! Fraction of replicates inside the level-P highest-density interval.
inline double coverage(const TruncNormalParams& pred, std::span<const double> replicates, double level)
{
  if (replicates.empty())
    throw DomainError("coverage needs at least one replicate");
  if (!(level > 0.0 && level < 1.0))
    throw DomainError("coverage level must lie in (0,1)");
  const auto [a, b] = highest_density_interval(pred, level);
  const auto inside = std::count_if(replicates.begin(), replicates.end(),
                                    [&](double y) { return y >= a && y <= b; });
  return static_cast<double>(inside) / static_cast<double>(replicates.size());
}

//! Standard deviation of `metric_fn` over `rounds` resamples (with
//! replacement) of the per-seed values.
template <class T, class MetricFn>
double bootstrap_std(MetricFn&& metric_fn,
                     std::span<const T> per_seed_values,
                     std::size_t rounds,
                     Rng& rng)
{
  if (per_seed_values.size() < 2)
    throw DomainError("bootstrap needs at least two seeds");
  if (rounds < 2)
    throw DomainError("bootstrap needs at least two rounds");
  std::vector<double> stats;
  stats.reserve(rounds);
  std::vector<T> sample(per_seed_values.size());
  for (std::size_t r = 0; r < rounds; ++r) {
    for (auto& s : sample)
      s = per_seed_values[rng.uniform_index(per_seed_values.size())];
    stats.push_back(metric_fn(std::span<const T>(sample)));
  }
  const double mean = std::accumulate(stats.begin(), stats.end(), 0.0) / static_cast<double>(rounds);
  double ss = 0.0;
  for (double v : stats)
    ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(rounds));
}

// ---------------------------------------------------------------------------
// Reports

//! Heldout measurements at one size: a single value, or replicates.
struct EvalPoint
{
  double size = 0.0;
  std::vector<double> accuracies;

  double observed() const
  {
    return std::accumulate(accuracies.begin(), accuracies.end(), 0.0) /
           static_cast<double>(accuracies.size());
  }
};

struct EvalOptions
{
  double delta = 0.01;
  std::vector<double> levels{ 0.8, 0.95 };
  double y_min_train = 0.0;
  double y_max_task = 1.0;
};

struct MetricReport
{
  std::vector<double> sizes;
  std::vector<double> observed;
  std::vector<double> truncated_means;
  std::vector<double> untruncated_means;
  double rmse = 0.0;
  double mae = 0.0;
  double rmse_untruncated = 0.0;
  double mae_untruncated = 0.0;
  std::vector<double> quantized_likelihoods;
  std::vector<double> baseline_likelihoods;
  double mean_quantized_likelihood = 0.0;
  double mean_baseline_likelihood = 0.0;
  std::vector<double> levels;
  //! coverage_rates[i][l]; NaN where size i has fewer than two replicates
  std::vector<std::vector<double>> coverage_rates;
};

//! Error and quantized likelihood against the per-size mean accuracy, and
//! coverage of the individual replicates. `pred` must be queried at the
//! sizes of `points`, in order.
inline MetricReport evaluate(const PredictiveDistribution& pred,
                             std::span<const EvalPoint> points,
                             const EvalOptions& opt)
{
  if (points.empty())
    throw DomainError("evaluation needs at least one heldout point");
  if (pred.size() != points.size())
    throw DomainError("predictive and heldout points differ in length");
  MetricReport r;
  r.levels = opt.levels;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const EvalPoint& pt = points[i];
    if (pt.accuracies.empty())
      throw DomainError("heldout point without accuracies");
    const double y = pt.observed();
    r.sizes.push_back(pt.size);
    r.observed.push_back(y);
    r.truncated_means.push_back(pred.truncated_mean(i));
    r.untruncated_means.push_back(pred.mu[static_cast<Eigen::Index>(i)]);
    r.quantized_likelihoods.push_back(quantized_likelihood(pred.marginals[i], y, opt.delta));
    r.baseline_likelihoods.push_back(
      uniform_baseline_likelihood(opt.y_min_train, opt.y_max_task, y, opt.delta));
    std::vector<double> cov;
    for (double level : opt.levels)
      cov.push_back(pt.accuracies.size() >= 2 ? coverage(pred.marginals[i], pt.accuracies, level)
                                              : std::numeric_limits<double>::quiet_NaN());
    r.coverage_rates.push_back(std::move(cov));
  }
  r.rmse = rmse(r.truncated_means, r.observed);
  r.mae = mae(r.truncated_means, r.observed);
  r.rmse_untruncated = rmse(r.untruncated_means, r.observed);
  r.mae_untruncated = mae(r.untruncated_means, r.observed);
  const auto n = static_cast<double>(points.size());
  r.mean_quantized_likelihood =
    std::accumulate(r.quantized_likelihoods.begin(), r.quantized_likelihoods.end(), 0.0) / n;
  r.mean_baseline_likelihood =
    std::accumulate(r.baseline_likelihoods.begin(), r.baseline_likelihoods.end(), 0.0) / n;
  return r;
}

} // namespace lcgp
