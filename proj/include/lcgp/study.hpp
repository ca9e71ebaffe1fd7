#pragma once

#include "lcgp/data_io.hpp"
#include "lcgp/detail/parallel.hpp"
#include "lcgp/evaluation.hpp"
#include "lcgp/fitting.hpp"
#include "lcgp/priors.hpp"
#include "lcgp/synthetic.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace lcgp {

//! Repeated synthetic pilot studies: each world draws a pilot curve and
//! heldout replicates from the same truth, calibrates the sigma prior from the
//! pilot, fits the GP and scores the heldout replicates.
struct CoverageStudyConfig
{
  SyntheticSpec truth; //!< family, truth, noise_tau and wiggle are used; sizes are not
  std::vector<double> pilot_sizes{ 60, 94, 147, 230, 360 };
  int pilot_seeds = 1;
  std::vector<double> heldout_sizes{ 5000, 10000, 20000 };
  int heldout_replicates = 20;
  int worlds = 100;
  std::vector<double> levels{ 0.5, 0.8, 0.95 };

  MeanFamily fit_family = MeanFamily::PowerLaw;
  double epsilon_min = 0.0;
  std::optional<double> max_accuracy; //!< defaults to 1 - epsilon_min
  PercentileTargets targets = PercentileTargets::Figure;
  std::size_t mc_samples = 100'000;
  std::size_t screen_samples = 5'000;
  FitConfig fit;
  double delta = 0.01;
  std::uint64_t master_seed = 0;
  unsigned threads = 1;
};

struct CoverageStudyReport
{
  std::vector<double> heldout_sizes;
  std::vector<double> levels;
  //! pooled over worlds: inside[i][l] / total[i]
  std::vector<std::vector<double>> coverage;
  std::vector<std::vector<std::size_t>> inside;
  std::vector<std::size_t> total;
  double mean_quantized_likelihood = 0.0;
  double mean_baseline_likelihood = 0.0;
  double mean_rmse = 0.0;
  int worlds = 0;
  int failed_worlds = 0;
  std::size_t clipped = 0;
};

namespace detail {

struct WorldOutcome
{
  bool ok = false;
  std::vector<std::vector<std::size_t>> inside; // [size][level]
  std::vector<std::size_t> total;
  double ql = 0.0;
  double baseline = 0.0;
  double rmse = 0.0;
  std::size_t clipped = 0;
};

inline WorldOutcome run_world(const CoverageStudyConfig& cfg, std::uint64_t world)
{
  WorldOutcome w;
  SyntheticSpec pilot = cfg.truth;
  pilot.sizes = cfg.pilot_sizes;
  pilot.seeds_per_size = cfg.pilot_seeds;
  pilot.master_seed = Rng::derive(cfg.master_seed, 4 * world).next();
  SyntheticSpec heldout = cfg.truth;
  heldout.sizes = cfg.heldout_sizes;
  heldout.seeds_per_size = cfg.heldout_replicates;
  heldout.master_seed = Rng::derive(cfg.master_seed, 4 * world + 1).next();

  const auto pilot_gen = generate(pilot);
  const auto held_gen = generate(heldout);
  w.clipped = pilot_gen.clipped + held_gen.clipped;
  const AggregatedCurve curve = aggregate_replicates(pilot_gen.table);
  const AggregatedCurve held = aggregate_replicates(held_gen.table);

  try {
    PriorConfig prior;
    prior.epsilon_min = cfg.epsilon_min;
    prior.y_best_observed = curve.curve.max_accuracy();
    const double max_acc = cfg.max_accuracy.value_or(1.0 - cfg.epsilon_min);
    auto targets = CalibrationTargets::make(prior.y_best_observed, max_acc, cfg.targets, cfg.mc_samples);
    targets.screen_samples = cfg.screen_samples;
    prior.sigma_prior =
      calibrate_sigma_prior(prior.tau_prior, targets, Rng::derive(cfg.master_seed, 4 * world + 2).next())
        .sigma_prior;

    FitConfig fit = cfg.fit;
    fit.seed = Rng::derive(cfg.master_seed, 4 * world + 3).next();
    fit.threads = 1;
    const FittedModel model = fit_map(curve.curve, cfg.fit_family, prior, fit);
    const auto pred = posterior_predictive(model.data, model.params_hat, held.curve.sizes);

    EvalOptions opt;
    opt.delta = cfg.delta;
    opt.levels = cfg.levels;
    opt.y_min_train = curve.curve.min_accuracy();
    opt.y_max_task = max_acc;
    const auto points = held.eval_points();
    const MetricReport rep = evaluate(pred, points, opt);
    w.ql = rep.mean_quantized_likelihood;
    w.baseline = rep.mean_baseline_likelihood;
    w.rmse = rep.rmse;

    for (std::size_t i = 0; i < points.size(); ++i) {
      std::vector<std::size_t> in_l;
      for (double level : cfg.levels) {
        const auto [a, b] = highest_density_interval(pred.marginals[i], level);
        std::size_t c = 0;
        for (double y : points[i].accuracies)
          c += (y >= a && y <= b) ? 1 : 0;
        in_l.push_back(c);
      }
      w.inside.push_back(std::move(in_l));
      w.total.push_back(points[i].accuracies.size());
    }
    w.ok = true;
  } catch (const Error&) {
    w.ok = false;
  }
  return w;
}

} // namespace detail

inline CoverageStudyReport run_coverage_study(const CoverageStudyConfig& cfg)
{
  if (cfg.worlds < 1)
    throw InvalidParams("coverage study needs at least one world");
  const auto n_worlds = static_cast<std::size_t>(cfg.worlds);
  std::vector<detail::WorldOutcome> outcomes(n_worlds);
  detail::parallel_for(n_worlds, cfg.threads,
                       [&](std::size_t w) { outcomes[w] = detail::run_world(cfg, w); });

  CoverageStudyReport r;
  r.heldout_sizes = cfg.heldout_sizes;
  r.levels = cfg.levels;
  r.worlds = cfg.worlds;
  const std::size_t n_sizes = cfg.heldout_sizes.size();
  r.inside.assign(n_sizes, std::vector<std::size_t>(cfg.levels.size(), 0));
  r.total.assign(n_sizes, 0);
  int ok = 0;
  for (const auto& w : outcomes) {
    r.clipped += w.clipped;
    if (!w.ok) {
      ++r.failed_worlds;
      continue;
    }
    ++ok;
    r.mean_quantized_likelihood += w.ql;
    r.mean_baseline_likelihood += w.baseline;
    r.mean_rmse += w.rmse;
    for (std::size_t i = 0; i < n_sizes; ++i) {
      r.total[i] += w.total[i];
      for (std::size_t l = 0; l < cfg.levels.size(); ++l)
        r.inside[i][l] += w.inside[i][l];
    }
  }
  if (ok > 0) {
    r.mean_quantized_likelihood /= ok;
    r.mean_baseline_likelihood /= ok;
    r.mean_rmse /= ok;
  }
  r.coverage.assign(n_sizes, std::vector<double>(cfg.levels.size(), 0.0));
  for (std::size_t i = 0; i < n_sizes; ++i)
    for (std::size_t l = 0; l < cfg.levels.size(); ++l)
      r.coverage[i][l] = r.total[i] ? static_cast<double>(r.inside[i][l]) / static_cast<double>(r.total[i]) : 0.0;
  return r;
}

} // namespace lcgp
