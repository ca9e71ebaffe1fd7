// lcgp: calibrate priors, fit, extrapolate, evaluate and simulate learning
// curves from the command line.
//
// Exit codes: 0 success, 1 usage or invalid argument, 2 unreadable or
// malformed input, 3 infeasible configuration, 4 numerical failure.

#include "lcgp/lcgp.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace {

using namespace lcgp;
using nlohmann::json;

constexpr std::uint64_t kCalibrationStream = 0xCA1B;

struct Common
{
  std::string input;
  std::string output;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

void add_seed_threads(CLI::App* cmd, Common& c)
{
  cmd->add_option("--seed", c.seed, "Random seed; identical inputs and seed give identical output")
    ->capture_default_str();
  cmd->add_option("--threads", c.threads, "Worker threads (0 = all available cores)")
    ->capture_default_str();
}

std::string join_levels(const std::vector<double>& levels)
{
  std::string s;
  for (std::size_t i = 0; i < levels.size(); ++i)
    s += (i ? "," : "") + format_double(levels[i]);
  return s;
}

void check_levels(const std::vector<double>& levels)
{
  if (levels.empty())
    throw InvalidParams("--levels needs at least one value");
  for (double l : levels)
    if (!(l > 0.0 && l < 1.0))
      throw InvalidParams("interval levels must lie in (0,1) (got " + format_double(l) + ")");
}

//! Explicit list, or "min,max,count" / "min,max,count,exclusive".
std::vector<double> resolve_sizes(const std::vector<double>& list, const std::string& log_spec, const char* what)
{
  if (!list.empty() && !log_spec.empty())
    throw InvalidParams(std::string("give either a size list or --log-spaced for ") + what);
  if (!list.empty()) {
    for (double s : list)
      if (!(s >= 1.0) || s != std::floor(s))
        throw InvalidParams("sizes must be positive integers (got " + format_double(s) + ")");
    return list;
  }
  if (log_spec.empty())
    throw InvalidParams(std::string("no sizes given for ") + what);
  const auto parts = detail::split_csv(log_spec);
  if (parts.size() != 3 && parts.size() != 4)
    throw InvalidParams("--log-spaced expects min,max,count[,exclusive]");
  SpacingMode mode = SpacingMode::InclusiveEndpoints;
  if (parts.size() == 4) {
    if (detail::trim(parts[3]) != "exclusive")
      throw InvalidParams("the fourth --log-spaced field must be 'exclusive'");
    mode = SpacingMode::ExclusiveStart;
  }
  long lo = 0, hi = 0, n = 0;
  try {
    lo = detail::parse_positive_int(parts[0], "min size", 0);
    hi = detail::parse_positive_int(parts[1], "max size", 0);
    n = detail::parse_positive_int(parts[2], "count", 0);
  } catch (const ParseError& e) {
    throw InvalidParams(std::string("--log-spaced: ") + e.what());
  }
  std::vector<std::string> warnings;
  const auto sizes = log_spaced_sizes(lo, hi, static_cast<int>(n), mode, &warnings);
  for (const auto& w : warnings)
    std::cerr << "lcgp: warning: " << w << '\n';
  return { sizes.begin(), sizes.end() };
}

//! Pilot rows: the "pilot" split when the table is tagged, else every row.
AggregatedCurve pilot_curve(const MeasurementTable& table)
{
  const MeasurementTable pilot = table.has_split ? table.filter_split("pilot") : table;
  if (pilot.rows.empty())
    throw DomainError("the measurement table has no pilot rows");
  AggregatedCurve c = aggregate_replicates(pilot);
  c.curve.validate_curve();
  return c;
}

PercentileTargets parse_targets(const std::string& s)
{
  return s == "equation" ? PercentileTargets::Equation : PercentileTargets::Figure;
}

struct CalibrationOptions
{
  double epsilon_min = 0.0;
  std::optional<double> max_accuracy;
  std::string targets = "figure";
  std::size_t mc_samples = 1'000'000;
};

void add_calibration_options(CLI::App* cmd, CalibrationOptions& o)
{
  cmd->add_option("--epsilon-min", o.epsilon_min, "Lower bound on the saturation gap epsilon")
    ->capture_default_str();
  cmd->add_option("--max-accuracy", o.max_accuracy, "Highest plausible accuracy (default 1 - epsilon-min)");
  cmd->add_option("--percentile-targets", o.targets,
                  "20th/80th percentile targets of the window: figure (W/4, W/2) or equation (W/2, 3W/4)")
    ->check(CLI::IsMember({ "figure", "equation" }))
    ->capture_default_str();
  cmd->add_option("--mc-samples", o.mc_samples, "Monte-Carlo samples for the sigma-prior search")
    ->capture_default_str();
}

struct Calibrated
{
  PriorConfig config;
  CalibrationResult result;
  double max_accuracy = 1.0;
};

Calibrated calibrate(double y_best, const CalibrationOptions& o, std::uint64_t seed, unsigned threads)
{
  epsilon_bounds(y_best, o.epsilon_min);
  Calibrated c;
  c.max_accuracy = o.max_accuracy.value_or(1.0 - o.epsilon_min);
  const auto targets = CalibrationTargets::make(y_best, c.max_accuracy, parse_targets(o.targets), o.mc_samples);
  c.result = calibrate_sigma_prior(default_tau_prior(), targets, seed, threads);
  c.config.sigma_prior = c.result.sigma_prior;
  c.config.epsilon_min = o.epsilon_min;
  c.config.y_best_observed = y_best;
  c.config.validate();
  return c;
}

Metadata calibration_metadata(const Calibrated& c, const CalibrationOptions& o, std::uint64_t seed)
{
  return { { "achieved_p20", format_double(c.result.achieved_lo) },
           { "achieved_p80", format_double(c.result.achieved_hi) },
           { "target_p20", format_double(c.result.target_lo) },
           { "target_p80", format_double(c.result.target_hi) },
           { "calibration_loss", format_double(c.result.loss) },
           { "max_accuracy", format_double(c.max_accuracy) },
           { "window_width", format_double(c.max_accuracy - c.config.y_best_observed) },
           { "percentile_targets", o.targets },
           { "mc_samples", std::to_string(o.mc_samples) },
           { "seed", std::to_string(seed) } };
}

// ---------------------------------------------------------------------------
// calibrate

struct CalibrateCmd
{
  Common c;
  CalibrationOptions cal;
  std::optional<double> y_best;
};

void run_calibrate(const CalibrateCmd& a)
{
  double y_best = 0.0;
  if (a.y_best)
    y_best = *a.y_best;
  else if (!a.c.input.empty())
    y_best = pilot_curve(read_measurements(a.c.input)).curve.max_accuracy();
  else
    throw InvalidParams("calibrate needs --y-best or --input");

  const Calibrated c = calibrate(y_best, a.cal, a.c.seed, a.c.threads);
  write_prior_config(c.config, calibration_metadata(c, a.cal, a.c.seed), a.c.output);
  std::cout << "sigma prior: loc " << format_double(c.result.sigma_prior.loc) << " scale "
            << format_double(c.result.sigma_prior.scale) << '\n'
            << "window percentiles: p20 " << format_double(c.result.achieved_lo) << " (target "
            << format_double(c.result.target_lo) << "), p80 " << format_double(c.result.achieved_hi)
            << " (target " << format_double(c.result.target_hi) << ")\n";
}

// ---------------------------------------------------------------------------
// fit

struct FitCmd
{
  Common c;
  CalibrationOptions cal;
  std::string mean = "pow";
  std::string prior;
  int starts = 16;
  int max_iters = 500;
};

void run_fit(const FitCmd& a)
{
  const AggregatedCurve pilot = pilot_curve(read_measurements(a.c.input));
  PriorConfig prior;
  if (!a.prior.empty()) {
    prior = read_prior_config(a.prior).config;
  } else {
    const std::uint64_t cal_seed = Rng::derive(a.c.seed, kCalibrationStream).next();
    prior = calibrate(pilot.curve.max_accuracy(), a.cal, cal_seed, a.c.threads).config;
  }

  FitConfig cfg;
  cfg.n_starts = a.starts;
  cfg.max_iters = a.max_iters;
  cfg.seed = a.c.seed;
  cfg.threads = a.c.threads;
  const FittedModel m = fit_map(pilot.curve, parse_mean_family(a.mean), prior, cfg);
  write_fitted_model(m, cfg, a.c.output);

  const auto& p = m.params_hat;
  std::cout << "family " << to_string(m.family) << "  objective " << format_double(m.objective_value) << '\n'
            << "theta1 " << format_double(p.mean.theta1) << "  theta2 " << format_double(p.mean.theta2)
            << "  epsilon " << format_double(p.mean.epsilon) << '\n'
            << "tau " << format_double(p.tau) << "  sigma " << format_double(p.kernel.sigma) << "  lambda "
            << format_double(p.kernel.lambda) << '\n';
}

// ---------------------------------------------------------------------------
// extrapolate

struct ExtrapolateCmd
{
  Common c;
  std::vector<double> sizes;
  std::string log_spaced;
  std::vector<double> levels{ 0.8, 0.95 };
  std::string curve;
  int curve_points = 200;
};

Metadata extrapolation_metadata(const FittedModel& m, const std::vector<double>& levels)
{
  return { { "mean_family", std::string(to_string(m.family)) },
           { "prior_hash", prior_config_hash(m.prior_cfg) },
           { "seed", std::to_string(m.seed) },
           { "truncation", "per-point marginals truncated to [0,1]" },
           { "intervals", "central (equal-tailed) intervals of the truncated marginal" },
           { "levels", join_levels(levels) } };
}

void run_extrapolate(const ExtrapolateCmd& a)
{
  check_levels(a.levels);
  const FittedModel m = read_fitted_model(a.c.input);
  const auto sizes = resolve_sizes(a.sizes, a.log_spaced, "extrapolate");
  const Metadata meta = extrapolation_metadata(m, a.levels);
  write_extrapolation(extrapolate(m, sizes, a.levels), meta, a.c.output);

  if (!a.curve.empty()) {
    if (a.curve_points < 2)
      throw InvalidParams("--curve-points must be >= 2");
    const double lo = std::log(m.data.sizes.front());
    const double hi = std::log(std::max(m.data.sizes.back(), *std::max_element(sizes.begin(), sizes.end())));
    std::vector<double> grid;
    for (int i = 0; i < a.curve_points; ++i)
      grid.push_back(std::exp(lo + (hi - lo) * i / (a.curve_points - 1)));
    write_extrapolation(extrapolate(m, grid, a.levels), meta, a.curve);
  }
  std::cout << "wrote " << sizes.size() << " rows to " << a.c.output << '\n';
}

// ---------------------------------------------------------------------------
// eval

struct EvalCmd
{
  Common c;
  std::string model;
  std::string predictions;
  double delta = 0.01;
  std::vector<double> levels{ 0.8, 0.95 };
  std::optional<double> max_accuracy;
  std::optional<double> y_min_train;
  std::size_t rounds = 500;
};

//! Predictive marginals at arbitrary sizes, from a fit or a written table.
struct Predictor
{
  std::optional<FittedModel> model;
  std::optional<ExtrapolationTable> table;

  PredictiveDistribution at(const std::vector<double>& sizes) const
  {
    if (model)
      return posterior_predictive(model->data, model->params_hat, sizes);
    PredictiveDistribution p;
    p.query_sizes = sizes;
    p.mu.resize(static_cast<Eigen::Index>(sizes.size()));
    p.sigma = Eigen::MatrixXd::Zero(p.mu.size(), p.mu.size());
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      const auto it = std::find(table->sizes.begin(), table->sizes.end(), sizes[i]);
      if (it == table->sizes.end())
        throw DomainError("the prediction table has no row for size " + format_double(sizes[i]));
      const auto k = static_cast<std::size_t>(it - table->sizes.begin());
      const auto e = static_cast<Eigen::Index>(i);
      p.mu[e] = table->mu[k];
      p.sigma(e, e) = table->sd[k] * table->sd[k];
      p.marginals.push_back(truncated_marginal(table->mu[k], p.sigma(e, e)));
    }
    return p;
  }
};

json nan_to_null(double v)
{
  return std::isfinite(v) ? json(v) : json(nullptr);
}

//! Metric recomputed on a resample of seed ids: sizes with no sampled seed
//! are dropped.
struct SeedResample
{
  const AggregatedCurve& held;
  const PredictiveDistribution& pred;
  double delta;

  std::array<double, 3> operator()(std::span<const std::string> seeds) const
  {
    std::map<std::string, int> mult;
    for (const auto& s : seeds)
      ++mult[s];
    std::vector<double> means, obs, ql;
    for (std::size_t i = 0; i < held.replicates.size(); ++i) {
      double sum = 0.0;
      int n = 0;
      for (std::size_t r = 0; r < held.replicates[i].size(); ++r) {
        const auto it = mult.find(held.seeds[i][r]);
        if (it != mult.end()) {
          sum += it->second * held.replicates[i][r];
          n += it->second;
        }
      }
      if (n == 0)
        continue;
      const double y = sum / n;
      obs.push_back(y);
      means.push_back(pred.truncated_mean(i));
      ql.push_back(quantized_likelihood(pred.marginals[i], y, delta));
    }
    if (obs.empty())
      return { std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(),
               std::numeric_limits<double>::quiet_NaN() };
    return { rmse(means, obs), mae(means, obs),
             std::accumulate(ql.begin(), ql.end(), 0.0) / static_cast<double>(ql.size()) };
  }
};

json bootstrap_block(const AggregatedCurve& held,
                     const PredictiveDistribution& pred,
                     double delta,
                     std::size_t rounds,
                     std::uint64_t seed)
{
  std::set<std::string> ids;
  for (const auto& s : held.seeds)
    ids.insert(s.begin(), s.end());
  if (ids.size() < 2)
    return nullptr;
  const std::vector<std::string> seeds(ids.begin(), ids.end());
  const SeedResample f{ held, pred, delta };
  const char* names[] = { "rmse", "mae", "mean_quantized_likelihood" };
  json out;
  for (int k = 0; k < 3; ++k) {
    Rng rng(seed);
    auto metric = [&](std::span<const std::string> s) { return f(s)[static_cast<std::size_t>(k)]; };
    out[names[k]] = nan_to_null(bootstrap_std<std::string>(metric, std::span<const std::string>(seeds), rounds, rng));
  }
  out["rounds"] = rounds;
  out["seeds"] = seeds.size();
  return out;
}

void run_eval(const EvalCmd& a)
{
  if (a.model.empty() == a.predictions.empty())
    throw InvalidParams("eval needs exactly one of --model or --predictions");
  if (!(a.delta > 0.0 && a.delta < 0.5))
    throw InvalidParams("--delta must lie in (0, 0.5)");
  check_levels(a.levels);

  Predictor predictor;
  double y_max = 1.0, y_min = 0.0;
  if (!a.model.empty()) {
    predictor.model = read_fitted_model(a.model);
    y_max = 1.0 - predictor.model->prior_cfg.epsilon_min;
    y_min = predictor.model->data.min_accuracy();
  } else {
    predictor.table = read_extrapolation(a.predictions);
  }
  y_max = a.max_accuracy.value_or(y_max);
  y_min = a.y_min_train.value_or(y_min);

  const MeasurementTable table = read_measurements(a.c.input);
  std::vector<std::string> groups;
  if (table.has_split) {
    for (const auto& s : table.splits())
      if (s != "pilot")
        groups.push_back(s);
  } else {
    groups.push_back("all");
  }
  if (groups.empty())
    throw DomainError("the heldout table has no non-pilot rows");

  EvalOptions opt;
  opt.delta = a.delta;
  opt.levels = a.levels;
  opt.y_min_train = y_min;
  opt.y_max_task = y_max;

  json report;
  report["delta"] = a.delta;
  report["levels"] = a.levels;
  report["y_min_train"] = y_min;
  report["y_max_task"] = y_max;
  report["predictive"] = "per-point marginals truncated to [0,1]";
  report["error_reference"] = "mean of the truncated marginal";
  report["coverage_interval"] = "highest-density interval of the truncated marginal";
  report["seed"] = a.c.seed;
  if (predictor.model) {
    report["mean_family"] = std::string(to_string(predictor.model->family));
    report["prior_hash"] = prior_config_hash(predictor.model->prior_cfg);
  }

  for (std::size_t g = 0; g < groups.size(); ++g) {
    const MeasurementTable rows = table.has_split ? table.filter_split(groups[g]) : table;
    const AggregatedCurve held = aggregate_replicates(rows);
    const auto pred = predictor.at(held.curve.sizes);
    const auto points = held.eval_points();
    const MetricReport r = evaluate(pred, points, opt);

    json cov = json::array();
    for (const auto& row : r.coverage_rates) {
      json jr = json::array();
      for (double v : row)
        jr.push_back(nan_to_null(v));
      cov.push_back(jr);
    }
    json jg = { { "sizes", r.sizes },
                { "observed", r.observed },
                { "truncated_means", r.truncated_means },
                { "untruncated_means", r.untruncated_means },
                { "rmse", r.rmse },
                { "mae", r.mae },
                { "rmse_untruncated", r.rmse_untruncated },
                { "mae_untruncated", r.mae_untruncated },
                { "quantized_likelihoods", r.quantized_likelihoods },
                { "baseline_likelihoods", r.baseline_likelihoods },
                { "mean_quantized_likelihood", r.mean_quantized_likelihood },
                { "mean_baseline_likelihood", r.mean_baseline_likelihood },
                { "coverage_rates", cov } };
    jg["bootstrap_std"] = bootstrap_block(held, pred, a.delta, a.rounds, Rng::derive(a.c.seed, g).next());
    report["groups"][groups[g]] = jg;

    std::cout << groups[g] << ": rmse " << format_double(r.rmse) << "  mae " << format_double(r.mae)
              << "  quantized likelihood " << format_double(r.mean_quantized_likelihood) << " (uniform "
              << format_double(r.mean_baseline_likelihood) << ")\n";
  }
  auto out = detail::open_out(a.c.output);
  out << report.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// simulate

struct TruthOptions
{
  std::string mean = "pow";
  double theta1 = 0.9;
  double theta2 = -0.3;
  double epsilon = 0.05;
  double noise_tau = 0.01;
  std::optional<double> wiggle_sigma;
  std::optional<double> wiggle_lambda;

  SyntheticSpec spec() const
  {
    SyntheticSpec s;
    s.family = parse_mean_family(mean);
    s.truth = { theta1, theta2, epsilon };
    s.noise_tau = noise_tau;
    if (wiggle_sigma.has_value() != wiggle_lambda.has_value())
      throw InvalidParams("--wiggle-sigma and --wiggle-lambda go together");
    if (wiggle_sigma)
      s.wiggle = KernelParams{ *wiggle_sigma, *wiggle_lambda };
    return s;
  }
};

void add_truth_options(CLI::App* cmd, TruthOptions& t)
{
  cmd->add_option("--mean", t.mean, "True mean family")->check(CLI::IsMember({ "pow", "arc" }))->capture_default_str();
  cmd->add_option("--theta1", t.theta1, "True theta1")->capture_default_str();
  cmd->add_option("--theta2", t.theta2, "True theta2")->capture_default_str();
  cmd->add_option("--epsilon", t.epsilon, "True saturation gap")->capture_default_str();
  cmd->add_option("--noise-tau", t.noise_tau, "Measurement noise standard deviation")->capture_default_str();
  cmd->add_option("--wiggle-sigma", t.wiggle_sigma, "Latent GP deviation amplitude (off by default)");
  cmd->add_option("--wiggle-lambda", t.wiggle_lambda, "Latent GP length-scale in log-size units");
}

struct SimCurveCmd
{
  Common c;
  TruthOptions truth;
  std::vector<double> sizes;
  std::string log_spaced;
  int seeds_per_size = 1;
  std::string split;
  std::string seed_prefix;
};

void run_sim_curve(const SimCurveCmd& a)
{
  SyntheticSpec s = a.truth.spec();
  s.sizes = resolve_sizes(a.sizes, a.log_spaced, "simulate curve");
  s.seeds_per_size = a.seeds_per_size;
  s.master_seed = a.c.seed;
  s.split = a.split;
  SyntheticResult r = generate(s);
  for (auto& row : r.table.rows)
    row.seed = a.seed_prefix + row.seed;
  write_measurements(r.table, a.c.output);
  std::cout << "wrote " << r.total << " measurements, clip rate " << format_double(r.clip_rate()) << '\n';
  if (r.clipped > 0)
    std::cerr << "lcgp: warning: " << r.clipped << " measurements were clipped to [0,1]\n";
}

struct SimStudyCmd
{
  Common c;
  TruthOptions truth;
  CalibrationOptions cal;
  std::vector<double> pilot_sizes{ 60, 94, 147, 230, 360 };
  std::vector<double> heldout_sizes{ 5000, 10000, 20000 };
  int pilot_seeds = 1;
  int heldout_replicates = 20;
  int worlds = 100;
  std::vector<double> levels{ 0.5, 0.8, 0.95 };
  std::string fit_mean = "pow";
  int starts = 16;
  double delta = 0.01;
};

void run_sim_study(const SimStudyCmd& a)
{
  check_levels(a.levels);
  CoverageStudyConfig cfg;
  cfg.truth = a.truth.spec();
  cfg.pilot_sizes = resolve_sizes(a.pilot_sizes, "", "pilot sizes");
  cfg.heldout_sizes = resolve_sizes(a.heldout_sizes, "", "heldout sizes");
  cfg.pilot_seeds = a.pilot_seeds;
  cfg.heldout_replicates = a.heldout_replicates;
  cfg.worlds = a.worlds;
  cfg.levels = a.levels;
  cfg.fit_family = parse_mean_family(a.fit_mean);
  cfg.epsilon_min = a.cal.epsilon_min;
  cfg.max_accuracy = a.cal.max_accuracy;
  cfg.targets = parse_targets(a.cal.targets);
  cfg.mc_samples = a.cal.mc_samples;
  cfg.screen_samples = std::min<std::size_t>(cfg.screen_samples, a.cal.mc_samples);
  cfg.fit.n_starts = a.starts;
  cfg.delta = a.delta;
  cfg.master_seed = a.c.seed;
  cfg.threads = a.c.threads;
  const CoverageStudyReport r = run_coverage_study(cfg);

  json j;
  j["worlds"] = r.worlds;
  j["failed_worlds"] = r.failed_worlds;
  j["clipped"] = r.clipped;
  j["heldout_sizes"] = r.heldout_sizes;
  j["levels"] = r.levels;
  j["coverage"] = r.coverage;
  j["inside"] = r.inside;
  j["total"] = r.total;
  j["mean_quantized_likelihood"] = r.mean_quantized_likelihood;
  j["mean_baseline_likelihood"] = r.mean_baseline_likelihood;
  j["mean_rmse"] = r.mean_rmse;
  j["seed"] = a.c.seed;
  j["coverage_interval"] = "highest-density interval of the truncated marginal";
  auto out = detail::open_out(a.c.output);
  out << j.dump(2) << '\n';

  for (std::size_t i = 0; i < r.heldout_sizes.size(); ++i) {
    std::cout << "size " << format_double(r.heldout_sizes[i]) << ":";
    for (std::size_t l = 0; l < r.levels.size(); ++l)
      std::cout << "  " << format_double(r.levels[l]) << " -> " << format_double(r.coverage[i][l]);
    std::cout << '\n';
  }
}

int run(int argc, char** argv)
{
  CLI::App app{ "Gaussian-process learning-curve extrapolation" };
  app.require_subcommand(1);

  CalibrateCmd cal;
  auto* c_cal = app.add_subcommand("calibrate", "Calibrate the sigma prior and write a prior configuration");
  c_cal->add_option("--input", cal.c.input, "Pilot measurement table (supplies the best observed accuracy)");
  c_cal->add_option("--y-best", cal.y_best, "Best observed pilot accuracy (overrides --input)");
  c_cal->add_option("--output", cal.c.output, "Prior configuration file to write")->required();
  add_calibration_options(c_cal, cal.cal);
  add_seed_threads(c_cal, cal.c);

  FitCmd fit;
  auto* c_fit = app.add_subcommand("fit", "Fit the GP to pilot measurements by MAP estimation");
  c_fit->add_option("--input", fit.c.input, "Pilot measurement table")->required();
  c_fit->add_option("--output", fit.c.output, "Fitted model (JSON) to write")->required();
  c_fit->add_option("--mean", fit.mean, "Mean family")->check(CLI::IsMember({ "pow", "arc" }))->capture_default_str();
  c_fit->add_option("--prior", fit.prior, "Prior configuration file (default: calibrate from the input)");
  c_fit->add_option("--starts", fit.starts, "Optimizer restarts")->check(CLI::PositiveNumber)->capture_default_str();
  c_fit->add_option("--max-iters", fit.max_iters, "Iterations per restart")->check(CLI::PositiveNumber)->capture_default_str();
  add_calibration_options(c_fit, fit.cal);
  add_seed_threads(c_fit, fit.c);

  ExtrapolateCmd ex;
  auto* c_ex = app.add_subcommand("extrapolate", "Predict accuracy distributions at new sizes");
  c_ex->add_option("--input", ex.c.input, "Fitted model (JSON)")->required();
  c_ex->add_option("--output", ex.c.output, "Extrapolation table to write")->required();
  c_ex->add_option("--sizes", ex.sizes, "Comma-separated query sizes")->delimiter(',');
  c_ex->add_option("--log-spaced", ex.log_spaced, "Query sizes as min,max,count[,exclusive]");
  c_ex->add_option("--levels", ex.levels, "Interval levels")->delimiter(',')->capture_default_str();
  c_ex->add_option("--curve", ex.curve, "Also write a dense curve file over a log grid");
  c_ex->add_option("--curve-points", ex.curve_points, "Points in the dense curve")->capture_default_str();
  add_seed_threads(c_ex, ex.c);

  EvalCmd ev;
  auto* c_ev = app.add_subcommand("eval", "Score predictions against heldout measurements");
  c_ev->add_option("--input", ev.c.input, "Heldout measurement table (split column optional)")->required();
  c_ev->add_option("--output", ev.c.output, "Metric report (JSON) to write")->required();
  c_ev->add_option("--model", ev.model, "Fitted model (JSON)");
  c_ev->add_option("--predictions", ev.predictions, "Extrapolation table");
  c_ev->add_option("--delta", ev.delta, "Half-width of the quantized-likelihood window")->capture_default_str();
  c_ev->add_option("--levels", ev.levels, "Coverage levels")->delimiter(',')->capture_default_str();
  c_ev->add_option("--max-accuracy", ev.max_accuracy,
                   "Upper end of the uniform baseline (default 1 - the model's epsilon-min, or 1 with --predictions)");
  c_ev->add_option("--y-min-train", ev.y_min_train,
                   "Lower end of the uniform baseline (default the model's lowest pilot accuracy, or 0 with --predictions)");
  c_ev->add_option("--bootstrap-rounds", ev.rounds, "Bootstrap rounds over seeds")->check(CLI::Range(2, 1 << 30))->capture_default_str();
  add_seed_threads(c_ev, ev.c);

  auto* c_sim = app.add_subcommand("simulate", "Synthetic learning curves and coverage studies");
  c_sim->require_subcommand(1);

  SimCurveCmd sc;
  auto* c_sc = c_sim->add_subcommand("curve", "Write noisy measurements of a known curve");
  c_sc->add_option("--output", sc.c.output, "Measurement table to write")->required();
  c_sc->add_option("--sizes", sc.sizes, "Comma-separated sizes")->delimiter(',');
  c_sc->add_option("--log-spaced", sc.log_spaced, "Sizes as min,max,count[,exclusive]");
  c_sc->add_option("--seeds-per-size", sc.seeds_per_size, "Replicates per size")->capture_default_str();
  c_sc->add_option("--split", sc.split, "Split tag written on every row");
  c_sc->add_option("--seed-prefix", sc.seed_prefix, "Prefix for the written seed ids");
  add_truth_options(c_sc, sc.truth);
  add_seed_threads(c_sc, sc.c);

  SimStudyCmd ss;
  auto* c_ss = c_sim->add_subcommand("study", "Repeated pilot studies scored by heldout coverage");
  c_ss->add_option("--output", ss.c.output, "Study report (JSON) to write")->required();
  c_ss->add_option("--pilot-sizes", ss.pilot_sizes, "Pilot sizes")->delimiter(',')->capture_default_str();
  c_ss->add_option("--heldout-sizes", ss.heldout_sizes, "Heldout sizes")->delimiter(',')->capture_default_str();
  c_ss->add_option("--pilot-seeds", ss.pilot_seeds, "Replicates averaged per pilot size")->capture_default_str();
  c_ss->add_option("--heldout-replicates", ss.heldout_replicates, "Replicates per heldout size")->capture_default_str();
  c_ss->add_option("--worlds", ss.worlds, "Independent pilot studies")->capture_default_str();
  c_ss->add_option("--levels", ss.levels, "Coverage levels")->delimiter(',')->capture_default_str();
  c_ss->add_option("--fit-mean", ss.fit_mean, "Mean family of the fitted model")
    ->check(CLI::IsMember({ "pow", "arc" }))->capture_default_str();
  c_ss->add_option("--starts", ss.starts, "Optimizer restarts per fit")->check(CLI::PositiveNumber)->capture_default_str();
  c_ss->add_option("--delta", ss.delta, "Half-width of the quantized-likelihood window")->capture_default_str();
  add_truth_options(c_ss, ss.truth);
  ss.cal.mc_samples = 100'000;
  add_calibration_options(c_ss, ss.cal);
  add_seed_threads(c_ss, ss.c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (c_cal->parsed())
    run_calibrate(cal);
  else if (c_fit->parsed())
    run_fit(fit);
  else if (c_ex->parsed())
    run_extrapolate(ex);
  else if (c_ev->parsed())
    run_eval(ev);
  else if (c_sc->parsed())
    run_sim_curve(sc);
  else if (c_ss->parsed())
    run_sim_study(ss);
  return 0;
}

} // namespace

int main(int argc, char** argv)
{
  try {
    return run(argc, argv);
  } catch (const lcgp::ParseError& e) {
    std::cerr << "lcgp: parse error: " << e.what() << '\n';
    return 2;
  } catch (const lcgp::IoError& e) {
    std::cerr << "lcgp: " << e.what() << '\n';
    return 2;
  } catch (const lcgp::InfeasibleError& e) {
    std::cerr << "lcgp: infeasible configuration: " << e.what() << '\n';
    return 3;
  } catch (const lcgp::NumericalError& e) {
    std::cerr << "lcgp: numerical failure: " << e.what() << '\n';
    return 4;
  } catch (const lcgp::Error& e) {
    std::cerr << "lcgp: error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "lcgp: unexpected failure: " << e.what() << '\n';
    return 4;
  }
}
