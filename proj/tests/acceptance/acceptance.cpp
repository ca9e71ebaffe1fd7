// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Usage: lcgp_acceptance <path-to-lcgp-cli>

#include "../unit/oracles.hpp"

#include "lcgp/lcgp.hpp"

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace lcgp;
namespace fs = std::filesystem;

namespace {

struct Outcome
{
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args)
{
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome lambda_prior_endpoints()
{
  const double lo = solve_lambda_for_fraction(1.5, 0.01);
  const double hi = solve_lambda_for_fraction(1.5, 0.99);
  double worst = 0.0;
  for (double x : { 1.0, 60.0, 360.0, 20000.0 }) {
    worst = std::max(worst, std::abs(kernel_log_rbf(1.5 * x, x, { 1.0, lo }) - 0.01));
    worst = std::max(worst, std::abs(kernel_log_rbf(1.5 * x, x, { 1.0, hi }) - 0.99));
  }
  return { std::abs(lo - 0.13) <= 0.005 && std::abs(hi - 2.86) <= 0.01 && worst <= 1e-10,
           fmt("lambda(1%%)=%.6f lambda(99%%)=%.6f round-trip error %.1e", lo, hi, worst) };
}

Outcome sigma_calibration()
{
  const auto t0 = std::chrono::steady_clock::now();
  const auto targets = CalibrationTargets::make(0.7, 0.95, PercentileTargets::Figure, 1'000'000);
  const auto r = calibrate_sigma_prior(default_tau_prior(), targets, 0);
  const double secs = seconds_since(t0);
  const bool ok = std::abs(r.achieved_lo / 0.0625 - 1.0) <= 0.1 && std::abs(r.achieved_hi / 0.125 - 1.0) <= 0.1 &&
                  secs < 30.0;
  return { ok, fmt("p20=%.5f p80=%.5f (targets 0.0625, 0.125) sigma~N+(%.5f, %.5f) in %.1f s", r.achieved_lo,
                   r.achieved_hi, r.sigma_prior.loc, r.sigma_prior.scale, secs) };
}

Outcome log_spaced_protocol()
{
  const auto a = log_spaced_sizes(60, 360, 5, SpacingMode::InclusiveEndpoints);
  const auto b = log_spaced_sizes(360, 720, 5, SpacingMode::ExclusiveStart);
  const auto c = log_spaced_sizes(360, 20000, 5, SpacingMode::ExclusiveStart);
  const std::vector<double> published{ 804, 1796, 4010, 8955, 20000 };
  double worst = 0.0;
  bool ok = a == std::vector<long>{ 60, 94, 147, 230, 360 } && b == std::vector<long>{ 414, 475, 546, 627, 720 } &&
            c.size() == 5;
  for (std::size_t i = 0; ok && i < 5; ++i)
    worst = std::max(worst, std::abs(static_cast<double>(c[i]) / published[i] - 1.0));
  ok = ok && worst <= 0.01;
  std::string long_list;
  for (long v : c)
    long_list += (long_list.empty() ? "" : ",") + std::to_string(v);
  return { ok, fmt("long range {%s}, max relative deviation %.4f", long_list.c_str(), worst) };
}

Outcome predictive_oracle()
{
  std::mt19937_64 g(2024);
  double worst_mu = 0.0, worst_sigma = 0.0;
  for (int t = 0; t < 200; ++t) {
    const auto in = oracle::random_instance(g);
    const auto pred = posterior_predictive(in.data, in.params, in.query);
    const auto ref = oracle::condition_joint(in.data, in.params, in.query);
    worst_mu = std::max(worst_mu, (pred.mu - ref.mu).cwiseAbs().maxCoeff());
    worst_sigma = std::max(worst_sigma, (pred.sigma - ref.sigma).cwiseAbs().maxCoeff());
  }
  return { worst_mu <= 1e-8 && worst_sigma <= 1e-8,
           fmt("200 instances, max |dmu|=%.2e max |dSigma|=%.2e", worst_mu, worst_sigma) };
}

Outcome likelihood_oracle()
{
  std::mt19937_64 g(2025);
  double worst = 0.0, worst_grad = 0.0;
  for (int t = 0; t < 200; ++t) {
    const auto in = oracle::random_instance(g);
    Eigen::MatrixXd c = oracle::kernel(in.data.sizes, in.data.sizes, in.params.kernel.sigma, in.params.kernel.lambda);
    c.diagonal().array() += in.params.tau * in.params.tau;
    Eigen::VectorXd y(static_cast<Eigen::Index>(in.data.size()));
    for (std::size_t i = 0; i < in.data.size(); ++i)
      y[static_cast<Eigen::Index>(i)] = in.data.accuracies[i];
    const double ref = oracle::mvn_logpdf(y, oracle::means(in.data.sizes, in.params), c);
    const auto [v, grad] = log_marginal_likelihood_with_gradient(in.data, in.params);
    worst = std::max(worst, std::abs(v - ref));

    // central differences in log(parameter); analytic gradients exist for every parameter
    using Setter = std::function<void(ModelParams&, double)>;
    const std::vector<std::tuple<Setter, double, double>> coords{
      { [](ModelParams& p, double x) { p.kernel.sigma = x; }, grad.sigma, in.params.kernel.sigma },
      { [](ModelParams& p, double x) { p.kernel.lambda = x; }, grad.lambda, in.params.kernel.lambda },
      { [](ModelParams& p, double x) { p.tau = x; }, grad.tau, in.params.tau },
      { [](ModelParams& p, double x) { p.mean.theta1 = x; }, grad.theta1, in.params.mean.theta1 },
    };
    for (const auto& [set, analytic, at] : coords) {
      const double h = 1e-5;
      ModelParams a = in.params, b = in.params;
      set(a, at * std::exp(h));
      set(b, at * std::exp(-h));
      const double fd = (log_marginal_likelihood(in.data, a) - log_marginal_likelihood(in.data, b)) / (2.0 * h);
      worst_grad = std::max(worst_grad, std::abs(analytic * at - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  return { worst <= 1e-8 && worst_grad <= 1e-4,
           fmt("200 instances, max |dlogL|=%.2e, max relative gradient error %.2e", worst, worst_grad) };
}

Outcome partition_of_unity()
{
  std::mt19937_64 g(2026);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto p = truncated_marginal(-0.3 + 1.6 * u(g), std::pow(10.0, -6.0 + 6.0 * u(g)));
    double sum = 0.0;
    for (int k = 0; k < 50; ++k)
      sum += quantized_likelihood(p, 0.01 + 0.02 * k, 0.01);
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  return { worst <= 1e-9, fmt("100 predictives, max |sum - 1| = %.2e", worst) };
}

Outcome coverage_end_to_end()
{
  const auto t0 = std::chrono::steady_clock::now();
  CoverageStudyConfig cfg;
  cfg.truth.truth = { 0.9, -0.3, 0.05 };
  cfg.truth.noise_tau = 0.01;
  cfg.worlds = 100;
  cfg.threads = 0;
  const auto r = run_coverage_study(cfg);
  const double secs = seconds_since(t0);
  auto pooled = [&](std::size_t level) {
    std::size_t inside = 0, total = 0;
    for (std::size_t i = 0; i < r.heldout_sizes.size(); ++i) {
      inside += r.inside[i][level];
      total += r.total[i];
    }
    return total ? static_cast<double>(inside) / static_cast<double>(total) : 0.0;
  };
  // levels are {0.5, 0.8, 0.95}
  std::string per_size;
  for (std::size_t i = 0; i < r.heldout_sizes.size(); ++i)
    per_size += fmt(" %g:%.3f", r.heldout_sizes[i], r.coverage[i][2]);
  const bool ok = pooled(2) >= 0.90 && r.failed_worlds == 0 && secs < 600.0;
  return { ok, fmt("95%% HDI coverage pooled %.3f (per size%s), 50%%/80%% pooled %.3f/%.3f, "
                   "%d failed worlds, %zu clipped, %.0f s",
                   pooled(2), per_size.c_str(), pooled(0), pooled(1), r.failed_worlds, r.clipped, secs) };
}

Outcome mean_recovery()
{
  const std::vector<double> pilot{ 60, 94, 147, 230, 360 };
  struct Case
  {
    MeanFamily fam;
    MeanParams truth;
  };
  double worst = 0.0;
  for (const auto& c : { Case{ MeanFamily::PowerLaw, { 0.9, -0.3, 0.0 } }, Case{ MeanFamily::Arctan, { 0.01, 1.0, 0.05 } } }) {
    CurveDataset d;
    d.sizes = pilot;
    for (double x : pilot)
      d.accuracies.push_back(mean_value(x, c.fam, c.truth));
    PriorConfig prior;
    prior.y_best_observed = d.max_accuracy();
    const auto gp = fit_map(d, c.fam, prior, FitConfig{});
    const auto ls = fit_deterministic(d, c.fam, c.truth.epsilon);
    for (double x : pilot) {
      worst = std::max(worst, std::abs(mean_value(x, c.fam, gp.params_hat.mean) - mean_value(x, c.fam, c.truth)));
      worst = std::max(worst, std::abs(mean_value(x, c.fam, ls.mean_params) - mean_value(x, c.fam, c.truth)));
    }
  }

  // flat priors and frozen tiny eta: the MAP mean is the least-squares curve
  std::mt19937_64 g(2027);
  std::normal_distribution<double> noise(0.0, 0.005);
  CurveDataset d;
  d.sizes = pilot;
  for (double x : pilot)
    d.accuracies.push_back(mean_power_law(x, { 0.9, -0.3, 0.05 }) + noise(g));
  PriorConfig flat;
  flat.y_best_observed = d.max_accuracy();
  flat.tau_prior.scale = 1e6;
  flat.sigma_prior = { 0.0, 1e6, 0.0, kInf };
  flat.lambda_prior.scale = 1e6;
  FitConfig fc;
  fc.frozen_eta = Eta{ 1e-3, 1e-7, 0.05, 0.05 };
  const auto gp = fit_map(d, MeanFamily::PowerLaw, flat, fc);
  const auto ls = fit_deterministic(d, MeanFamily::PowerLaw, 0.05);
  const double dtheta = std::max(std::abs(gp.params_hat.mean.theta1 - ls.mean_params.theta1) / ls.mean_params.theta1,
                                 std::abs(gp.params_hat.mean.theta2 - ls.mean_params.theta2));
  return { worst <= 0.005 && dtheta <= 1e-4,
           fmt("max curve error %.2e over pilot range; frozen-eta MAP vs least squares dtheta %.2e", worst, dtheta) };
}

std::string slurp(const fs::path& p)
{
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome cli_reproducibility(const std::string& cli)
{
  const fs::path dir = fs::temp_directory_path() / "lcgp_acceptance_cli";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string data = LCGP_DATA_DIR;
  const std::string pilot = data + "/pilot_example.csv";
  const std::string heldout = data + "/heldout_example.csv";
  auto out = [&](const std::string& name, const std::string& run) { return (dir / (name + "_" + run)).string(); };

  // each entry: output name, argument string with {R} standing for the run tag
  const std::vector<std::pair<std::string, std::string>> commands{
    { "prior", "calibrate --input " + pilot + " --seed 3 --output {prior}" },
    { "fit", "fit --input " + pilot + " --seed 3 --output {fit}" },
    { "fit_arc", "fit --input " + pilot + " --mean arc --prior {prior_a} --seed 3 --output {fit_arc}" },
    { "extrap", "extrapolate --input {fit_a} --sizes 414,475,546,627,720,804,1796,4010,5000,8955,10000,20000 --curve {curve} --output {extrap}" },
    { "curve", "" },
    { "eval", "eval --input " + heldout + " --model {fit_a} --seed 3 --output {eval}" },
    { "eval_pred", "eval --input " + heldout + " --predictions {extrap_a} --seed 3 --output {eval_pred}" },
    { "sim", "simulate curve --sizes 60,94,147,230,360 --seeds-per-size 3 --seed 3 --output {sim}" },
    { "study", "simulate study --worlds 5 --seed 3 --output {study}" },
  };
  std::string failures;
  for (const std::string run : { "a", "b" }) {
    for (const auto& [name, args] : commands) {
      if (args.empty())
        continue;
      std::string cmd = args;
      for (const auto& [n, unused] : commands) {
        for (const auto& [tag, value] : { std::pair{ "{" + n + "}", out(n, run) },
                                          std::pair{ "{" + n + "_a}", out(n, "a") } }) {
          for (auto pos = cmd.find(tag); pos != std::string::npos; pos = cmd.find(tag))
            cmd.replace(pos, tag.size(), value);
        }
      }
      const std::string full = cli + " " + cmd + " >/dev/null 2>&1";
      const int rc = std::system(full.c_str());
      if (!WIFEXITED(rc) || WEXITSTATUS(rc) != 0)
        failures += " " + name + "(exit)";
    }
  }
  std::size_t compared = 0;
  for (const auto& [name, args] : commands) {
    const auto a = slurp(out(name, "a")), b = slurp(out(name, "b"));
    ++compared;
    if (a.empty() || a != b)
      failures += " " + name + "(differs)";
  }
  fs::remove_all(dir);
  return { failures.empty(), failures.empty() ? fmt("%zu outputs bit-identical across two runs", compared)
                                              : "mismatch:" + failures };
}

} // namespace

int main(int argc, char** argv)
{
  if (argc != 2) {
    std::fprintf(stderr, "usage: %s <path-to-lcgp-cli>\n", argv[0]);
    return 2;
  }
  const std::string cli = argv[1];
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
    { "lambda prior endpoints", lambda_prior_endpoints },
    { "sigma prior calibration", sigma_calibration },
    { "log-spaced protocol sizes", log_spaced_protocol },
    { "posterior predictive oracle", predictive_oracle },
    { "likelihood oracle and gradients", likelihood_oracle },
    { "quantized likelihood partition of unity", partition_of_unity },
    { "coverage end to end", coverage_end_to_end },
    { "mean recovery", mean_recovery },
    { "CLI reproducibility", [&] { return cli_reproducibility(cli); } },
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = { false, std::string("exception: ") + e.what() };
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s criterion %zu (%s): %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
