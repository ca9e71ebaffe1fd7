#pragma once

#include "lcgp/curve_models.hpp"
#include "lcgp/errors.hpp"
#include "lcgp/math_stats.hpp"
#include "lcgp/priors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

namespace lcgp {

//! R (size, accuracy) pairs measured on a pilot dataset.
struct CurveDataset
{
  std::vector<double> sizes;
  std::vector<double> accuracies;

  std::size_t size() const { return sizes.size(); }

  //! Checks the pair structure and value ranges. Order is not required here:
  //! the likelihood and predictive are defined for any arrangement of pairs.
  void validate() const
  {
    if (sizes.size() != accuracies.size())
      throw InvalidParams("dataset sizes and accuracies differ in length");
    if (sizes.empty())
      throw InvalidParams("dataset is empty");
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      detail::check_size(sizes[i]);
      if (!(accuracies[i] >= 0.0 && accuracies[i] <= 1.0)) {
        std::ostringstream ss;
        ss << "accuracy at index " << i << " outside [0,1] (got " << accuracies[i] << ")";
        throw InvalidParams(ss.str());
      }
    }
  }

  //! Pilot-curve requirements for fitting: R >= 2 and strictly increasing sizes.
  void validate_curve() const
  {
    validate();
    if (sizes.size() < 2)
      throw InvalidParams("a learning curve needs at least 2 size-accuracy pairs");
    for (std::size_t i = 1; i < sizes.size(); ++i)
      if (!(sizes[i] > sizes[i - 1]))
        throw InvalidParams("dataset sizes must be strictly increasing");
  }

  double max_accuracy() const
  {
    double m = 0.0;
    for (double a : accuracies)
      m = std::max(m, a);
    return m;
  }

  double min_accuracy() const
  {
    double m = 1.0;
    for (double a : accuracies)
      m = std::min(m, a);
    return m;
  }

  Eigen::Map<const Eigen::VectorXd> y() const
  {
    return { accuracies.data(), static_cast<Eigen::Index>(accuracies.size()) };
  }
};

//! Full parameter set (theta, eta) of the GP learning-curve model.
struct ModelParams
{
  MeanFamily family = MeanFamily::PowerLaw;
  MeanParams mean;
  KernelParams kernel;
  double tau = 0.01;

  void validate() const
  {
    mean.validate(family);
    kernel.validate();
    if (!(tau > 0.0) || !std::isfinite(tau)) {
      std::ostringstream ss;
      ss << "tau must be > 0 (got " << tau << ")";
      throw InvalidParams(ss.str());
    }
  }

  Eta eta() const { return { tau, kernel.sigma, kernel.lambda, mean.epsilon }; }

  bool operator==(const ModelParams&) const = default;
};

//! Per-query posterior predictive: joint Gaussian (mu, Sigma) and the
//! per-point marginals truncated to [0, 1].
struct PredictiveDistribution
{
  std::vector<double> query_sizes;
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  std::vector<TruncNormalParams> marginals;

  std::size_t size() const { return query_sizes.size(); }

  double truncated_mean(std::size_t q) const { return trunc_normal_mean(marginals.at(q)); }

  //! Equal-tailed interval of the truncated marginal at `level`.
  std::pair<double, double> central_interval(std::size_t q, double level) const
  {
    if (!(level > 0.0 && level < 1.0))
      throw DomainError("interval level must lie in (0,1)");
    const TruncNormalQuantile qf(marginals.at(q));
    return { qf(0.5 * (1.0 - level)), qf(0.5 * (1.0 + level)) };
  }

  double median(std::size_t q) const { return TruncNormalQuantile(marginals.at(q))(0.5); }
};

//! Partial derivatives of a scalar with respect to every model parameter.
struct ParamGradient
{
  double theta1 = 0.0;
  double theta2 = 0.0;
  double epsilon = 0.0;
  double sigma = 0.0;
  double lambda = 0.0;
  double tau = 0.0;
};

inline constexpr double kVarianceFloor = 1e-12;

namespace detail {

//! Cholesky factor of a symmetric positive-definite matrix. A failed
//! factorization is retried with diagonal jitter 1e-10, 1e-9, ..., 1e-6.
struct SpdFactor
{
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;

  explicit SpdFactor(const Eigen::MatrixXd& a)
  {
    const Eigen::Index n = a.rows();
    llt.compute(a);
    if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().minCoeff() > 0.0)
      return;
    for (double j = 1e-10; j <= 1.0001e-6; j *= 10.0) {
      llt.compute(a + j * Eigen::MatrixXd::Identity(n, n));
      if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().minCoeff() > 0.0) {
        jitter = j;
        return;
      }
    }
    throw NumericalError("covariance factorization failed even with 1e-6 jitter");
  }

  double log_det() const { return 2.0 * llt.matrixLLT().diagonal().array().log().sum(); }

  //! (a + jitter I)^-1 r with one refinement step. The step is kept only when
  //! it moves r^T x by less than 1e-6 relative; a larger move means the matrix
  //! is numerically singular and the step would amplify rounding.
  Eigen::VectorXd solve_refined(const Eigen::MatrixXd& a, const Eigen::VectorXd& r) const
  {
    Eigen::VectorXd x = llt.solve(r);
    const Eigen::VectorXd step = llt.solve(r - a * x - jitter * x);
    if (std::abs(r.dot(step)) <= 1e-6 * std::abs(r.dot(x)))
      x += step;
    return x;
  }
};

inline Eigen::MatrixXd noisy_train_cov(const CurveDataset& data, const ModelParams& params)
{
  Eigen::MatrixXd k = kernel_matrix(data.sizes, data.sizes, params.kernel);
  k.diagonal().array() += params.tau * params.tau;
  return k;
}

} // namespace detail

//! log N(y | m, K + tau^2 I) through a Cholesky factorization.
inline double log_marginal_likelihood(const CurveDataset& data, const ModelParams& params)
{
  data.validate();
  params.validate();
  const Eigen::MatrixXd ky = detail::noisy_train_cov(data, params);
  const detail::SpdFactor f(ky);
  const Eigen::VectorXd r = data.y() - mean_vector(data.sizes, params.family, params.mean);
  const Eigen::VectorXd alpha = f.solve_refined(ky, r);
  const auto n = static_cast<double>(data.size());
  return -0.5 * n * std::log(2.0 * std::numbers::pi) - 0.5 * f.log_det() - 0.5 * r.dot(alpha);
}

//! Log marginal likelihood and its gradient with respect to every parameter.
inline std::pair<double, ParamGradient> log_marginal_likelihood_with_gradient(
  const CurveDataset& data,
  const ModelParams& params)
{
  data.validate();
  params.validate();
  const Eigen::Index n = static_cast<Eigen::Index>(data.size());
  const Eigen::MatrixXd kf = kernel_matrix(data.sizes, data.sizes, params.kernel);
  Eigen::MatrixXd ky = kf;
  ky.diagonal().array() += params.tau * params.tau;
  const detail::SpdFactor f(ky);

  const Eigen::VectorXd r = data.y() - mean_vector(data.sizes, params.family, params.mean);
  const Eigen::VectorXd alpha = f.solve_refined(ky, r);
  const double value = -0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi) -
                       0.5 * f.log_det() - 0.5 * r.dot(alpha);

  // d/dp = 1/2 tr((alpha alpha^T - Ky^-1) dKy/dp) for covariance parameters
  const Eigen::MatrixXd inner =
    alpha * alpha.transpose() - f.llt.solve(Eigen::MatrixXd::Identity(n, n));

  ParamGradient g;
  const double s = params.kernel.sigma;
  const double l = params.kernel.lambda;
  Eigen::MatrixXd d2(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = std::log(data.sizes[static_cast<std::size_t>(i)]) -
                       std::log(data.sizes[static_cast<std::size_t>(j)]);
      d2(i, j) = d * d;
    }
  g.sigma = 0.5 * (inner.cwiseProduct(kf).sum()) * 2.0 / s;
  g.lambda = 0.5 * inner.cwiseProduct(kf.cwiseProduct(d2)).sum() / (l * l * l);
  g.tau = 0.5 * inner.trace() * 2.0 * params.tau;

  // mean parameters enter through r = y - m
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto dm = mean_gradient(data.sizes[static_cast<std::size_t>(i)], params.family, params.mean);
    g.theta1 += alpha[i] * dm[0];
    g.theta2 += alpha[i] * dm[1];
    g.epsilon += alpha[i] * dm[2];
  }
  return { value, g };
}

//! log p(y | x) + log p(eta); -inf when eta leaves the prior support.
inline double map_objective(const CurveDataset& data,
                            const ModelParams& params,
                            const PriorConfig& cfg)
{
  const double lp = log_prior_eta(params.eta(), cfg);
  if (lp == -kInf)
    return -kInf;
  return log_marginal_likelihood(data, params) + lp;
}

//! Predictive marginal truncated to the unit interval.
inline TruncNormalParams truncated_marginal(double mu_q, double var_q)
{
  if (!std::isfinite(mu_q) || std::isnan(var_q))
    throw NumericalError("non-finite predictive moments");
  return { mu_q, std::sqrt(std::max(var_q, kVarianceFloor)), 0.0, 1.0 };
}

//! Posterior predictive at the query sizes:
//!   mu    = m* + K*^T (K + tau^2 I)^-1 (y - m)
//!   Sigma = K** + tau^2 I - K*^T (K + tau^2 I)^-1 K*
inline PredictiveDistribution posterior_predictive(const CurveDataset& data,
                                                   const ModelParams& params,
                                                   std::span<const double> query_sizes)
{
  data.validate();
  params.validate();
  if (query_sizes.empty())
    throw DomainError("posterior_predictive: no query sizes");

  const detail::SpdFactor f(detail::noisy_train_cov(data, params));
  const Eigen::VectorXd r = data.y() - mean_vector(data.sizes, params.family, params.mean);
  const Eigen::MatrixXd k_star = kernel_matrix(data.sizes, query_sizes, params.kernel);
  const Eigen::MatrixXd v = f.llt.matrixL().solve(k_star);
  const Eigen::VectorXd w = f.llt.matrixL().solve(r);

  PredictiveDistribution out;
  out.query_sizes.assign(query_sizes.begin(), query_sizes.end());
  out.mu = mean_vector(query_sizes, params.family, params.mean) + v.transpose() * w;
  Eigen::MatrixXd sig = kernel_matrix(query_sizes, query_sizes, params.kernel);
  sig.diagonal().array() += params.tau * params.tau;
  sig.noalias() -= v.transpose() * v;
  out.sigma = 0.5 * (sig + sig.transpose());

  out.marginals.reserve(query_sizes.size());
  for (Eigen::Index q = 0; q < out.mu.size(); ++q)
    out.marginals.push_back(truncated_marginal(out.mu[q], out.sigma(q, q)));
  return out;
}

} // namespace lcgp
