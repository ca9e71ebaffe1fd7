#pragma once

#include "lcgp/errors.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <string_view>

namespace lcgp {

//! Saturating mean family of the learning curve.
enum class MeanFamily
{
  PowerLaw,
  Arctan
};

inline std::string_view to_string(MeanFamily f)
{
  return f == MeanFamily::PowerLaw ? "pow" : "arc";
}

inline MeanFamily parse_mean_family(std::string_view s)
{
  if (s == "pow" || s == "power" || s == "PowerLaw")
    return MeanFamily::PowerLaw;
  if (s == "arc" || s == "arctan" || s == "Arctan")
    return MeanFamily::Arctan;
  throw InvalidParams("unknown mean family '" + std::string(s) + "' (expected pow or arc)");
}

//! Shape parameters theta1, theta2 and the saturation gap epsilon.
struct MeanParams
{
  double theta1 = 0.0;
  double theta2 = 0.0;
  double epsilon = 0.0;

  void validate(MeanFamily family) const
  {
    std::ostringstream ss;
    if (!std::isfinite(theta1) || !(theta1 >= 0.0))
      ss << "theta1 must be >= 0 (got " << theta1 << ")";
    else if (family == MeanFamily::PowerLaw && !(theta2 >= -1.0 && theta2 <= 0.0))
      ss << "power-law theta2 must lie in [-1,0] (got " << theta2 << ")";
    else if (family == MeanFamily::Arctan && !(theta2 >= 0.0 && std::isfinite(theta2)))
      ss << "arctan theta2 must be >= 0 (got " << theta2 << ")";
    else if (!(epsilon >= 0.0 && epsilon < 1.0))
      ss << "epsilon must lie in [0,1) (got " << epsilon << ")";
    else
      return;
    throw InvalidParams(ss.str());
  }

  bool operator==(const MeanParams&) const = default;
};

//! Output scale sigma and log-space length scale lambda of the log-RBF kernel.
struct KernelParams
{
  double sigma = 1.0;
  double lambda = 1.0;

  void validate() const
  {
    if (!(sigma > 0.0) || !(lambda > 0.0) || !std::isfinite(sigma) || !std::isfinite(lambda)) {
      std::ostringstream ss;
      ss << "kernel needs sigma > 0 and lambda > 0 (sigma=" << sigma << ", lambda=" << lambda
         << ")";
      throw InvalidParams(ss.str());
    }
  }

  bool operator==(const KernelParams&) const = default;
};

namespace detail {

inline void check_size(double x)
{
  if (!(x >= 1.0) || !std::isfinite(x)) {
    std::ostringstream ss;
    ss << "dataset size must be a finite value >= 1 (got " << x << ")";
    throw DomainError(ss.str());
  }
}

inline double mean_power_law_unchecked(double x, const MeanParams& p)
{
  return (1.0 - p.epsilon) - p.theta1 * std::exp(p.theta2 * std::log(x));
}

inline double mean_arctan_unchecked(double x, const MeanParams& p)
{
  using std::numbers::pi;
  return (2.0 / pi) * std::atan(p.theta1 * (pi / 2.0) * x + p.theta2) - p.epsilon;
}

} // namespace detail

//! (1 - eps) - theta1 * x^theta2
inline double mean_power_law(double x, const MeanParams& p)
{
  detail::check_size(x);
  p.validate(MeanFamily::PowerLaw);
  return detail::mean_power_law_unchecked(x, p);
}

//! (2/pi) * atan(theta1 * (pi/2) * x + theta2) - eps
inline double mean_arctan(double x, const MeanParams& p)
{
  detail::check_size(x);
  p.validate(MeanFamily::Arctan);
  return detail::mean_arctan_unchecked(x, p);
}

inline double mean_value(double x, MeanFamily family, const MeanParams& p)
{
  return family == MeanFamily::PowerLaw ? mean_power_law(x, p) : mean_arctan(x, p);
}

inline Eigen::VectorXd mean_vector(std::span<const double> xs,
                                   MeanFamily family,
                                   const MeanParams& p)
{
  p.validate(family);
  Eigen::VectorXd m(static_cast<Eigen::Index>(xs.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    detail::check_size(xs[i]);
    m[static_cast<Eigen::Index>(i)] = family == MeanFamily::PowerLaw
                                        ? detail::mean_power_law_unchecked(xs[i], p)
                                        : detail::mean_arctan_unchecked(xs[i], p);
  }
  return m;
}

//! Partial derivatives of the mean at x with respect to (theta1, theta2, epsilon).
inline std::array<double, 3> mean_gradient(double x, MeanFamily family, const MeanParams& p)
{
  using std::numbers::pi;
  if (family == MeanFamily::PowerLaw) {
    const double lx = std::log(x);
    const double xp = std::exp(p.theta2 * lx);
    return { -xp, -p.theta1 * xp * lx, -1.0 };
  }
  const double u = p.theta1 * (pi / 2.0) * x + p.theta2;
  const double w = 1.0 / (1.0 + u * u);
  return { x * w, (2.0 / pi) * w, -1.0 };
}

//! sigma^2 * exp(-(log x - log x2)^2 / (2 lambda^2))
inline double kernel_log_rbf(double x, double x2, const KernelParams& k)
{
  detail::check_size(x);
  detail::check_size(x2);
  k.validate();
  const double d = std::log(x) - std::log(x2);
  return k.sigma * k.sigma * std::exp(-d * d / (2.0 * k.lambda * k.lambda));
}

//! Covariance matrix with entry (s, t) = k(xs[s], xs2[t]).
inline Eigen::MatrixXd kernel_matrix(std::span<const double> xs,
                                     std::span<const double> xs2,
                                     const KernelParams& k)
{
  if (xs.empty() || xs2.empty())
    throw DomainError("kernel_matrix: size lists must be nonempty");
  k.validate();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(xs2.size()));
  const double s2 = k.sigma * k.sigma;
  const double inv = 1.0 / (2.0 * k.lambda * k.lambda);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    detail::check_size(xs[i]);
    const double li = std::log(xs[i]);
    for (std::size_t j = 0; j < xs2.size(); ++j) {
      if (i == 0)
        detail::check_size(xs2[j]);
      const double d = li - std::log(xs2[j]);
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s2 * std::exp(-d * d * inv);
    }
  }
  return out;
}

} // namespace lcgp
