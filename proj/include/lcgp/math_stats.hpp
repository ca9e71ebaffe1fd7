#pragma once

#include "lcgp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <vector>

namespace lcgp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

//! Seeded random stream. Only raw 64-bit draws from mt19937_64 are used, so
//! every derived quantity is reproducible across standard libraries.
class Rng
{
public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  //! Independent stream for sub-task `stream` of a master seed.
  static Rng derive(std::uint64_t master_seed, std::uint64_t stream)
  {
    return Rng(splitmix64(master_seed ^ splitmix64(stream + 0x9E3779B97F4A7C15ULL)));
  }

  std::uint64_t next() { return engine_(); }

  //! Uniform on the open interval (0, 1).
  double uniform01() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

  //! Uniform integer in [0, n), unbiased.
  std::uint64_t uniform_index(std::uint64_t n)
  {
    if (n == 0)
      throw DomainError("uniform_index: n must be positive");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return r % n;
  }

  double normal();

private:
  static std::uint64_t splitmix64(std::uint64_t x)
  {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Standard normal

inline double normal_logpdf(double z)
{
  return -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi);
}

inline double normal_pdf(double z)
{
  return std::exp(normal_logpdf(z));
}

//! Standard normal CDF. Saturates to 0/1 in the far tails.
inline double normal_cdf(double z)
{
  return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

//! log Phi(z), accurate deep into the lower tail.
inline double log_normal_cdf(double z)
{
  if (z == -kInf)
    return -kInf;
  if (z == kInf)
    return 0.0;
  if (z < -37.0) {
    // asymptotic expansion of the Mills ratio
    const double r = 1.0 / (z * z);
    const double series =
      1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r * (1.0 - 7.0 * r * (1.0 - 9.0 * r))));
    return normal_logpdf(z) - std::log(-z) + std::log(series);
  }
  if (z < 0.0)
    return std::log(normal_cdf(z));
  return std::log1p(-0.5 * std::erfc(z / std::numbers::sqrt2));
}

namespace detail {

// Acklam's rational approximation, followed by one Halley step.
inline double normal_ppf_acklam(double p)
{
  static constexpr double a[] = { -3.969683028665376e+01, 2.209460984245205e+02,
                                  -2.759285104469687e+02, 1.383577518672690e+02,
                                  -3.066479806614716e+01, 2.506628277459239e+00 };
  static constexpr double b[] = { -5.447609879822406e+01, 1.615858368580409e+02,
                                  -1.556989798598866e+02, 6.680131188771972e+01,
                                  -1.328068155288572e+01 };
  static constexpr double c[] = { -7.784894002430293e-03, -3.223964580411365e-01,
                                  -2.400758277161838e+00, -2.549732539343734e+00,
                                  4.374664141464968e+00,  2.938163982698783e+00 };
  static constexpr double d[] = { 7.784695709041462e-03, 3.224671290700398e-01,
                                  2.445134137142996e+00, 3.754408661907416e+00 };
  constexpr double p_low = 0.02425;

  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

} // namespace detail

//! z such that log Phi(z) = log_p, for log_p <= 0.
inline double normal_ppf_from_log(double log_p)
{
  if (log_p == -kInf)
    return -kInf;
  if (log_p >= 0.0)
    return kInf;
  double z;
  if (log_p > -700.0) {
    z = detail::normal_ppf_acklam(std::exp(log_p));
    if (log_p > std::log(1e-300))
      return z;
  } else {
    z = -std::sqrt(-2.0 * log_p);
  }
  // Newton on the concave function log Phi
  for (int it = 0; it < 60; ++it) {
    const double lc = log_normal_cdf(z);
    const double step = (lc - log_p) / std::exp(normal_logpdf(z) - lc);
    z -= step;
    if (std::abs(step) <= 1e-15 * std::max(1.0, std::abs(z)))
      break;
  }
  return z;
}

//! Standard normal quantile.
inline double normal_ppf(double p)
{
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0)
      return -kInf;
    if (p == 1.0)
      return kInf;
    throw DomainError("normal_ppf: probability outside [0,1]");
  }
  if (p <= 0.5)
    return normal_ppf_from_log(std::log(p));
  return -normal_ppf_from_log(std::log1p(-p));
}

inline double Rng::normal()
{
  return normal_ppf(uniform01());
}

//! log(Phi(b) - Phi(a)) for a <= b, stable in both tails.
inline double log_normal_mass(double a, double b)
{
  if (!(a < b))
    return -kInf;
  if (a >= 0.0)
    return log_normal_mass(-b, -a);
  if (b <= 0.0) {
    const double lb = log_normal_cdf(b);
    const double la = log_normal_cdf(a);
    if (la == -kInf)
      return lb;
    return lb + std::log1p(-std::exp(la - lb));
  }
  // straddles zero: 1 - Phi(a) - Phi(-b) has no cancellation
  return std::log1p(-(normal_cdf(a) + normal_cdf(-b)));
}

// ---------------------------------------------------------------------------
// Truncated normal

struct TruncNormalParams
{
  double loc = 0.0;
  double scale = 1.0;
  double lower = -kInf;
  double upper = kInf;

  void validate() const
  {
    if (!(scale > 0.0) || !std::isfinite(scale) || !std::isfinite(loc)) {
      std::ostringstream ss;
      ss << "truncated normal needs finite loc and scale > 0 (loc=" << loc
         << ", scale=" << scale << ")";
      throw InvalidParams(ss.str());
    }
    if (!(lower < upper)) {
      std::ostringstream ss;
      ss << "truncated normal needs lower < upper (lower=" << lower << ", upper=" << upper
         << ")";
      throw InvalidParams(ss.str());
    }
  }

  double alpha() const { return (lower - loc) / scale; }
  double beta() const { return (upper - loc) / scale; }

  //! log of the normalizer Z = Phi(beta) - Phi(alpha).
  double log_normalizer() const { return log_normal_mass(alpha(), beta()); }

  bool operator==(const TruncNormalParams&) const = default;
};

//! Log-density; -inf outside [lower, upper].
inline double trunc_normal_logpdf(double v, const TruncNormalParams& p)
{
  p.validate();
  if (v < p.lower || v > p.upper)
    return -kInf;
  return normal_logpdf((v - p.loc) / p.scale) - std::log(p.scale) - p.log_normalizer();
}

inline double trunc_normal_pdf(double v, const TruncNormalParams& p)
{
  return std::exp(trunc_normal_logpdf(v, p));
}

inline double trunc_normal_cdf(double v, const TruncNormalParams& p)
{
  p.validate();
  if (v <= p.lower)
    return 0.0;
  if (v >= p.upper)
    return 1.0;
  const double z = (v - p.loc) / p.scale;
  const double a = p.alpha();
  // for mass in the right tail, the survival side is the accurate one
  if (a >= 0.0)
    return -std::expm1(log_normal_mass(z, p.beta()) - p.log_normalizer());
  return std::exp(log_normal_mass(a, z) - p.log_normalizer());
}

//! Probability mass of [lo, hi] under the truncated normal.
inline double trunc_normal_mass(double lo, double hi, const TruncNormalParams& p)
{
  p.validate();
  lo = std::max(lo, p.lower);
  hi = std::min(hi, p.upper);
  if (!(lo < hi))
    return 0.0;
  return std::exp(log_normal_mass((lo - p.loc) / p.scale, (hi - p.loc) / p.scale) -
                  p.log_normalizer());
}

//! Quantile function of a fixed truncated normal with the normalizer terms
//! precomputed; use when drawing many samples from one distribution.
class TruncNormalQuantile
{
public:
  explicit TruncNormalQuantile(const TruncNormalParams& p)
    : params_(p)
  {
    p.validate();
    // mass in the right tail is handled through the mirrored distribution
    reflect_ = p.alpha() > 0.0;
    a_ = reflect_ ? -p.beta() : p.alpha();
    b_ = reflect_ ? -p.alpha() : p.beta();
    cdf_ratio_ = std::exp(log_normal_cdf(a_) - log_normal_cdf(b_));
    log_cdf_b_ = log_normal_cdf(b_);
    sf_a_ = normal_cdf(-a_);
    sf_b_ = normal_cdf(-b_);
  }

  //! q must lie in (0, 1); not checked.
  double operator()(double q) const
  {
    if (reflect_)
      q = 1.0 - q;
    // log p with p = Phi(a) + q (Phi(b) - Phi(a))
    const double log_p = log_cdf_b_ + std::log(q + (1.0 - q) * cdf_ratio_);
    double z;
    if (log_p <= -std::numbers::ln2) {
      z = normal_ppf_from_log(log_p);
    } else {
      const double upper_tail = (1.0 - q) * sf_a_ + q * sf_b_;
      z = -normal_ppf_from_log(std::log(upper_tail));
    }
    z = std::clamp(z, a_, b_);
    if (reflect_)
      z = -z;
    return std::clamp(params_.loc + params_.scale * z, params_.lower, params_.upper);
  }

  const TruncNormalParams& params() const { return params_; }

private:
  TruncNormalParams params_;
  bool reflect_ = false;
  double a_ = 0.0;
  double b_ = 0.0;
  double cdf_ratio_ = 0.0;
  double log_cdf_b_ = 0.0;
  double sf_a_ = 0.0;
  double sf_b_ = 0.0;
};

//! Quantile function; q must lie in (0, 1).
inline double trunc_normal_ppf(double q, const TruncNormalParams& p)
{
  if (!(q > 0.0 && q < 1.0))
    throw DomainError("trunc_normal_ppf: q must lie in (0,1)");
  return TruncNormalQuantile(p)(q);
}

//! Inverse-CDF draw.
inline double trunc_normal_sample(const TruncNormalParams& p, Rng& rng)
{
  return trunc_normal_ppf(rng.uniform01(), p);
}

inline double trunc_normal_mean(const TruncNormalParams& p)
{
  p.validate();
  const double log_z = p.log_normalizer();
  const double a = p.alpha();
  const double b = p.beta();
  const double fa = std::isfinite(a) ? std::exp(normal_logpdf(a) - log_z) : 0.0;
  const double fb = std::isfinite(b) ? std::exp(normal_logpdf(b) - log_z) : 0.0;
  return std::clamp(p.loc + p.scale * (fa - fb), p.lower, p.upper);
}

//! Mode: loc clamped to the support.
inline double trunc_normal_mode(const TruncNormalParams& p)
{
  return std::clamp(p.loc, p.lower, p.upper);
}

// ---------------------------------------------------------------------------
// Sample summaries

//! Nearest-rank percentile: the ceil(fraction * n)-th smallest value.
//! Reorders `values` in place.
inline double percentile_nearest_rank_inplace(std::span<double> values, double fraction)
{
  if (values.empty())
    throw DomainError("percentile of an empty sample");
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw DomainError("percentile fraction must lie in (0,1]");
  const auto n = values.size();
  auto rank = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, n);
  auto nth = values.begin() + static_cast<std::ptrdiff_t>(rank - 1);
  std::nth_element(values.begin(), nth, values.end());
  return *nth;
}

inline double percentile_nearest_rank(std::vector<double> values, double fraction)
{
  return percentile_nearest_rank_inplace(values, fraction);
}

} // namespace lcgp
