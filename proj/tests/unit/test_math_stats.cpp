#include "oracles.hpp"

#include "lcgp/math_stats.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

using namespace lcgp;

namespace {

std::vector<TruncNormalParams> assorted_params()
{
  return {
    { 0.0, 1.0, -kInf, kInf },  { 0.0, 1.0, 0.0, kInf },     { 0.3, 0.05, 0.0, 1.0 },
    { 1.2, 0.1, 0.0, 1.0 },     { -0.4, 0.2, 0.0, 1.0 },     { -1.23, 2.14, 0.0, kInf },
    { 0.0125, 0.006, 0.0, kInf }, { 0.0, 0.01, 0.0, kInf },  { 5.0, 1.0, -kInf, 0.0 },
    { 0.0, 1.0, 3.0, 4.0 },     { 0.9, 1e-4, 0.0, 1.0 },     { 0.5, 30.0, 0.0, 1.0 },
  };
}

} // namespace

TEST(NormalCdf, KnownValues)
{
  EXPECT_EQ(normal_cdf(0.0), 0.5);
  EXPECT_NEAR(normal_cdf(40.0), 1.0, 1e-15);
  EXPECT_NEAR(normal_cdf(1.959964), 0.975, 1e-8);
}

TEST(NormalCdf, MatchesErfReferenceAndIsMonotone)
{
  double prev = 0.0;
  for (double z = -30.0; z <= 30.0; z += 0.01) {
    const double ref = 0.5 * (1.0 + std::erf(z / std::numbers::sqrt2));
    EXPECT_NEAR(normal_cdf(z), ref, 1e-12) << z;
    EXPECT_GE(normal_cdf(z), prev);
    prev = normal_cdf(z);
  }
}

TEST(NormalCdf, LogCdfIsFiniteDeepInTheTail)
{
  for (double z : { -3.0, -10.0, -30.0 })
    EXPECT_NEAR(log_normal_cdf(z), std::log(normal_cdf(z)), 1e-10 * std::abs(std::log(normal_cdf(z))));
  const double v = log_normal_cdf(-100.0);
  EXPECT_TRUE(std::isfinite(v));
  // log Phi(z) ~ -z^2/2 - log(-z) - log(sqrt(2 pi))
  EXPECT_NEAR(v, -5000.0 - std::log(100.0) - 0.5 * std::log(2.0 * std::numbers::pi), 1e-3);
}

TEST(NormalPpf, InvertsCdf)
{
  for (double p : { 1e-300, 1e-20, 1e-5, 0.01, 0.3, 0.5, 0.7, 0.99, 1.0 - 1e-12 })
    EXPECT_NEAR(normal_cdf(normal_ppf(p)), p, 1e-12 * std::max(p, 1e-3)) << p;
  EXPECT_THROW(normal_ppf(1.5), DomainError);
}

TEST(TruncNormal, ValidateRejectsBadParameters)
{
  EXPECT_THROW((TruncNormalParams{ 0.0, 0.0, -kInf, kInf }.validate()), InvalidParams);
  EXPECT_THROW((TruncNormalParams{ 0.0, -1.0, -kInf, kInf }.validate()), InvalidParams);
  EXPECT_THROW((TruncNormalParams{ 0.0, 1.0, 1.0, 1.0 }.validate()), InvalidParams);
  EXPECT_THROW((TruncNormalParams{ 0.0, 1.0, 2.0, 1.0 }.validate()), InvalidParams);
  EXPECT_THROW(trunc_normal_logpdf(0.0, { 0.0, 0.0, 0.0, 1.0 }), InvalidParams);
}

TEST(TruncNormal, LogpdfExamples)
{
  const TruncNormalParams untrunc{ 0.7, 0.2, -kInf, kInf };
  EXPECT_NEAR(trunc_normal_logpdf(0.7, untrunc), -0.5 * std::log(2.0 * std::numbers::pi) - std::log(0.2), 1e-14);
  EXPECT_EQ(trunc_normal_logpdf(-0.1, { 0.0, 1.0, 0.0, kInf }), -kInf);
  EXPECT_EQ(trunc_normal_logpdf(1.1, { 0.5, 1.0, 0.0, 1.0 }), -kInf);
  EXPECT_NEAR(trunc_normal_logpdf(0.0, { 0.0, 1.0, 0.0, kInf }), std::log(0.7978845608028654), 1e-12);
}

TEST(TruncNormal, DensityIntegratesToOne)
{
  for (const auto& p : assorted_params()) {
    const auto [a, b] = oracle::window(p);
    const double mass = oracle::integrate([&](double v) { return trunc_normal_pdf(v, p); }, a, b);
    EXPECT_NEAR(mass, 1.0, 1e-8) << p.loc << " " << p.scale;
  }
}

TEST(TruncNormal, DensityMatchesNormalOverNormalizer)
{
  for (const auto& p : assorted_params()) {
    const auto [a, b] = oracle::window(p);
    const double z = oracle::integrate([&](double v) { return oracle::gauss(v, p.loc, p.scale); }, a, b);
    if (z < 1e-200)
      continue;
    for (double f : { 0.1, 0.5, 0.9 }) {
      const double v = a + f * (b - a);
      const double ref = oracle::gauss(v, p.loc, p.scale) / z;
      if (ref > 1e-250) {
        EXPECT_NEAR(trunc_normal_pdf(v, p) / ref, 1.0, 1e-7);
      }
    }
  }
}

TEST(TruncNormal, CdfMatchesQuadrature)
{
  for (const auto& p : assorted_params()) {
    const auto [a, b] = oracle::window(p);
    for (double f : { 0.2, 0.5, 0.8 }) {
      const double v = a + f * (b - a);
      const double ref = oracle::integrate([&](double t) { return trunc_normal_pdf(t, p); }, a, v);
      EXPECT_NEAR(trunc_normal_cdf(v, p), ref, 1e-8);
    }
  }
}

TEST(TruncNormal, PpfExamples)
{
  EXPECT_NEAR(trunc_normal_ppf(0.5, { 0.3, 2.0, -kInf, kInf }), 0.3, 1e-14);
  EXPECT_NEAR(trunc_normal_ppf(0.5, { 0.0, 1.0, 0.0, kInf }), 0.6744897501960817, 1e-9);
  for (double q : { 0.0, 1.0, -0.1, 1.1 })
    EXPECT_THROW(trunc_normal_ppf(q, { 0.0, 1.0, 0.0, kInf }), DomainError);
}

TEST(TruncNormal, PpfCdfRoundTrip)
{
  for (const auto& p : assorted_params())
    for (double q : { 1e-6, 0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99, 1.0 - 1e-6 }) {
      const double v = trunc_normal_ppf(q, p);
      EXPECT_GE(v, p.lower);
      EXPECT_LE(v, p.upper);
      EXPECT_NEAR(trunc_normal_cdf(v, p), q, 1e-9) << p.loc << " " << p.scale << " " << q;
    }
}

TEST(TruncNormal, CdfPpfRoundTripOnTheSupport)
{
  for (const auto& p : assorted_params()) {
    const auto [a, b] = oracle::window(p);
    for (double f : { 0.3, 0.5, 0.7 }) {
      const double v = a + f * (b - a);
      const double c = trunc_normal_cdf(v, p);
      if (c > 1e-6 && c < 1.0 - 1e-6) {
        EXPECT_NEAR(trunc_normal_ppf(c, p), v, 1e-9 * std::max(1.0, std::abs(v)));
      }
    }
  }
}

TEST(TruncNormal, FarTailSupport)
{
  const TruncNormalParams p{ 0.0, 1.0, 10.0, kInf };
  const double med = trunc_normal_ppf(0.5, p);
  EXPECT_GT(med, 10.0);
  EXPECT_LT(med, 10.2);
  EXPECT_NEAR(trunc_normal_cdf(med, p), 0.5, 1e-9);
  EXPECT_NEAR(trunc_normal_mass(10.0, kInf, p), 1.0, 1e-12);
}

TEST(TruncNormal, LogpdfIsContinuousInside)
{
  for (const auto& p : assorted_params()) {
    const auto [a, b] = oracle::window(p);
    for (double f : { 0.25, 0.5, 0.75 }) {
      const double v = a + f * (b - a);
      const double h = 1e-9 * (b - a);
      EXPECT_NEAR(trunc_normal_logpdf(v + h, p), trunc_normal_logpdf(v, p), 1e-5);
    }
  }
}

TEST(TruncNormal, MeanMatchesQuadrature)
{
  for (const auto& p : assorted_params()) {
    const auto [a, b] = oracle::window(p);
    const double ref = oracle::integrate([&](double v) { return v * trunc_normal_pdf(v, p); }, a, b);
    EXPECT_NEAR(trunc_normal_mean(p), ref, 1e-8 * std::max(1.0, std::abs(ref)));
  }
}

TEST(TruncNormal, Mode)
{
  EXPECT_EQ(trunc_normal_mode({ 1.2, 0.1, 0.0, 1.0 }), 1.0);
  EXPECT_EQ(trunc_normal_mode({ -0.2, 0.1, 0.0, 1.0 }), 0.0);
  EXPECT_EQ(trunc_normal_mode({ 0.4, 0.1, 0.0, 1.0 }), 0.4);
}

TEST(TruncNormal, SamplesStayInSupport)
{
  Rng rng(1);
  const TruncNormalParams p{ -1.0, 0.5, 0.0, kInf };
  for (int i = 0; i < 20000; ++i)
    EXPECT_GE(trunc_normal_sample(p, rng), 0.0);
}

TEST(TruncNormal, PinchedWindowSamplesNearLower)
{
  Rng rng(2);
  const TruncNormalParams p{ 0.3, 0.1, 0.5 - 1e-9, 0.5 };
  for (int i = 0; i < 100; ++i) {
    const double v = trunc_normal_sample(p, rng);
    EXPECT_GE(v, p.lower);
    EXPECT_LE(v, p.upper);
    EXPECT_NEAR(v, p.lower, 1e-9);
  }
}

TEST(TruncNormal, HalfNormalSampleMean)
{
  Rng rng(3);
  const TruncNormalParams p{ 0.0, 1.0, 0.0, kInf };
  double s = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i)
    s += trunc_normal_sample(p, rng);
  EXPECT_NEAR(s / n, std::sqrt(2.0 / std::numbers::pi), 0.01);
}

TEST(TruncNormal, KolmogorovSmirnov)
{
  for (const auto& p : assorted_params()) {
    Rng rng(4);
    const int n = 100000;
    std::vector<double> v(n);
    for (auto& x : v)
      x = trunc_normal_sample(p, rng);
    std::sort(v.begin(), v.end());
    double ks = 0.0;
    for (int i = 0; i < n; ++i) {
      const double c = trunc_normal_cdf(v[static_cast<std::size_t>(i)], p);
      ks = std::max({ ks, c - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - c });
    }
    EXPECT_LT(ks, 0.01) << p.loc << " " << p.scale;
  }
}

TEST(Rng, DeterministicAndStreamsDiffer)
{
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i)
    EXPECT_EQ(a.next(), b.next());
  EXPECT_NE(Rng::derive(7, 0).next(), Rng::derive(7, 1).next());
  EXPECT_EQ(Rng::derive(7, 3).next(), Rng::derive(7, 3).next());
  Rng c(5);
  for (int i = 0; i < 10000; ++i) {
    const double u = c.uniform01();
    EXPECT_GT(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(c.uniform_index(3), 3u);
  }
}

TEST(Percentile, NearestRank)
{
  const std::vector<double> v{ 10, 9, 8, 7, 6, 5, 4, 3, 2, 1 };
  EXPECT_EQ(percentile_nearest_rank(v, 0.2), 2.0);
  EXPECT_EQ(percentile_nearest_rank(v, 0.8), 8.0);
  EXPECT_EQ(percentile_nearest_rank(v, 0.25), 3.0);
  EXPECT_EQ(percentile_nearest_rank(v, 1.0), 10.0);
  EXPECT_EQ(percentile_nearest_rank({ 4.0 }, 0.5), 4.0);
  EXPECT_THROW(percentile_nearest_rank({}, 0.5), DomainError);
  EXPECT_THROW(percentile_nearest_rank(v, 0.0), DomainError);
}
