#pragma once

#include "lcgp/curve_models.hpp"
#include "lcgp/data_io.hpp"
#include "lcgp/errors.hpp"
#include "lcgp/gp_core.hpp"
#include "lcgp/math_stats.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace lcgp {

//! Ground-truth learning curve and measurement protocol.
struct SyntheticSpec
{
  MeanFamily family = MeanFamily::PowerLaw;
  MeanParams truth;
  double noise_tau = 0.01;
  //! Latent GP deviation (sigma_true, lambda_true); none means f = m.
  std::optional<KernelParams> wiggle;
  std::vector<double> sizes;
  int seeds_per_size = 1;
  std::uint64_t master_seed = 0;
  std::string split; //!< tag written on every generated row

  void validate() const
  {
    truth.validate(family);
    if (!(noise_tau > 0.0))
      throw InvalidParams("synthetic noise_tau must be > 0");
    if (wiggle)
      wiggle->validate();
    if (sizes.empty())
      throw InvalidParams("synthetic spec has no sizes");
    for (double s : sizes)
      if (!(s >= 1.0) || s != std::floor(s))
        throw InvalidParams("synthetic sizes must be positive integers");
    if (seeds_per_size < 1)
      throw InvalidParams("seeds_per_size must be >= 1");
  }
};

struct SyntheticResult
{
  MeasurementTable table;
  std::size_t clipped = 0;
  std::size_t total = 0;

  double clip_rate() const { return total ? static_cast<double>(clipped) / static_cast<double>(total) : 0.0; }
};

//! Draws one replicate world per seed id: f ~ N(m, K) over the size grid (or
//! f = m without wiggle), then y = f + N(0, tau^2) clipped to [0, 1].
//! World s uses its own stream derived from master_seed.
inline SyntheticResult generate(const SyntheticSpec& spec)
{
  spec.validate();
  const Eigen::VectorXd m = mean_vector(spec.sizes, spec.family, spec.truth);
  const auto n = m.size();
  std::optional<Eigen::MatrixXd> chol;
  if (spec.wiggle) {
    Eigen::MatrixXd k = kernel_matrix(spec.sizes, spec.sizes, *spec.wiggle);
    k.diagonal().array() += 1e-10 * spec.wiggle->sigma * spec.wiggle->sigma;
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success)
      throw NumericalError("cannot factor the synthetic wiggle covariance");
    chol = llt.matrixL();
  }

  SyntheticResult out;
  out.table.has_split = !spec.split.empty();
  for (int s = 0; s < spec.seeds_per_size; ++s) {
    Rng rng = Rng::derive(spec.master_seed, static_cast<std::uint64_t>(s));
    Eigen::VectorXd f = m;
    if (chol) {
      Eigen::VectorXd z(n);
      for (Eigen::Index i = 0; i < n; ++i)
        z[i] = rng.normal();
      f += *chol * z;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      double y = f[i] + spec.noise_tau * rng.normal();
      ++out.total;
      if (y < 0.0 || y > 1.0) {
        ++out.clipped;
        y = std::clamp(y, 0.0, 1.0);
      }
      out.table.rows.push_back({ static_cast<long>(spec.sizes[static_cast<std::size_t>(i)]),
                                 std::to_string(s), y, spec.split });
    }
  }
  return out;
}

} // namespace lcgp
