#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>

namespace lcgp::detail {

struct BfgsOptions
{
  int max_iters = 500;
  double rel_tol = 1e-9;   // stop when |f_k - f_{k+1}| <= rel_tol * max(|f_k|, |f_{k+1}|)
  double grad_tol = 1e-12; // stop when the max-norm of the gradient falls below this
};

struct BfgsResult
{
  Eigen::VectorXd x;
  double f = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

//! Quasi-Newton minimization with an inverse-Hessian BFGS update and Armijo
//! backtracking. `fg(x, grad)` returns f(x) and fills grad; a non-finite
//! return marks x as infeasible and shortens the step.
template <class FG>
BfgsResult bfgs_minimize(FG&& fg, Eigen::VectorXd x, const BfgsOptions& opt = {})
{
  const Eigen::Index n = x.size();
  Eigen::VectorXd g(n), g_new(n), x_new(n);
  double f = fg(x, g);
  BfgsResult res;
  res.x = x;
  res.f = f;
  if (!std::isfinite(f) || !g.allFinite())
    return res;

  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
  bool scaled = false;
  constexpr double c1 = 1e-4;

  for (int it = 0; it < opt.max_iters; ++it) {
    res.iterations = it + 1;
    if (g.lpNorm<Eigen::Infinity>() <= opt.grad_tol) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd dir = -h * g;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      h.setIdentity();
      dir = -g;
      slope = -g.squaredNorm();
    }
    double step = scaled ? 1.0 : std::min(1.0, 1.0 / g.lpNorm<Eigen::Infinity>());

    double f_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = x + step * dir;
      f_new = fg(x_new, g_new);
      if (std::isfinite(f_new) && g_new.allFinite() && f_new <= f + c1 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // no descent along this direction; one retry along steepest descent
      if (h.isIdentity())
        break;
      h.setIdentity();
      scaled = false;
      continue;
    }

    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd yv = g_new - g;
    const double sy = s.dot(yv);
    const double f_old = f;
    x = x_new;
    g = g_new;
    f = f_new;

    if (sy > 1e-12 * s.norm() * yv.norm()) {
      if (!scaled) {
        h = Eigen::MatrixXd::Identity(n, n) * (sy / yv.squaredNorm());
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd hy = h * yv;
      h += ((sy + yv.dot(hy)) * rho * rho) * (s * s.transpose()) -
           rho * (hy * s.transpose() + s * hy.transpose());
    }

    if (std::abs(f_old - f) <= opt.rel_tol * std::max(std::abs(f_old), std::abs(f))) {
      res.converged = true;
      break;
    }
  }
  res.x = x;
  res.f = f;
  return res;
}

} // namespace lcgp::detail
