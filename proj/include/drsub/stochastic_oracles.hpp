#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "drsub/core.hpp"
#include "drsub/objectives.hpp"
#include "drsub/rng.hpp"

namespace drsub {

enum class NoiseKind { kNone, kGaussianProportional, kGaussianFixed, kClippedGaussian };

/// Perturbation added to gradient (and Hessian) queries.
///
///  - kNone: exact gradients.
///  - kGaussianFixed: per-coordinate N(0, sigma^2).
///  - kGaussianProportional: per-coordinate N(0, (scale * ||grad F(x)|| / n)^2).
///  - kClippedGaussian: per-coordinate clip(N(0, sigma^2), -2 sigma, 2 sigma).
///
/// Hessian queries receive a symmetric N(0, hessian_sigma^2) perturbation
/// regardless of kind.
struct NoiseModel {
  NoiseKind kind = NoiseKind::kNone;
  double sigma = 0.0;
  double scale = 1.0;
  double hessian_sigma = 0.0;

  static NoiseModel none() { return {}; }
  static NoiseModel gaussian_fixed(double sigma, double hessian_sigma = 0.0) {
    return {NoiseKind::kGaussianFixed, sigma, 1.0, hessian_sigma};
  }
  static NoiseModel gaussian_proportional(double scale, double hessian_sigma = 0.0) {
    return {NoiseKind::kGaussianProportional, 0.0, scale, hessian_sigma};
  }
  static NoiseModel clipped_gaussian(double sigma, double hessian_sigma = 0.0) {
    return {NoiseKind::kClippedGaussian, sigma, 1.0, hessian_sigma};
  }

  void validate() const {
    detail::require(std::isfinite(sigma) && sigma >= 0.0, "noise: sigma must be >= 0");
    detail::require(std::isfinite(scale) && scale >= 0.0, "noise: scale must be >= 0");
    detail::require(std::isfinite(hessian_sigma) && hessian_sigma >= 0.0, "noise: hessian_sigma must be >= 0");
  }
};

inline const char* to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::kNone: return "none";
    case NoiseKind::kGaussianProportional: return "gaussian_prop";
    case NoiseKind::kGaussianFixed: return "gaussian_fixed";
    case NoiseKind::kClippedGaussian: return "clipped_gaussian";
  }
  return "?";
}

inline NoiseKind noise_kind_from_string(const std::string& name) {
  if (name == "none") return NoiseKind::kNone;
  if (name == "gaussian_prop") return NoiseKind::kGaussianProportional;
  if (name == "gaussian_fixed") return NoiseKind::kGaussianFixed;
  if (name == "clipped_gaussian") return NoiseKind::kClippedGaussian;
  throw ValidationError("unknown noise kind '" + name + "'");
}

/// Constants consumed by the bounds: M bounds ||g - grad F|| almost surely
/// (infinite when unbounded) and sigma bounds its root-mean-square.
struct NoiseConstants {
  double m_bound;
  double sigma_total;
};

/// `g_max` is an upper bound on ||grad F|| over the feasible set; it is only
/// consulted for proportional noise, whose variance depends on the state.
inline NoiseConstants noise_constants(const NoiseModel& nm, Index n, std::optional<double> g_max = std::nullopt) {
  detail::require(n >= 1, "noise_constants: dimension must be >= 1");
  const double root_n = std::sqrt(static_cast<double>(n));
  constexpr double inf = std::numeric_limits<double>::infinity();
  switch (nm.kind) {
    case NoiseKind::kNone: return {0.0, 0.0};
    case NoiseKind::kGaussianFixed: return {inf, nm.sigma * root_n};
    case NoiseKind::kClippedGaussian: return {2.0 * nm.sigma * root_n, nm.sigma * root_n};
    case NoiseKind::kGaussianProportional:
      if (!g_max) throw ValidationError("state-dependent noise: supply G_max");
      return {inf, nm.scale * *g_max / root_n};
  }
  return {inf, inf};
}

/// Seeded stochastic first/second-order oracle for one trial.
///
/// Single owner: every query advances the stream. Gradient queries draw n
/// Gaussians in coordinate order (none for kNone); Hessian queries draw
/// n(n+1)/2 Gaussians over the upper triangle, row-major, only when
/// hessian_sigma > 0. Optimizers draw their own uniforms from the same
/// stream through rng().
class OracleStream {
 public:
  OracleStream(const Objective& objective, NoiseModel noise, Rng rng)
      : objective_(&objective), noise_(noise), rng_(std::move(rng)) {
    noise_.validate();
  }

  OracleStream(const Objective& objective, NoiseModel noise, std::uint64_t master_seed, std::uint64_t run_id)
      : OracleStream(objective, noise, Rng::for_run(master_seed, run_id)) {}

  const Objective& objective() const noexcept { return *objective_; }
  const NoiseModel& noise() const noexcept { return noise_; }
  Rng& rng() noexcept { return rng_; }

  Vector noisy_grad(const Vector& x) {
    Vector g = objective_->gradient(x);
    const Index n = g.size();
    switch (noise_.kind) {
      case NoiseKind::kNone:
        break;
      case NoiseKind::kGaussianFixed:
        for (Index j = 0; j < n; ++j) g(j) += noise_.sigma * rng_.gaussian();
        break;
      case NoiseKind::kGaussianProportional: {
        const double sd = noise_.scale * g.norm() / static_cast<double>(n);
        for (Index j = 0; j < n; ++j) g(j) += sd * rng_.gaussian();
        break;
      }
      case NoiseKind::kClippedGaussian: {
        const double cap = 2.0 * noise_.sigma;
        for (Index j = 0; j < n; ++j) g(j) += std::clamp(noise_.sigma * rng_.gaussian(), -cap, cap);
        break;
      }
    }
    return g;
  }

  Matrix noisy_hessian(const Vector& x) {
    if (!objective_->has_hessian()) throw ValidationError("noisy_hessian: objective provides no Hessian");
    Matrix h = objective_->hessian(x);
    if (noise_.hessian_sigma > 0.0) {
      const Index n = h.rows();
      for (Index i = 0; i < n; ++i) {
        for (Index j = i; j < n; ++j) {
          const double z = noise_.hessian_sigma * rng_.gaussian();
          h(i, j) += z;
          if (j != i) h(j, i) += z;
        }
      }
    }
    return h;
  }

 private:
  const Objective* objective_;
  NoiseModel noise_;
  Rng rng_;
};

}  // namespace drsub
