#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "drsub/core.hpp"
#include "drsub/io.hpp"
#include "drsub/rng.hpp"

namespace drsub {

/// Gamma function by the Lanczos approximation (g = 7, nine coefficients),
/// with the reflection formula below 1/2. Relative error is near 1e-15;
/// integer arguments up to 171 return the exact factorial.
inline double gamma_fn(double x) {
  if (!(x > 0.0)) throw ValidationError("gamma_fn: argument must be > 0");
  if (x <= 171.0 && x == std::floor(x)) {
    double f = 1.0;
    for (double k = 2.0; k < x; k += 1.0) f *= k;
    return f;
  }
  static constexpr double g = 7.0;
  static constexpr std::array<double, 9> coef = {
      0.99999999999980993,     676.5203681218851,     -1259.1392167224028,
      771.32342877765313,      -176.61502916214059,   12.507343278686905,
      -0.13857109526572012,    9.9843695780195716e-6, 1.5056327351493116e-7};
  if (x < 0.5) {
    return std::numbers::pi / (std::sin(std::numbers::pi * x) * gamma_fn(1.0 - x));
  }
  const double z = x - 1.0;
  double acc = coef[0];
  for (std::size_t i = 1; i < coef.size(); ++i) acc += coef[i] / (z + static_cast<double>(i));
  const double t = z + g + 0.5;
  return std::sqrt(2.0 * std::numbers::pi) * std::exp((z + 0.5) * std::log(t) - t) * acc;
}

/// ||H||_2 = sqrt(lambda_max(H'H)) by power iteration on H'H.
///
/// Iterates until the Rayleigh quotient changes by at most 1e-12 relative.
/// The converged value is then re-checked from a seeded random start, which
/// catches a start vector with no component along the dominant direction.
inline double spectral_norm(const Matrix& h, int max_iterations = 100000) {
  detail::require(h.rows() == h.cols() && h.rows() >= 1, "spectral_norm: matrix must be square");
  const Matrix gram = h.transpose() * h;
  if (gram.cwiseAbs().maxCoeff() == 0.0) return 0.0;
  const Index n = h.rows();

  auto run = [&](Vector v) {
    v.normalize();
    double rq = 0.0;
    for (int it = 0; it < max_iterations; ++it) {
      Vector w = gram * v;
      const double next = v.dot(w);
      const double wn = w.norm();
      if (wn == 0.0) return 0.0;  // v in the null space
      v = w / wn;
      if (it > 0 && std::abs(next - rq) <= 1e-12 * std::abs(next)) return next;
      rq = next;
    }
    throw NumericalError("spectral_norm: power iteration did not converge");
  };

  double best = run(Vector::Ones(n));
  Rng rng(0x5eed);
  for (int restart = 0; restart < 3; ++restart) {
    Vector start(n);
    for (Index j = 0; j < n; ++j) start(j) = rng.gaussian();
    const double other = run(start);
    if (other <= best * (1.0 + 1e-10)) break;
    best = other;
  }
  return std::sqrt(best);
}

/// K = Gamma(1/(1-alpha)) / (1-alpha), the bound on the momentum error series.
inline double k_constant(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("k_constant: alpha must lie in (0, 1)");
  const double r = 1.0 / (1.0 - alpha);
  return r * gamma_fn(r);
}

/// Partial sum sum_{t=1}^{T} (1 - t^{-alpha})^t; never exceeds k_constant(alpha).
inline double momentum_series_check(double alpha, long long terms) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("momentum_series_check: alpha must lie in (0, 1)");
  double sum = 0.0;
  for (long long t = 1; t <= terms; ++t) {
    const double td = static_cast<double>(t);
    sum += std::exp(td * std::log1p(-std::pow(td, -alpha)));
  }
  return sum;
}

/// Problem constants entering the high-probability bounds.
struct BoundConstants {
  double lipschitz = 0.0;   // L, smoothness of grad F
  double diameter = 0.0;    // D
  double noise_bound = 0.0; // M, almost-sure gradient error bound
  double sigma = 0.0;       // gradient noise scale
  double opt = 1.0;         // OPT or an approximation of it
  double grad0_norm = 0.0;  // ||grad F(x_0) - g_0||

  void validate() const {
    detail::require(lipschitz >= 0.0 && diameter >= 0.0, "bounds: L and D must be >= 0");
    detail::require(noise_bound >= 0.0 && sigma >= 0.0, "bounds: M and sigma must be >= 0");
    detail::require(opt > 0.0, "bounds: OPT must be > 0");
    detail::require(grad0_norm >= 0.0, "bounds: grad0_norm must be >= 0");
  }
};

/// Lower bound paired with the probability it holds with.
struct ProbabilisticBound {
  double bound;
  double prob;
};

namespace detail {

inline void check_horizon(double iterations) { require(iterations >= 1.0, "bounds: T must be >= 1"); }

inline void check_confidence(double delta) {
  require(delta > 0.0 && delta <= 1.0, "bounds: delta must lie in (0, 1]");
}

inline double one_minus_inv_e() { return -std::expm1(-1.0); }

}  // namespace detail

/// PGA, average iterate, with probability >= 1 - delta:
///   OPT/2 - C/sqrt(T) - D M sqrt(ln(1/delta) / (2T)),  C = (8(L+M)^2 + D^2)/8.
inline double theorem1_bound(const BoundConstants& c, double iterations, double delta) {
  c.validate();
  detail::check_horizon(iterations);
  detail::check_confidence(delta);
  const double lm = c.lipschitz + c.noise_bound;
  const double big_c = (8.0 * lm * lm + c.diameter * c.diameter) / 8.0;
  const double azuma = c.diameter * c.noise_bound * std::sqrt(std::log(1.0 / delta) / (2.0 * iterations));
  return 0.5 * c.opt - big_c / std::sqrt(iterations) - azuma;
}

/// Which smoothness constant of the non-oblivious function to use.
/// kDerived: L (gamma + e^{-gamma} - 1) / gamma^2 (equals L/e at gamma = 1).
/// kStated:  L (1 + 1/e).
enum class BoostedSmoothness { kDerived, kStated };

struct BoostedConstants {
  double smoothness;  // L'
  double noise;       // M' = (M + 2LD)(1 - e^{-gamma})/gamma
};

inline BoostedConstants boosted_constants(const BoundConstants& c, double gamma,
                                          BoostedSmoothness variant = BoostedSmoothness::kDerived) {
  detail::require(gamma > 0.0 && gamma <= 1.0, "bounds: gamma must lie in (0, 1]");
  const double smooth = variant == BoostedSmoothness::kDerived
                            ? c.lipschitz * (gamma + std::exp(-gamma) - 1.0) / (gamma * gamma)
                            : c.lipschitz * (1.0 + std::exp(-1.0));
  const double noise = (c.noise_bound + 2.0 * c.lipschitz * c.diameter) * (-std::expm1(-gamma) / gamma);
  return {smooth, noise};
}

/// Boosted PGA, average iterate, with probability >= 1 - delta:
///   (1 - e^{-gamma}) OPT - C'/sqrt(T) - D M' sqrt(ln(1/delta) / (2T)),
///   C' = (8(L' D + M')^2 + D^2)/8.
inline double theorem2_bound(const BoundConstants& c, double iterations, double delta, double gamma = 1.0,
                             BoostedSmoothness variant = BoostedSmoothness::kDerived) {
  c.validate();
  detail::check_horizon(iterations);
  detail::check_confidence(delta);
  const auto [smooth, noise] = boosted_constants(c, gamma, variant);
  const double inner = smooth * c.diameter + noise;
  const double big_c = (8.0 * inner * inner + c.diameter * c.diameter) / 8.0;
  const double azuma = c.diameter * noise * std::sqrt(std::log(1.0 / delta) / (2.0 * iterations));
  return -std::expm1(-gamma) * c.opt - big_c / std::sqrt(iterations) - azuma;
}

/// Q = max(||grad F(x_0) - g_0||^2 9^{2/3}, 16 sigma^2 + 3 L^2 D^2).
inline double scg_q_constant(const BoundConstants& c) {
  const double first = c.grad0_norm * c.grad0_norm * std::pow(9.0, 2.0 / 3.0);
  const double second = 16.0 * c.sigma * c.sigma + 3.0 * c.lipschitz * c.lipschitz * c.diameter * c.diameter;
  return std::max(first, second);
}

/// SCG under bounded variance, final iterate, with probability >= 1 - T/delta^2:
///   (1 - 1/e) OPT - delta 2 sqrt(Q) D / T^{1/3} - L D^2 / (2 T^2).
inline ProbabilisticBound theorem3_bound(const BoundConstants& c, double iterations, double delta) {
  c.validate();
  detail::check_horizon(iterations);
  detail::require(delta > 0.0, "bounds: delta must be > 0");
  const double d2 = c.diameter * c.diameter;
  const double bound = detail::one_minus_inv_e() * c.opt -
                       delta * 2.0 * std::sqrt(scg_q_constant(c)) * c.diameter / std::cbrt(iterations) -
                       c.lipschitz * d2 / (2.0 * iterations * iterations);
  return {bound, std::max(0.0, 1.0 - iterations / (delta * delta))};
}

/// SCG with rho_t = 1/t^alpha under sub-Gaussian noise, with probability >= 1 - delta:
///   (1 - 1/e) OPT - 2 D K sigma sqrt(ln(1/delta)) / sqrt(T) - (4K+1)/2 L D^2 / T.
inline double theorem4_bound(const BoundConstants& c, double iterations, double delta, double alpha) {
  c.validate();
  detail::check_horizon(iterations);
  detail::check_confidence(delta);
  const double k = k_constant(alpha);
  return detail::one_minus_inv_e() * c.opt -
         2.0 * c.diameter * k * c.sigma * std::sqrt(std::log(1.0 / delta)) / std::sqrt(iterations) -
         (4.0 * k + 1.0) / 2.0 * c.lipschitz * c.diameter * c.diameter / iterations;
}

/// Exponent of T in the delta term of the SCG++ bound.
/// kDerived: delta L D^2 / T.  kStated: delta L D^2 / T^2.
enum class ScgppDeltaTerm { kDerived, kStated };

/// SCG++, final iterate, with probability >= 1 - T/delta^2:
///   (1 - 1/e) OPT - delta L D^2 / T - L D^2 / (2 T^2).
inline ProbabilisticBound theorem5_bound(const BoundConstants& c, double iterations, double delta,
                                         ScgppDeltaTerm variant = ScgppDeltaTerm::kDerived) {
  c.validate();
  detail::check_horizon(iterations);
  detail::require(delta > 0.0, "bounds: delta must be > 0");
  const double ld2 = c.lipschitz * c.diameter * c.diameter;
  const double denom = variant == ScgppDeltaTerm::kDerived ? iterations : iterations * iterations;
  const double bound = detail::one_minus_inv_e() * c.opt - delta * ld2 / denom - ld2 / (2.0 * iterations * iterations);
  return {bound, std::max(0.0, 1.0 - iterations / (delta * delta))};
}

/// delta achieving confidence p in the 1 - T/delta^2 bounds: sqrt(T / (1 - p)).
inline double delta_for_confidence(double iterations, double p) {
  detail::require(p >= 0.0 && p < 1.0, "bounds: confidence p must lie in [0, 1)");
  return std::sqrt(iterations / (1.0 - p));
}

/// Theoretical lower bound evaluated at t = 1..T.
struct BoundCurve {
  int theorem = 0;
  std::vector<std::string> notes;  // written as '#' header comments
  std::vector<int> t;
  std::vector<double> value;
  std::vector<std::optional<double>> prob;

  double at(int step) const {
    detail::require(step >= 1 && step <= static_cast<int>(t.size()) && t[static_cast<std::size_t>(step - 1)] == step,
                    "bound curve has no value at t = " + std::to_string(step));
    return value[static_cast<std::size_t>(step - 1)];
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << "# theorem " << theorem << '\n';
    for (const auto& n : notes) os << "# " << n << '\n';
    os << "t,bound_value,prob\n";
    for (std::size_t i = 0; i < t.size(); ++i) {
      os << t[i] << ',' << io::sig17(value[i]) << ',';
      if (prob[i]) os << io::sig17(*prob[i]);
      os << '\n';
    }
    return os.str();
  }

  static BoundCurve parse_csv(const std::string& text, const std::string& source = "bounds") {
    BoundCurve curve;
    std::istringstream is(text);
    std::string line;
    int number = 0;
    bool header = false;
    while (std::getline(is, line)) {
      ++number;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const std::string where = source + ":" + std::to_string(number);
      if (line[0] == '#') {
        const std::string body = line.substr(line.find_first_not_of("# ") == std::string::npos
                                                 ? line.size()
                                                 : line.find_first_not_of("# "));
        if (body.rfind("theorem ", 0) == 0) {
          curve.theorem = static_cast<int>(io::parse_int(body.substr(8), where));
        } else {
          curve.notes.push_back(body);
        }
        continue;
      }
      if (!header) {
        if (line != "t,bound_value,prob") throw ValidationError(where + ": expected header 't,bound_value,prob'");
        header = true;
        continue;
      }
      const auto cells = io::split(line, ',');
      if (cells.size() != 3) throw ValidationError(where + ": expected 3 columns");
      curve.t.push_back(static_cast<int>(io::parse_int(cells[0], where)));
      curve.value.push_back(io::parse_double(cells[1], where));
      curve.prob.push_back(cells[2].empty() ? std::nullopt : std::optional(io::parse_double(cells[2], where)));
    }
    if (!header) throw ValidationError(source + ": missing CSV header");
    return curve;
  }
};

}  // namespace drsub
