#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "drsub/core.hpp"
#include "drsub/geometry.hpp"
#include "drsub/objectives.hpp"
#include "drsub/stochastic_oracles.hpp"

namespace drsub {

enum class Algorithm { kPga, kBoostedPga, kScg, kScgpp };

inline const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::kPga: return "pga";
    case Algorithm::kBoostedPga: return "boosted_pga";
    case Algorithm::kScg: return "scg";
    case Algorithm::kScgpp: return "scgpp";
  }
  return "?";
}

inline Algorithm algorithm_from_string(const std::string& name) {
  if (name == "pga") return Algorithm::kPga;
  if (name == "boosted_pga") return Algorithm::kBoostedPga;
  if (name == "scg") return Algorithm::kScg;
  if (name == "scgpp") return Algorithm::kScgpp;
  throw ValidationError("unknown algorithm '" + name + "'");
}

inline bool is_gradient_ascent(Algorithm a) { return a == Algorithm::kPga || a == Algorithm::kBoostedPga; }

/// Step size for the projected-gradient methods: constant eta, or c / sqrt(t).
struct StepRule {
  enum class Kind { kConstant, kDiminishing };
  Kind kind = Kind::kDiminishing;
  double value = 2.0;

  static StepRule constant(double eta) { return {Kind::kConstant, eta}; }
  static StepRule diminishing(double c) { return {Kind::kDiminishing, c}; }

  double at(int t) const { return kind == Kind::kConstant ? value : value / std::sqrt(static_cast<double>(t)); }
};

/// Momentum weight rho_t of continuous greedy.
///  kPoly48:   4 / (t + 8)^(2/3)
///  kAlpha:    1 / t^alpha, alpha in (0, 1)
///  kConstant: fixed rho in (0, 1]; a test hook (rho = 1 disables averaging)
struct MomentumRule {
  enum class Kind { kPoly48, kAlpha, kConstant };
  Kind kind = Kind::kPoly48;
  double value = 0.0;

  static MomentumRule poly48() { return {Kind::kPoly48, 0.0}; }
  static MomentumRule alpha(double a) { return {Kind::kAlpha, a}; }
  static MomentumRule constant(double rho) { return {Kind::kConstant, rho}; }

  double at(int t) const {
    switch (kind) {
      case Kind::kPoly48: return 4.0 / std::pow(static_cast<double>(t) + 8.0, 2.0 / 3.0);
      case Kind::kAlpha: return 1.0 / std::pow(static_cast<double>(t), value);
      case Kind::kConstant: return value;
    }
    return 1.0;
  }
};

enum class InitRule { kGaussianProject, kZero };

enum class ReturnedConvention { kUniformRandomIterate, kLastIterate, kBestIterate };

inline const char* to_string(ReturnedConvention c) {
  switch (c) {
    case ReturnedConvention::kUniformRandomIterate: return "uniform_random_iterate";
    case ReturnedConvention::kLastIterate: return "last_iterate";
    case ReturnedConvention::kBestIterate: return "best_iterate";
  }
  return "?";
}

inline ReturnedConvention returned_convention_from_string(const std::string& name) {
  if (name == "uniform_random_iterate") return ReturnedConvention::kUniformRandomIterate;
  if (name == "last_iterate") return ReturnedConvention::kLastIterate;
  if (name == "best_iterate") return ReturnedConvention::kBestIterate;
  throw ValidationError("unknown returned convention '" + name + "'");
}

struct RunConfig {
  Algorithm algorithm = Algorithm::kScg;
  int iterations = 100;
  StepRule step = StepRule::diminishing(2.0);
  /// Weak-submodularity ratio used by boosted PGA; 1 means DR-submodular.
  double gamma = 1.0;
  MomentumRule momentum = MomentumRule::poly48();
  /// SCG++ mini-batch size; 0 means "equal to the iteration count".
  int batch_size = 0;
  /// Initial point of the gradient-ascent methods (SCG variants always start at 0).
  InitRule init = InitRule::kGaussianProject;
  /// Unset: uniform random iterate for PGA variants, last iterate otherwise.
  std::optional<ReturnedConvention> returned;
  std::uint64_t master_seed = 0;
  std::uint64_t run_id = 0;
  /// Store x_t for every iteration (memory grows as T * n).
  bool keep_iterates = true;
  /// Boosted PGA only: use this s_t instead of sampling it. Testing hook.
  std::optional<double> forced_s;
  double projection_tol = 1e-8;
  int projection_max_iterations = 10000;
  ProjectionMethod projection_method = ProjectionMethod::kActiveSet;

  ReturnedConvention effective_returned() const {
    if (returned) return *returned;
    return is_gradient_ascent(algorithm) ? ReturnedConvention::kUniformRandomIterate
                                         : ReturnedConvention::kLastIterate;
  }

  int effective_batch() const { return batch_size > 0 ? batch_size : iterations; }

  void validate() const {
    detail::require(iterations >= 1, "run config: T must be >= 1");
    detail::require(std::isfinite(step.value) && step.value > 0.0, "run config: step size must be positive");
    detail::require(gamma > 0.0 && gamma <= 1.0, "run config: gamma must lie in (0, 1]");
    if (momentum.kind == MomentumRule::Kind::kAlpha) {
      detail::require(momentum.value > 0.0 && momentum.value < 1.0, "run config: momentum alpha must lie in (0, 1)");
    }
    if (momentum.kind == MomentumRule::Kind::kConstant) {
      detail::require(momentum.value > 0.0 && momentum.value <= 1.0, "run config: constant rho must lie in (0, 1]");
    }
    detail::require(batch_size >= 0, "run config: batch_size must be >= 0");
    if (forced_s) detail::require(*forced_s >= 0.0 && *forced_s <= 1.0, "run config: forced s must lie in [0, 1]");
  }
};

struct IterateRecord {
  int t;
  Vector x;  // empty unless RunConfig::keep_iterates
  double f_true;
  double f_running_avg;
};

/// One trial: per-iteration true values t = 1..T plus the returned solution.
struct RunRecord {
  RunConfig config;
  std::vector<IterateRecord> iterates;
  double returned_value = 0.0;
  int returned_t = 0;
  ReturnedConvention convention = ReturnedConvention::kLastIterate;

  int iterations() const { return static_cast<int>(iterates.size()); }
  std::uint64_t run_id() const { return config.run_id; }
};

/// Inverse CDF of the density e^{gamma(s-1)} / ((1 - e^{-gamma}) / gamma) on [0, 1].
inline double boosted_sample(double u, double gamma) {
  const double lo = std::exp(-gamma);
  const double s = 1.0 + std::log(lo + u * (1.0 - lo)) / gamma;
  return std::clamp(s, 0.0, 1.0);
}

/// (1 - e^{-gamma}) / gamma, the boosted estimator's gradient scale.
inline double boosted_scale(double gamma) { return -std::expm1(-gamma) / gamma; }

namespace detail {

class Recorder {
 public:
  Recorder(const Objective& obj, const RunConfig& cfg) : obj_(obj), keep_(cfg.keep_iterates) {
    record_.config = cfg;
    record_.iterates.reserve(static_cast<std::size_t>(cfg.iterations));
  }

  void push(int t, const Vector& x) {
    const double f = obj_.value(x);
    sum_ += f;
    record_.iterates.push_back({t, keep_ ? x : Vector(), f, sum_ / static_cast<double>(t)});
  }

  RunRecord finish(ReturnedConvention convention, Rng& rng) {
    auto& its = record_.iterates;
    const int T = static_cast<int>(its.size());
    int chosen = T;
    switch (convention) {
      case ReturnedConvention::kLastIterate:
        break;
      case ReturnedConvention::kUniformRandomIterate:
        chosen = std::min(T, 1 + static_cast<int>(rng.uniform() * T));
        break;
      case ReturnedConvention::kBestIterate:
        chosen = 1 + static_cast<int>(std::max_element(its.begin(), its.end(),
                                                       [](const auto& a, const auto& b) {
                                                         return a.f_true < b.f_true;
                                                       }) -
                                      its.begin());
        break;
    }
    record_.convention = convention;
    record_.returned_t = chosen;
    record_.returned_value = its[static_cast<std::size_t>(chosen - 1)].f_true;
    return std::move(record_);
  }

 private:
  const Objective& obj_;
  bool keep_;
  double sum_ = 0.0;
  RunRecord record_;
};

inline void check_run(const Objective& obj, OracleStream& oracle, const RunConfig& cfg, Algorithm expected) {
  cfg.validate();
  require(cfg.algorithm == expected, std::string("run config algorithm is not ") + to_string(expected));
  require(&oracle.objective() == &obj, "oracle stream is bound to a different objective");
}

inline Vector initial_point(const Objective& obj, OracleStream& oracle, const RunConfig& cfg) {
  const Index n = obj.dim();
  if (cfg.init == InitRule::kZero) return Vector::Zero(n);
  Vector x(n);
  for (Index j = 0; j < n; ++j) x(j) = oracle.rng().gaussian();
  return obj.polytope().project(x, cfg.projection_tol, cfg.projection_max_iterations,
                                 cfg.projection_method);
}

template <class Direction>
RunRecord projected_ascent(const Objective& obj, OracleStream& oracle, const RunConfig& cfg, Direction&& direction) {
  const Polytope& poly = obj.polytope();
  Recorder rec(obj, cfg);
  Vector x = initial_point(obj, oracle, cfg);
  for (int t = 1; t <= cfg.iterations; ++t) {
    const Vector g = direction(x);
    x = poly.project(x + cfg.step.at(t) * g, cfg.projection_tol, cfg.projection_max_iterations,
                                 cfg.projection_method);
    rec.push(t, x);
  }
  return rec.finish(cfg.effective_returned(), oracle.rng());
}

}  // namespace detail

/// Projected gradient ascent: x_{t+1} = P(x_t + eta_t g_t).
inline RunRecord pga_run(const Objective& obj, OracleStream& oracle, const RunConfig& cfg) {
  detail::check_run(obj, oracle, cfg, Algorithm::kPga);
  return detail::projected_ascent(obj, oracle, cfg, [&](const Vector& x) { return oracle.noisy_grad(x); });
}

/// Boosted PGA: ascends along (1 - e^{-gamma})/gamma * g(s_t x_t) with s_t
/// drawn by inverse CDF, an unbiased estimate of the non-oblivious gradient.
inline RunRecord boosted_pga_run(const Objective& obj, OracleStream& oracle, const RunConfig& cfg) {
  detail::check_run(obj, oracle, cfg, Algorithm::kBoostedPga);
  const double scale = boosted_scale(cfg.gamma);
  return detail::projected_ascent(obj, oracle, cfg, [&](const Vector& x) {
    const double u = oracle.rng().uniform();
    const double s = cfg.forced_s ? *cfg.forced_s : boosted_sample(u, cfg.gamma);
    return Vector(scale * oracle.noisy_grad(s * x));
  });
}

/// Stochastic continuous greedy with momentum-averaged gradients and
/// Frank-Wolfe steps of length 1/T from the origin.
inline RunRecord scg_run(const Objective& obj, OracleStream& oracle, const RunConfig& cfg) {
  detail::check_run(obj, oracle, cfg, Algorithm::kScg);
  const Polytope& poly = obj.polytope();
  const double step = 1.0 / cfg.iterations;
  detail::Recorder rec(obj, cfg);
  Vector x = Vector::Zero(obj.dim());
  Vector momentum = Vector::Zero(obj.dim());
  for (int t = 1; t <= cfg.iterations; ++t) {
    const double rho = cfg.momentum.at(t);
    momentum = (1.0 - rho) * momentum + rho * oracle.noisy_grad(x);
    x += step * poly.lmo(momentum);
    rec.push(t, x);
  }
  return rec.finish(cfg.effective_returned(), oracle.rng());
}

/// SCG++: the gradient estimate starts from a mini-batch gradient at the
/// origin and is then advanced by mini-batch Hessian estimates taken at
/// random points of the last segment, times the segment itself.
inline RunRecord scgpp_run(const Objective& obj, OracleStream& oracle, const RunConfig& cfg) {
  detail::check_run(obj, oracle, cfg, Algorithm::kScgpp);
  const Polytope& poly = obj.polytope();
  const Index n = obj.dim();
  const double step = 1.0 / cfg.iterations;
  const int batch = cfg.effective_batch();
  detail::Recorder rec(obj, cfg);
  Vector x = Vector::Zero(n);
  Vector previous = x;
  Vector estimate = Vector::Zero(n);
  Matrix hessian_mean(n, n);
  for (int t = 1; t <= cfg.iterations; ++t) {
    if (t == 1) {
      for (int b = 0; b < batch; ++b) estimate += oracle.noisy_grad(x);
      estimate /= static_cast<double>(batch);
    } else {
      hessian_mean.setZero();
      for (int b = 0; b < batch; ++b) {
        const double a = oracle.rng().uniform();
        hessian_mean += oracle.noisy_hessian(a * x + (1.0 - a) * previous);
      }
      hessian_mean /= static_cast<double>(batch);
      estimate += hessian_mean * (x - previous);
    }
    previous = x;
    x += step * poly.lmo(estimate);
    rec.push(t, x);
  }
  return rec.finish(cfg.effective_returned(), oracle.rng());
}

inline RunRecord run_algorithm(const Objective& obj, OracleStream& oracle, const RunConfig& cfg) {
  switch (cfg.algorithm) {
    case Algorithm::kPga: return pga_run(obj, oracle, cfg);
    case Algorithm::kBoostedPga: return boosted_pga_run(obj, oracle, cfg);
    case Algorithm::kScg: return scg_run(obj, oracle, cfg);
    case Algorithm::kScgpp: return scgpp_run(obj, oracle, cfg);
  }
  throw ValidationError("unknown algorithm");
}

/// Runs one trial on its own stream derived from (master_seed, run_id).
inline RunRecord run_trial(const Objective& obj, const NoiseModel& noise, const RunConfig& cfg) {
  OracleStream oracle(obj, noise, cfg.master_seed, cfg.run_id);
  return run_algorithm(obj, oracle, cfg);
}

}  // namespace drsub

namespace drsub {

/// CSV form of a set of runs: run_id,algorithm,t,f_true,f_running_avg,
/// rows ordered by (run_id, t), values with 17 significant digits.
inline std::string runs_to_csv(const std::vector<RunRecord>& runs) {
  std::vector<const RunRecord*> order;
  for (const auto& r : runs) order.push_back(&r);
  std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->run_id() < b->run_id(); });
  std::ostringstream os;
  os << "run_id,algorithm,t,f_true,f_running_avg\n";
  for (const RunRecord* r : order) {
    const char* name = to_string(r->config.algorithm);
    for (const auto& it : r->iterates) {
      os << r->run_id() << ',' << name << ',' << it.t << ',' << io::sig17(it.f_true) << ','
         << io::sig17(it.f_running_avg) << '\n';
    }
  }
  return os.str();
}

/// Rebuilds run records (values only, no iterates) from runs_to_csv output.
/// The returned value follows each algorithm's default convention, with the
/// uniform-random iterate replaced by the average iterate it stands in for.
inline std::vector<RunRecord> parse_runs_csv(const std::string& text, const std::string& source = "runs") {
  std::istringstream is(text);
  std::string line;
  int number = 0;
  bool header = false;
  std::vector<RunRecord> runs;
  while (std::getline(is, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(number);
    if (!header) {
      if (line != "run_id,algorithm,t,f_true,f_running_avg") {
        throw ValidationError(where + ": expected header 'run_id,algorithm,t,f_true,f_running_avg'");
      }
      header = true;
      continue;
    }
    const auto cells = io::split(line, ',');
    if (cells.size() != 5) throw ValidationError(where + ": expected 5 columns");
    const auto run_id = static_cast<std::uint64_t>(io::parse_int(cells[0], where));
    const Algorithm algo = algorithm_from_string(cells[1]);
    const int t = static_cast<int>(io::parse_int(cells[2], where));
    if (runs.empty() || runs.back().run_id() != run_id) {
      for (const auto& r : runs) {
        if (r.run_id() == run_id) throw ValidationError(where + ": rows of run " + cells[0] + " are not contiguous");
      }
      RunRecord r;
      r.config.algorithm = algo;
      r.config.run_id = run_id;
      r.config.keep_iterates = false;
      runs.push_back(std::move(r));
    }
    RunRecord& r = runs.back();
    if (r.config.algorithm != algo) throw ValidationError(where + ": algorithm changes within run");
    if (t != r.iterations() + 1) throw ValidationError(where + ": t must increase by one from 1");
    r.iterates.push_back({t, Vector(), io::parse_double(cells[3], where), io::parse_double(cells[4], where)});
  }
  if (!header) throw ValidationError(source + ": missing CSV header");
  for (auto& r : runs) {
    r.config.iterations = r.iterations();
    r.returned_t = r.iterations();
    const auto& last = r.iterates.back();
    r.convention = ReturnedConvention::kLastIterate;
    r.returned_value = is_gradient_ascent(r.config.algorithm) ? last.f_running_avg : last.f_true;
  }
  return runs;
}

}  // namespace drsub
