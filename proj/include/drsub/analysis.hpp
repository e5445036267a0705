#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "drsub/bounds.hpp"
#include "drsub/core.hpp"
#include "drsub/optimizers.hpp"

namespace drsub {

/// Runs sharing objective, algorithm, noise and T; ordered by run_id.
class TrialBattery {
 public:
  explicit TrialBattery(std::vector<RunRecord> runs) : runs_(std::move(runs)) {
    if (runs_.empty()) throw ValidationError("trial battery is empty");
    std::sort(runs_.begin(), runs_.end(), [](const auto& a, const auto& b) { return a.run_id() < b.run_id(); });
    for (const auto& r : runs_) {
      detail::require(r.iterations() == runs_.front().iterations(), "trial battery: runs differ in T");
      detail::require(r.config.algorithm == runs_.front().config.algorithm, "trial battery: runs differ in algorithm");
    }
  }

  const std::vector<RunRecord>& runs() const noexcept { return runs_; }
  std::size_t size() const noexcept { return runs_.size(); }
  int iterations() const { return runs_.front().iterations(); }
  Algorithm algorithm() const { return runs_.front().config.algorithm; }

 private:
  std::vector<RunRecord> runs_;
};

/// Per-iteration summary across runs. Quantiles use the nearest-rank rule
/// (the ceil(qN)-th order statistic); the median is the 0.5 quantile.
struct Statistic {
  enum class Kind { kMin, kMedian, kQuantile, kMean };
  Kind kind = Kind::kMedian;
  double q = 0.5;

  static Statistic min() { return {Kind::kMin, 0.0}; }
  static Statistic median() { return {Kind::kMedian, 0.5}; }
  static Statistic quantile(double q) { return {Kind::kQuantile, q}; }
  static Statistic mean() { return {Kind::kMean, 0.0}; }

  std::string label() const {
    switch (kind) {
      case Kind::kMin: return "min";
      case Kind::kMedian: return "median";
      case Kind::kMean: return "mean";
      case Kind::kQuantile: {
        std::ostringstream os;
        os << 'q' << q * 100.0;
        return os.str();
      }
    }
    return "?";
  }
};

enum class Series { kFTrue, kRunningAverage };

/// Series a bound certifies: the running average for the gradient-ascent
/// methods, the current iterate for continuous greedy.
inline Series natural_series(Algorithm a) { return is_gradient_ascent(a) ? Series::kRunningAverage : Series::kFTrue; }

struct Curve {
  std::string label;
  std::vector<int> t;
  std::vector<double> value;
};

namespace detail {

/// k-th order statistic (1-based) with k = ceil(qN), clamped to [1, N].
inline double nearest_rank(std::vector<double>& values, double q) {
  const auto n = values.size();
  auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n) - 1e-9));
  k = std::clamp<std::size_t>(k, 1, n);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k - 1), values.end());
  return values[k - 1];
}

}  // namespace detail

inline Curve trajectory_statistic(const TrialBattery& battery, const Statistic& stat, Series series) {
  if (stat.kind == Statistic::Kind::kQuantile) {
    detail::require(stat.q > 0.0 && stat.q < 1.0, "trajectory_statistic: q must lie in (0, 1)");
  }
  Curve curve;
  curve.label = stat.label();
  const int T = battery.iterations();
  std::vector<double> column(battery.size());
  for (int t = 1; t <= T; ++t) {
    for (std::size_t r = 0; r < battery.size(); ++r) {
      const auto& it = battery.runs()[r].iterates[static_cast<std::size_t>(t - 1)];
      column[r] = series == Series::kFTrue ? it.f_true : it.f_running_avg;
    }
    double v = 0.0;
    switch (stat.kind) {
      case Statistic::Kind::kMin: v = *std::min_element(column.begin(), column.end()); break;
      case Statistic::Kind::kMean:
        v = std::accumulate(column.begin(), column.end(), 0.0) / static_cast<double>(column.size());
        break;
      case Statistic::Kind::kMedian:
      case Statistic::Kind::kQuantile: v = detail::nearest_rank(column, stat.q); break;
    }
    curve.t.push_back(t);
    curve.value.push_back(v);
  }
  return curve;
}

inline Curve normalized(Curve curve, double opt) {
  detail::require(opt > 0.0, "normalized: OPT must be > 0");
  for (double& v : curve.value) v /= opt;
  return curve;
}

inline std::string curve_to_csv(const Curve& curve) {
  std::ostringstream os;
  os << "t,stat_value,stat_label\n";
  for (std::size_t i = 0; i < curve.t.size(); ++i) {
    os << curve.t[i] << ',' << io::sig17(curve.value[i]) << ',' << curve.label << '\n';
  }
  return os.str();
}

/// l(t) = c1 - c2 / t^p fitted to a curve.
struct FittedCurve {
  std::string label;
  double c1 = 0.0;
  double c2 = 0.0;
  double p = 0.5;
  double residual = 0.0;  // sum of squared errors over the fitted points
  int n_points = 0;

  double operator()(double t) const { return c1 - c2 * std::pow(t, -p); }
};

namespace detail {

struct FitPoints {
  std::vector<double> z;  // t^-p
  std::vector<double> y;
};

inline FitPoints fit_points(const Curve& curve, double p, int t_min) {
  require(curve.t.size() == curve.value.size(), "fit_curve: t and value lengths differ");
  FitPoints pts;
  for (std::size_t i = 0; i < curve.t.size(); ++i) {
    if (curve.t[i] < t_min) continue;
    pts.z.push_back(std::pow(static_cast<double>(curve.t[i]), -p));
    pts.y.push_back(curve.value[i]);
  }
  if (pts.y.size() < 2) throw ValidationError("fit_curve: need at least 2 points with t >= t_min");
  return pts;
}

inline double sse(const FitPoints& pts, double c1, double c2) {
  double s = 0.0;
  for (std::size_t i = 0; i < pts.y.size(); ++i) {
    const double r = pts.y[i] - (c1 - c2 * pts.z[i]);
    s += r * r;
  }
  return s;
}

}  // namespace detail

/// Ordinary least squares on the basis {1, -t^-p} over points with t >= t_min,
/// solved in closed form from centered normal equations.
inline FittedCurve fit_curve(const Curve& curve, double p = 0.5, int t_min = 1) {
  const auto pts = detail::fit_points(curve, p, t_min);
  const auto n = static_cast<double>(pts.y.size());
  const double zbar = std::accumulate(pts.z.begin(), pts.z.end(), 0.0) / n;
  const double ybar = std::accumulate(pts.y.begin(), pts.y.end(), 0.0) / n;
  double szz = 0.0, szy = 0.0;
  for (std::size_t i = 0; i < pts.y.size(); ++i) {
    szz += (pts.z[i] - zbar) * (pts.z[i] - zbar);
    szy += (pts.z[i] - zbar) * (pts.y[i] - ybar);
  }
  if (!(szz > 0.0)) throw ValidationError("fit_curve: singular design (all t equal)");
  FittedCurve fit;
  fit.label = curve.label;
  fit.p = p;
  fit.c2 = -szy / szz;
  fit.c1 = ybar + fit.c2 * zbar;
  fit.residual = detail::sse(pts, fit.c1, fit.c2);
  fit.n_points = static_cast<int>(pts.y.size());
  return fit;
}

/// Two-stage fit: c1 is the mean of the independent fits' c1 values, and
/// each c2 is then the least-squares optimum given that shared c1.
inline std::vector<FittedCurve> shared_c1_refit(const std::vector<Curve>& curves, double p = 0.5, int t_min = 1) {
  detail::require(!curves.empty(), "shared_c1_refit: need at least one curve");
  double c1 = 0.0;
  for (const auto& c : curves) c1 += fit_curve(c, p, t_min).c1;
  c1 /= static_cast<double>(curves.size());

  std::vector<FittedCurve> out;
  for (const auto& c : curves) {
    const auto pts = detail::fit_points(c, p, t_min);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < pts.y.size(); ++i) {
      num += (c1 - pts.y[i]) * pts.z[i];
      den += pts.z[i] * pts.z[i];
    }
    FittedCurve fit;
    fit.label = c.label;
    fit.p = p;
    fit.c1 = c1;
    fit.c2 = num / den;
    fit.residual = detail::sse(pts, fit.c1, fit.c2);
    fit.n_points = static_cast<int>(pts.y.size());
    out.push_back(fit);
  }
  return out;
}

inline std::string fit_report(const std::vector<FittedCurve>& fits) {
  std::ostringstream os;
  for (const auto& f : fits) {
    os << "[fit " << f.label << "]\n"
       << "c1 " << io::sig17(f.c1) << '\n'
       << "c2 " << io::sig17(f.c2) << '\n'
       << "p " << io::sig17(f.p) << '\n'
       << "residual " << io::sig17(f.residual) << '\n'
       << "n_points " << f.n_points << '\n';
  }
  return os.str();
}

/// Raised when at least one run of a battery failed; carries the runs that
/// completed, ordered by run_id.
class BatteryError : public Error {
 public:
  BatteryError(const std::string& what, std::vector<RunRecord> completed)
      : Error(what), completed_(std::move(completed)) {}
  const std::vector<RunRecord>& completed() const noexcept { return completed_; }

 private:
  std::vector<RunRecord> completed_;
};

/// Executes runs 0..count-1 of `base` (run_id overwritten) on up to `threads`
/// workers (0 = hardware concurrency). Each run owns its oracle stream, so
/// the result does not depend on scheduling.
inline std::vector<RunRecord> run_battery(const Objective& obj, const NoiseModel& noise, const RunConfig& base,
                                          int count, int threads = 0) {
  detail::require(count >= 1, "run_battery: need at least one run");
  base.validate();
  unsigned workers = threads > 0 ? static_cast<unsigned>(threads) : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(count));

  std::vector<std::optional<RunRecord>> slots(static_cast<std::size_t>(count));
  std::vector<std::string> errors(static_cast<std::size_t>(count));
  std::atomic<int> next{0};
  auto work = [&] {
    for (int id = next++; id < count; id = next++) {
      RunConfig cfg = base;
      cfg.run_id = static_cast<std::uint64_t>(id);
      try {
        slots[static_cast<std::size_t>(id)] = run_trial(obj, noise, cfg);
      } catch (const std::exception& e) {
        errors[static_cast<std::size_t>(id)] = e.what();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  std::vector<RunRecord> done;
  std::string first_error;
  for (int id = 0; id < count; ++id) {
    if (slots[static_cast<std::size_t>(id)]) {
      done.push_back(std::move(*slots[static_cast<std::size_t>(id)]));
    } else if (first_error.empty()) {
      first_error = "run " + std::to_string(id) + " failed: " + errors[static_cast<std::size_t>(id)];
    }
  }
  if (!first_error.empty()) throw BatteryError(first_error, std::move(done));
  return done;
}

struct ApproxOptOptions {
  int runs = 100;
  int iterations = 5000;
  NoiseModel noise = NoiseModel::none();
  MomentumRule momentum = MomentumRule::poly48();
  int threads = 0;
};

/// OPT estimate: the largest F(x_T) over a battery of SCG runs.
inline double approx_opt(const Objective& obj, std::uint64_t seed, const ApproxOptOptions& opt = {}) {
  RunConfig cfg;
  cfg.algorithm = Algorithm::kScg;
  cfg.iterations = opt.iterations;
  cfg.momentum = opt.momentum;
  cfg.master_seed = seed;
  cfg.keep_iterates = false;
  const auto runs = run_battery(obj, opt.noise, cfg, opt.runs, opt.threads);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& r : runs) best = std::max(best, r.iterates.back().f_true);
  return best;
}

/// Which per-run value is compared against a bound at t = T.
enum class BoundStatistic { kAverageIterate, kFinalIterate };

inline BoundStatistic natural_bound_statistic(Algorithm a) {
  return is_gradient_ascent(a) ? BoundStatistic::kAverageIterate : BoundStatistic::kFinalIterate;
}

/// Fraction of runs whose statistic at T falls strictly below the bound at T.
/// The bound must be tabulated on exactly t = 1..T.
inline double bound_violation_rate(const TrialBattery& battery, const BoundCurve& bound, BoundStatistic statistic) {
  const int T = battery.iterations();
  if (static_cast<int>(bound.t.size()) != T) {
    throw ValidationError("bound_violation_rate: bound grid has " + std::to_string(bound.t.size()) +
                          " points but the battery has T = " + std::to_string(T));
  }
  for (int i = 0; i < T; ++i) {
    if (bound.t[static_cast<std::size_t>(i)] != i + 1) throw ValidationError("bound_violation_rate: grid mismatch");
  }
  const double limit = bound.value.back();
  std::size_t below = 0;
  for (const auto& r : battery.runs()) {
    const auto& last = r.iterates.back();
    const double v = statistic == BoundStatistic::kAverageIterate ? last.f_running_avg : last.f_true;
    if (v < limit) ++below;
  }
  return static_cast<double>(below) / static_cast<double>(battery.size());
}

}  // namespace drsub
