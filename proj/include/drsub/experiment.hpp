#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "drsub/analysis.hpp"
#include "drsub/bounds.hpp"
#include "drsub/core.hpp"
#include "drsub/io.hpp"
#include "drsub/objectives.hpp"
#include "drsub/optimizers.hpp"
#include "drsub/stochastic_oracles.hpp"

namespace drsub {

enum class ProblemType { kNqpGenerate, kNqpFile, kBudgetFile, kBudgetSynthetic };

struct ProblemSpec {
  ProblemType type = ProblemType::kNqpGenerate;
  std::uint64_t seed = 0;
  NqpGenerateOptions nqp;
  std::string path;
  BudgetOptions budget;
  Index channels = 10;
  Index customers = 50;
  double density = 0.3;
  int max_frequency = 10;
};

struct BoundSelection {
  int theorem = 1;
  std::optional<double> delta;
  std::optional<double> p;
  double alpha = 0.5;
  double gamma = 1.0;
  BoostedSmoothness smoothness = BoostedSmoothness::kDerived;
  ScgppDeltaTerm delta_term = ScgppDeltaTerm::kDerived;
};

struct OptSpec {
  std::optional<double> value;
  int approx_runs = 100;
  int approx_iterations = 5000;
  bool use_noise = true;
};

struct ExperimentConfig {
  ProblemSpec problem;
  RunConfig run;
  NoiseModel noise;
  int runs = 100;
  std::vector<BoundSelection> bounds;
  OptSpec opt;
  int threads = 0;
  std::string output_dir = "out";
  bool normalized = true;
  int t_min = 1;
  std::optional<double> g_max;
  std::optional<double> lipschitz;
  std::vector<Statistic> statistics = {Statistic::min(), Statistic::median(), Statistic::quantile(0.9)};

  void validate() const {
    run.validate();
    noise.validate();
    detail::require(runs >= 1, "config: runs must be >= 1");
    detail::require(threads >= 0, "config: threads must be >= 0");
    detail::require(t_min >= 1, "config: t_min must be >= 1");
    detail::require(!output_dir.empty(), "config: output_dir must not be empty");
    detail::require(opt.approx_runs >= 1 && opt.approx_iterations >= 1, "config: opt approximation counts must be >= 1");
    if (opt.value) detail::require(*opt.value > 0.0, "config: opt.value must be > 0");
    for (const auto& b : bounds) {
      detail::require(b.theorem >= 1 && b.theorem <= 5, "config: bound theorem must be 1..5");
      detail::require(b.delta.has_value() != b.p.has_value(), "config: each bound needs exactly one of delta or p");
    }
  }
};

namespace detail {

using Json = nlohmann::json;

/// Object view that records consumed keys and rejects leftovers.
class JsonObject {
 public:
  JsonObject(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ValidationError(where_ + ": expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const Json& at(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ValidationError(where_ + ": missing key '" + key + "'");
    return j_.at(key);
  }

  template <class T>
  T get(const std::string& key) {
    const Json& v = at(key);
    try {
      return v.get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ValidationError(where_ + "." + key + ": wrong type");
    }
  }

  template <class T>
  void read(const std::string& key, T& target) {
    if (has(key)) target = get<T>(key);
  }

  template <class T>
  void read(const std::string& key, std::optional<T>& target) {
    if (has(key) && !j_.at(key).is_null()) target = get<T>(key);
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ValidationError(where_ + ": unknown key '" + key + "'");
    }
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline ProblemType problem_type_from_string(const std::string& s) {
  if (s == "nqp-generate") return ProblemType::kNqpGenerate;
  if (s == "nqp-file") return ProblemType::kNqpFile;
  if (s == "budget-file") return ProblemType::kBudgetFile;
  if (s == "budget-synthetic") return ProblemType::kBudgetSynthetic;
  throw ValidationError("config: unknown problem type '" + s + "'");
}

inline void read_budget_options(JsonObject& o, BudgetOptions& b) {
  if (o.has("mapping")) {
    const auto m = o.get<std::string>("mapping");
    if (m == "exponential") {
      b.mapping.kind = FrequencyMapping::Kind::kExponential;
    } else if (m == "linear") {
      b.mapping.kind = FrequencyMapping::Kind::kLinear;
    } else {
      throw ValidationError(o.path("mapping") + ": expected 'exponential' or 'linear'");
    }
  }
  o.read("p_cap", b.mapping.p_cap);
  long long advertisers = b.advertisers;
  o.read("advertisers", advertisers);
  b.advertisers = static_cast<Index>(advertisers);
  o.read("alphas", b.alphas);
  o.read("upper", b.upper);
}

inline ProblemSpec parse_problem(const Json& j) {
  JsonObject o(j, "config.problem");
  ProblemSpec p;
  p.type = problem_type_from_string(o.get<std::string>("type"));
  switch (p.type) {
    case ProblemType::kNqpGenerate: {
      long long n = p.nqp.n, m = p.nqp.m;
      o.read("n", n);
      o.read("m", m);
      p.nqp.n = static_cast<Index>(n);
      p.nqp.m = static_cast<Index>(m);
      o.read("entry_low", p.nqp.entry_low);
      o.read("entry_high", p.nqp.entry_high);
      o.read("constraint_fill", p.nqp.constraint_fill);
      o.read("seed", p.seed);
      break;
    }
    case ProblemType::kNqpFile:
      p.path = o.get<std::string>("path");
      break;
    case ProblemType::kBudgetFile:
      p.path = o.get<std::string>("path");
      read_budget_options(o, p.budget);
      break;
    case ProblemType::kBudgetSynthetic: {
      long long channels = p.channels, customers = p.customers;
      o.read("channels", channels);
      o.read("customers", customers);
      p.channels = static_cast<Index>(channels);
      p.customers = static_cast<Index>(customers);
      o.read("density", p.density);
      o.read("max_frequency", p.max_frequency);
      o.read("seed", p.seed);
      read_budget_options(o, p.budget);
      break;
    }
  }
  o.finish();
  return p;
}

inline NoiseModel parse_noise(const Json& j) {
  JsonObject o(j, "config.noise");
  NoiseModel nm;
  nm.kind = noise_kind_from_string(o.get<std::string>("kind"));
  o.read("sigma", nm.sigma);
  o.read("scale", nm.scale);
  // Hessian noise defaults to a tenth of the gradient noise where a sigma exists.
  if (nm.kind == NoiseKind::kGaussianFixed || nm.kind == NoiseKind::kClippedGaussian) nm.hessian_sigma = nm.sigma / 10.0;
  o.read("hessian_sigma", nm.hessian_sigma);
  o.finish();
  return nm;
}

inline StepRule parse_step(const Json& j) {
  JsonObject o(j, "config.step");
  const auto rule = o.get<std::string>("rule");
  const auto value = o.get<double>("value");
  o.finish();
  if (rule == "constant") return StepRule::constant(value);
  if (rule == "diminishing") return StepRule::diminishing(value);
  throw ValidationError("config.step.rule: expected 'constant' or 'diminishing'");
}

inline MomentumRule parse_momentum(const Json& j) {
  JsonObject o(j, "config.momentum");
  const auto rule = o.get<std::string>("rule");
  double value = 0.0;
  if (rule != "poly48") value = o.get<double>("value");
  o.finish();
  if (rule == "poly48") return MomentumRule::poly48();
  if (rule == "alpha") return MomentumRule::alpha(value);
  if (rule == "constant") return MomentumRule::constant(value);
  throw ValidationError("config.momentum.rule: expected 'poly48', 'alpha' or 'constant'");
}

inline BoundSelection parse_bound(const Json& j, std::size_t index) {
  JsonObject o(j, "config.bounds[" + std::to_string(index) + "]");
  BoundSelection b;
  b.theorem = o.get<int>("theorem");
  o.read("delta", b.delta);
  o.read("p", b.p);
  o.read("alpha", b.alpha);
  o.read("gamma", b.gamma);
  if (o.has("smoothness")) {
    const auto s = o.get<std::string>("smoothness");
    if (s == "derived") {
      b.smoothness = BoostedSmoothness::kDerived;
    } else if (s == "stated") {
      b.smoothness = BoostedSmoothness::kStated;
    } else {
      throw ValidationError(o.path("smoothness") + ": expected 'derived' or 'stated'");
    }
  }
  if (o.has("delta_term")) {
    const auto s = o.get<std::string>("delta_term");
    if (s == "derived") {
      b.delta_term = ScgppDeltaTerm::kDerived;
    } else if (s == "stated") {
      b.delta_term = ScgppDeltaTerm::kStated;
    } else {
      throw ValidationError(o.path("delta_term") + ": expected 'derived' or 'stated'");
    }
  }
  o.finish();
  return b;
}

inline Statistic parse_statistic(const std::string& s) {
  if (s == "min") return Statistic::min();
  if (s == "median") return Statistic::median();
  if (s == "mean") return Statistic::mean();
  if (s.size() > 1 && s[0] == 'q') {
    const double pct = io::parse_double(s.substr(1), "config.statistics");
    if (pct > 0.0 && pct < 100.0) return Statistic::quantile(pct / 100.0);
  }
  throw ValidationError("config.statistics: unknown statistic '" + s + "'");
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const std::string& text, const std::string& source = "config") {
  detail::Json j;
  try {
    j = detail::Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(source + ": invalid JSON: " + e.what());
  }
  detail::JsonObject o(j, "config");
  ExperimentConfig c;
  c.run.keep_iterates = false;
  c.problem = detail::parse_problem(o.at("problem"));
  c.run.algorithm = algorithm_from_string(o.get<std::string>("algorithm"));
  o.read("T", c.run.iterations);
  o.read("runs", c.runs);
  o.read("master_seed", c.run.master_seed);
  if (o.has("step")) c.run.step = detail::parse_step(o.at("step"));
  o.read("gamma", c.run.gamma);
  if (o.has("momentum")) c.run.momentum = detail::parse_momentum(o.at("momentum"));
  o.read("batch_size", c.run.batch_size);
  if (o.has("init")) {
    const auto init = o.get<std::string>("init");
    if (init == "gaussian_project") {
      c.run.init = InitRule::kGaussianProject;
    } else if (init == "zero") {
      c.run.init = InitRule::kZero;
    } else {
      throw ValidationError("config.init: expected 'gaussian_project' or 'zero'");
    }
  }
  if (o.has("returned")) c.run.returned = returned_convention_from_string(o.get<std::string>("returned"));
  if (o.has("noise")) c.noise = detail::parse_noise(o.at("noise"));
  if (o.has("bounds")) {
    const auto& arr = o.at("bounds");
    if (!arr.is_array()) throw ValidationError("config.bounds: expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) c.bounds.push_back(detail::parse_bound(arr[i], i));
  }
  if (o.has("opt")) {
    detail::JsonObject oo(o.at("opt"), "config.opt");
    oo.read("value", c.opt.value);
    oo.read("approx_runs", c.opt.approx_runs);
    oo.read("approx_T", c.opt.approx_iterations);
    oo.read("use_noise", c.opt.use_noise);
    oo.finish();
  }
  o.read("threads", c.threads);
  o.read("output_dir", c.output_dir);
  o.read("normalized", c.normalized);
  o.read("t_min", c.t_min);
  o.read("g_max", c.g_max);
  o.read("lipschitz", c.lipschitz);
  o.read("keep_iterates", c.run.keep_iterates);
  if (o.has("statistics")) {
    c.statistics.clear();
    for (const auto& s : o.get<std::vector<std::string>>("statistics")) c.statistics.push_back(detail::parse_statistic(s));
    detail::require(!c.statistics.empty(), "config.statistics: must not be empty");
  }
  o.finish();
  c.validate();
  return c;
}

/// A loaded instance plus the text that reproduces it.
struct Problem {
  std::unique_ptr<Objective> objective;
  std::string instance_text;
  std::string instance_name;
};

inline Problem load_problem(const ProblemSpec& spec) {
  Problem p;
  switch (spec.type) {
    case ProblemType::kNqpGenerate: {
      auto obj = std::make_unique<NqpObjective>(generate_nqp(spec.seed, spec.nqp));
      p.instance_text = obj->serialize();
      p.objective = std::move(obj);
      p.instance_name = "instance.nqp";
      break;
    }
    case ProblemType::kNqpFile: {
      auto obj = std::make_unique<NqpObjective>(NqpObjective::parse(io::read_file(spec.path), spec.path));
      p.instance_text = obj->serialize();
      p.objective = std::move(obj);
      p.instance_name = "instance.nqp";
      break;
    }
    case ProblemType::kBudgetFile: {
      const auto data = parse_bipartite(io::read_file(spec.path), spec.path);
      p.objective = std::make_unique<BudgetAllocationObjective>(build_budget(data, spec.budget));
      p.instance_text = data.to_tsv();
      p.instance_name = "instance.tsv";
      break;
    }
    case ProblemType::kBudgetSynthetic: {
      const auto data =
          generate_bipartite(spec.seed, spec.channels, spec.customers, spec.density, spec.max_frequency);
      p.objective = std::make_unique<BudgetAllocationObjective>(build_budget(data, spec.budget));
      p.instance_text = data.to_tsv();
      p.instance_name = "instance.tsv";
      break;
    }
  }
  return p;
}

/// Instance constants. L is the spectral norm of the Hessian at the origin:
/// the NQP Hessian is constant and the budget Hessian shrinks entrywise as x
/// grows. Monotonicity and the antitone gradient make ||grad F(0)|| an upper
/// bound on ||grad F|| over the feasible set.
struct InstanceConstants {
  double lipschitz;
  double diameter;
  double grad0_norm;
};

inline InstanceConstants instance_constants(const Objective& obj, std::optional<double> lipschitz = std::nullopt) {
  const Vector zero = Vector::Zero(obj.dim());
  InstanceConstants c{};
  c.lipschitz = lipschitz ? *lipschitz : spectral_norm(obj.hessian(zero));
  c.diameter = obj.polytope().diameter_bound();
  c.grad0_norm = obj.gradient(zero).norm();
  return c;
}

inline double resolve_opt(const ExperimentConfig& cfg, const Objective& obj) {
  if (cfg.opt.value) return *cfg.opt.value;
  ApproxOptOptions ao;
  ao.runs = cfg.opt.approx_runs;
  ao.iterations = cfg.opt.approx_iterations;
  ao.noise = cfg.opt.use_noise ? cfg.noise : NoiseModel::none();
  ao.momentum = cfg.run.momentum;
  ao.threads = cfg.threads;
  const double opt = approx_opt(obj, cfg.run.master_seed ^ 0x6f7074ULL, ao);
  if (!(opt > 0.0)) throw NumericalError("approx_opt returned a non-positive value " + io::sig17(opt));
  return opt;
}

inline BoundConstants bound_constants(const ExperimentConfig& cfg, const Objective& obj, double opt) {
  const auto ic = instance_constants(obj, cfg.lipschitz);
  const auto nc = noise_constants(cfg.noise, obj.dim(), cfg.g_max ? cfg.g_max : std::optional(ic.grad0_norm));
  BoundConstants c;
  c.lipschitz = ic.lipschitz;
  c.diameter = ic.diameter;
  c.noise_bound = nc.m_bound;
  c.sigma = nc.sigma_total;
  c.opt = opt;
  c.grad0_norm = ic.grad0_norm;
  return c;
}

/// Tabulates one selected bound over t = 1..T.
inline BoundCurve bound_curve(const BoundSelection& sel, const BoundConstants& c, int iterations) {
  if ((sel.theorem == 1 || sel.theorem == 2) && !std::isfinite(c.noise_bound)) {
    throw ValidationError("theorem " + std::to_string(sel.theorem) +
                          ": Assumption 3 constant M unavailable (noise is not almost surely bounded)");
  }
  // Theorems 3 and 5 hold with probability 1 - T/delta^2; the others with 1 - delta.
  const bool variance_form = sel.theorem == 3 || sel.theorem == 5;
  const double delta =
      sel.delta ? *sel.delta : (variance_form ? delta_for_confidence(iterations, *sel.p) : 1.0 - *sel.p);
  BoundCurve curve;
  curve.theorem = sel.theorem;
  curve.notes = {"L " + io::sig17(c.lipschitz), "D " + io::sig17(c.diameter), "M " + io::sig17(c.noise_bound),
                 "sigma " + io::sig17(c.sigma), "OPT " + io::sig17(c.opt), "delta " + io::sig17(delta)};
  if (sel.theorem == 2) curve.notes.push_back("gamma " + io::sig17(sel.gamma));
  if (sel.theorem == 4) {
    curve.notes.push_back("alpha " + io::sig17(sel.alpha));
    curve.notes.push_back("K " + io::sig17(k_constant(sel.alpha)));
  }
  for (int t = 1; t <= iterations; ++t) {
    const double td = t;
    std::optional<double> prob;
    double v = 0.0;
    switch (sel.theorem) {
      case 1: v = theorem1_bound(c, td, delta); break;
      case 2: v = theorem2_bound(c, td, delta, sel.gamma, sel.smoothness); break;
      case 3: {
        const auto pb = theorem3_bound(c, td, delta);
        v = pb.bound;
        prob = pb.prob;
        break;
      }
      case 4: v = theorem4_bound(c, td, delta, sel.alpha); break;
      case 5: {
        const auto pb = theorem5_bound(c, td, delta, sel.delta_term);
        v = pb.bound;
        prob = pb.prob;
        break;
      }
      default: throw ValidationError("unknown theorem " + std::to_string(sel.theorem));
    }
    curve.t.push_back(t);
    curve.value.push_back(v);
    curve.prob.push_back(prob);
  }
  return curve;
}

inline std::string bound_file_name(const BoundCurve& curve) {
  return "bound_theorem" + std::to_string(curve.theorem) + ".csv";
}

struct ReturnedSummary {
  double min, median, max;
};

inline ReturnedSummary summarize_returned(const std::vector<RunRecord>& runs) {
  detail::require(!runs.empty(), "summary: no runs");
  std::vector<double> v;
  for (const auto& r : runs) v.push_back(r.returned_value);
  std::sort(v.begin(), v.end());
  auto copy = v;
  return {v.front(), detail::nearest_rank(copy, 0.5), v.back()};
}

inline std::string summary_line(const std::vector<RunRecord>& runs) {
  const auto s = summarize_returned(runs);
  std::ostringstream os;
  os << "returned min " << io::sig17(s.min) << " median " << io::sig17(s.median) << " max " << io::sig17(s.max);
  return os.str();
}

struct ReportOptions {
  std::optional<double> opt;
  bool normalized = true;
  int t_min = 1;
  double p = 0.5;
  std::vector<Statistic> statistics = {Statistic::min(), Statistic::median(), Statistic::quantile(0.9)};
};

struct Report {
  std::string text;
  std::vector<Curve> curves;
};

/// Statistic trajectories, shared-c1 fits and violation rates for a battery.
inline Report build_report(const TrialBattery& battery, const std::vector<BoundCurve>& bounds,
                           const ReportOptions& opt) {
  const bool normalize = opt.normalized && opt.opt.has_value();
  const Series series = natural_series(battery.algorithm());
  Report rep;
  for (const auto& stat : opt.statistics) {
    auto curve = trajectory_statistic(battery, stat, series);
    if (normalize) curve = normalized(std::move(curve), *opt.opt);
    rep.curves.push_back(std::move(curve));
  }
  const auto fits = shared_c1_refit(rep.curves, opt.p, opt.t_min);

  std::ostringstream os;
  os << "algorithm " << to_string(battery.algorithm()) << '\n'
     << "runs " << battery.size() << '\n'
     << "T " << battery.iterations() << '\n'
     << "series " << (series == Series::kFTrue ? "f_true" : "f_running_avg") << '\n'
     << "opt " << (opt.opt ? io::sig17(*opt.opt) : std::string("unknown")) << '\n'
     << "normalized " << (normalize ? "true" : "false") << '\n'
     << "t_min " << opt.t_min << '\n'
     << "summary " << summary_line(battery.runs()) << '\n'
     << "c1_shared " << io::sig17(fits.front().c1) << '\n';
  if (normalize) os << "c1_over_1_minus_inv_e " << io::sig17(fits.front().c1 / -std::expm1(-1.0)) << '\n';
  os << fit_report(fits);
  for (const auto& b : bounds) {
    const auto stat = natural_bound_statistic(battery.algorithm());
    const double rate = bound_violation_rate(battery, b, stat);
    os << "[violation theorem" << b.theorem << "]\n"
       << "bound_at_T " << io::sig17(b.value.back()) << '\n'
       << "statistic " << (stat == BoundStatistic::kAverageIterate ? "average_iterate" : "final_iterate") << '\n'
       << "rate " << io::sig17(rate) << '\n';
  }
  rep.text = os.str();
  return rep;
}

inline std::string stat_file_name(const Curve& c) { return "stat_" + c.label + ".csv"; }

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

inline std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

inline std::string partial_marker(const std::string& dir) { return join_path(dir, ".partial"); }

/// Runs the battery and writes runs.csv. On a failed run, the completed runs
/// are still written, a `.partial` marker is left next to them and the
/// BatteryError is rethrown.
inline std::vector<RunRecord> execute_runs(const ExperimentConfig& cfg, const Objective& obj) {
  ensure_dir(cfg.output_dir);
  std::filesystem::remove(partial_marker(cfg.output_dir));
  try {
    auto runs = run_battery(obj, cfg.noise, cfg.run, cfg.runs, cfg.threads);
    io::write_file(join_path(cfg.output_dir, "runs.csv"), runs_to_csv(runs));
    return runs;
  } catch (const BatteryError& e) {
    io::write_file(join_path(cfg.output_dir, "runs.csv"), runs_to_csv(e.completed()));
    io::write_file(partial_marker(cfg.output_dir), std::string(e.what()) + '\n');
    throw;
  }
}

inline std::vector<BoundCurve> write_bounds(const ExperimentConfig& cfg, const Objective& obj, double opt) {
  ensure_dir(cfg.output_dir);
  const auto constants = bound_constants(cfg, obj, opt);
  std::vector<BoundCurve> curves;
  for (const auto& sel : cfg.bounds) curves.push_back(bound_curve(sel, constants, cfg.run.iterations));
  for (const auto& c : curves) io::write_file(join_path(cfg.output_dir, bound_file_name(c)), c.to_csv());
  return curves;
}

inline void write_report(const std::string& dir, const Report& rep) {
  ensure_dir(dir);
  io::write_file(join_path(dir, "report.txt"), rep.text);
  for (const auto& c : rep.curves) io::write_file(join_path(dir, stat_file_name(c)), curve_to_csv(c));
}

/// Full pipeline: instance, OPT, runs, bounds, report. Returns the summary line.
inline std::string run_experiment(const ExperimentConfig& cfg) {
  const auto problem = load_problem(cfg.problem);
  ensure_dir(cfg.output_dir);
  io::write_file(join_path(cfg.output_dir, problem.instance_name), problem.instance_text);
  const double opt = resolve_opt(cfg, *problem.objective);
  const auto runs = execute_runs(cfg, *problem.objective);
  const auto bounds = write_bounds(cfg, *problem.objective, opt);
  ReportOptions ro;
  ro.opt = opt;
  ro.normalized = cfg.normalized;
  ro.t_min = cfg.t_min;
  ro.statistics = cfg.statistics;
  write_report(cfg.output_dir, build_report(TrialBattery(runs), bounds, ro));
  return summary_line(runs);
}

}  // namespace drsub
