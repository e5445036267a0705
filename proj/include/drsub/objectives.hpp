#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "drsub/core.hpp"
#include "drsub/geometry.hpp"
#include "drsub/io.hpp"
#include "drsub/rng.hpp"

namespace drsub {

/// Deterministic objective F with exact first and second derivatives,
/// attached to its feasible polytope. Implementations are immutable and
/// safe to call concurrently.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual const Polytope& polytope() const = 0;
  virtual double value(const Vector& x) const = 0;
  virtual Vector gradient(const Vector& x) const = 0;
  virtual bool has_hessian() const { return true; }
  virtual Matrix hessian(const Vector& x) const = 0;

  Index dim() const { return polytope().dim(); }
};

/// f(x) = 1/2 x'Hx + h'x with H symmetric and entrywise non-positive, and
/// h = -H u so that the gradient H(x - u) is non-negative on the polytope.
class NqpObjective final : public Objective {
 public:
  NqpObjective(Matrix h_matrix, Polytope polytope)
      : h_matrix_(std::move(h_matrix)), polytope_(std::move(polytope)) {
    const Index n = polytope_.dim();
    detail::require(h_matrix_.rows() == n && h_matrix_.cols() == n,
                    "nqp: H must be " + std::to_string(n) + "x" + std::to_string(n));
    detail::require(h_matrix_.allFinite(), "nqp: H must be finite");
    detail::require((h_matrix_ - h_matrix_.transpose()).cwiseAbs().maxCoeff() <= 1e-12,
                    "nqp: H must be symmetric");
    detail::require(h_matrix_.maxCoeff() <= 0.0, "nqp: every entry of H must be <= 0");
    h_vector_ = -h_matrix_ * polytope_.upper();
  }

  const Polytope& polytope() const override { return polytope_; }
  const Matrix& h_matrix() const noexcept { return h_matrix_; }
  const Vector& h_vector() const noexcept { return h_vector_; }

  double value(const Vector& x) const override {
    detail::require_dim(x.size(), dim(), "nqp_eval");
    return 0.5 * x.dot(h_matrix_ * x) + h_vector_.dot(x);
  }

  Vector gradient(const Vector& x) const override {
    detail::require_dim(x.size(), dim(), "nqp_grad");
    return h_matrix_ * x + h_vector_;
  }

  Matrix hessian(const Vector& x) const override {
    detail::require_dim(x.size(), dim(), "nqp_hessian");
    return h_matrix_;
  }

  std::string serialize() const {
    std::ostringstream os;
    os << "nqp\n";
    polytope_.write_body(os);
    for (Index i = 0; i < dim(); ++i) io::write_row(os, "H", h_matrix_.row(i));
    return os.str();
  }

  static NqpObjective parse(const std::string& text, const std::string& source = "nqp") {
    io::KeyLines lines(text, source);
    lines.expect_tag("nqp");
    const auto n = static_cast<Index>(lines.take_count("n"));
    detail::require(n >= 1, source + ": n must be at least 1");
    Polytope p = Polytope::read_body(lines, n);
    Matrix h(n, n);
    for (Index i = 0; i < n; ++i) {
      const auto row = lines.take("H", static_cast<std::size_t>(n));
      for (Index j = 0; j < n; ++j) h(i, j) = row[static_cast<std::size_t>(j)];
    }
    lines.expect_end();
    return NqpObjective(std::move(h), std::move(p));
  }

 private:
  Matrix h_matrix_;
  Polytope polytope_;
  Vector h_vector_;
};

struct NqpGenerateOptions {
  Index n = 100;
  Index m = 50;
  double entry_low = -100.0;
  double entry_high = 0.0;
  /// When set, every entry of A takes this value instead of Uniform[0, 1].
  std::optional<double> constraint_fill;
};

/// Random monotone DR-submodular NQP over {Ax <= 1, 0 <= x <= 1}.
/// Draw order: upper triangle of H (row-major, diagonal included), then A
/// row-major. Deterministic given the seed.
inline NqpObjective generate_nqp(std::uint64_t seed, const NqpGenerateOptions& opt) {
  detail::require(opt.entry_high <= 0.0, "entry_high must be <= 0");
  detail::require(opt.entry_low <= opt.entry_high, "entry_low must be <= entry_high");
  detail::require(opt.n >= 1, "n must be at least 1");
  detail::require(opt.m >= 0, "m must be non-negative");
  if (opt.constraint_fill) {
    detail::require(std::isfinite(*opt.constraint_fill), "constraint fill must be finite");
  }

  Rng rng(seed);
  Matrix h(opt.n, opt.n);
  for (Index i = 0; i < opt.n; ++i) {
    for (Index j = i; j < opt.n; ++j) {
      h(i, j) = rng.uniform(opt.entry_low, opt.entry_high);
      h(j, i) = h(i, j);
    }
  }
  Matrix a(opt.m, opt.n);
  for (Index i = 0; i < opt.m; ++i) {
    for (Index j = 0; j < opt.n; ++j) {
      a(i, j) = opt.constraint_fill ? *opt.constraint_fill : rng.uniform();
    }
  }
  return NqpObjective(std::move(h),
                      Polytope(std::move(a), Vector::Ones(opt.m), Vector::Ones(opt.n)));
}

struct BudgetEdge {
  Index channel;
  Index customer;
  double probability;
};

/// Budget allocation over k advertisers sharing one channel/customer graph:
///   g(x) = sum_i alpha_i sum_t [1 - prod_{(s,t)} (1 - p_st)^{x^i_s}].
/// Variables are laid out advertiser-major: index i*|S| + s. Products are
/// evaluated in log space as 1 - exp(-sum_s c_st x_s), c_st = -ln(1 - p_st).
class BudgetAllocationObjective final : public Objective {
 public:
  BudgetAllocationObjective(Index channels, Index customers, std::vector<BudgetEdge> edges,
                            std::vector<double> alphas, Vector channel_upper)
      : channels_(channels),
        customers_(customers),
        edges_(std::move(edges)),
        alphas_(std::move(alphas)),
        polytope_(make_box(channel_upper, alphas_.size())),
        by_customer_(static_cast<std::size_t>(customers)),
        by_channel_(static_cast<std::size_t>(channels)) {
    detail::require(channels >= 1 && customers >= 1, "budget: need at least one channel and customer");
    detail::require(channel_upper.size() == channels, "budget: one upper bound per channel required");
    for (double a : alphas_) detail::require(std::isfinite(a) && a > 0.0, "budget: alphas must be positive");
    for (const auto& e : edges_) {
      detail::require(e.channel >= 0 && e.channel < channels && e.customer >= 0 && e.customer < customers,
                      "budget: edge endpoint out of range");
      detail::require(e.probability > 0.0 && e.probability < 1.0,
                      "budget: edge probability must lie in (0, 1)");
      const double c = -std::log1p(-e.probability);
      by_customer_[static_cast<std::size_t>(e.customer)].push_back({e.channel, c});
      by_channel_[static_cast<std::size_t>(e.channel)].push_back({e.customer, c});
    }
  }

  const Polytope& polytope() const override { return polytope_; }
  Index channels() const noexcept { return channels_; }
  Index customers() const noexcept { return customers_; }
  Index advertisers() const noexcept { return static_cast<Index>(alphas_.size()); }
  const std::vector<BudgetEdge>& edges() const noexcept { return edges_; }
  const std::vector<double>& alphas() const noexcept { return alphas_; }

  double value(const Vector& x) const override {
    check_point(x, "budget_eval");
    double total = 0.0;
    for (Index i = 0; i < advertisers(); ++i) {
      const Vector exposure = exposures(x, i);
      double influenced = 0.0;
      for (Index t = 0; t < customers_; ++t) influenced += -std::expm1(-exposure(t));
      total += alphas_[static_cast<std::size_t>(i)] * influenced;
    }
    return total;
  }

  Vector gradient(const Vector& x) const override {
    check_point(x, "budget_grad");
    Vector g = Vector::Zero(dim());
    for (Index i = 0; i < advertisers(); ++i) {
      const Vector survive = (-exposures(x, i)).array().exp();
      const double alpha = alphas_[static_cast<std::size_t>(i)];
      for (Index s = 0; s < channels_; ++s) {
        double acc = 0.0;
        for (const auto& [t, c] : by_channel_[static_cast<std::size_t>(s)]) acc += c * survive(t);
        g(i * channels_ + s) = alpha * acc;
      }
    }
    return g;
  }

  Matrix hessian(const Vector& x) const override {
    check_point(x, "budget_hessian");
    Matrix h = Matrix::Zero(dim(), dim());
    for (Index i = 0; i < advertisers(); ++i) {
      const Vector exposure = exposures(x, i);
      const double alpha = alphas_[static_cast<std::size_t>(i)];
      const Index off = i * channels_;
      for (Index t = 0; t < customers_; ++t) {
        const double w = alpha * std::exp(-exposure(t));
        const auto& adj = by_customer_[static_cast<std::size_t>(t)];
        for (const auto& [s1, c1] : adj) {
          for (const auto& [s2, c2] : adj) h(off + s1, off + s2) -= w * c1 * c2;
        }
      }
    }
    return h;
  }

  /// d^2 g / dx^i_s dx^i_s' for one advertiser block.
  double hessian_entry(const Vector& x, Index advertiser, Index s, Index s_prime) const {
    check_point(x, "budget_hessian_entry");
    detail::require(advertiser >= 0 && advertiser < advertisers(), "budget_hessian_entry: advertiser out of range");
    detail::require(s >= 0 && s < channels_ && s_prime >= 0 && s_prime < channels_,
                    "budget_hessian_entry: channel out of range");
    const Vector exposure = exposures(x, advertiser);
    double acc = 0.0;
    for (const auto& [t, c1] : by_channel_[static_cast<std::size_t>(s)]) {
      for (const auto& [s2, c2] : by_customer_[static_cast<std::size_t>(t)]) {
        if (s2 == s_prime) acc += c1 * c2 * std::exp(-exposure(t));
      }
    }
    return -alphas_[static_cast<std::size_t>(advertiser)] * acc;
  }

  /// Entry (row, col) of the full Hessian; zero across advertisers.
  double hessian_entry_flat(const Vector& x, Index row, Index col) const {
    detail::require(row >= 0 && row < dim() && col >= 0 && col < dim(),
                    "budget_hessian_entry: index out of range");
    if (row / channels_ != col / channels_) {
      check_point(x, "budget_hessian_entry");
      return 0.0;
    }
    return hessian_entry(x, row / channels_, row % channels_, col % channels_);
  }

 private:
  struct Link {
    Index other;
    double c;
  };

  static Polytope make_box(const Vector& channel_upper, std::size_t k) {
    detail::require(k >= 1, "budget: need at least one advertiser");
    Vector upper(channel_upper.size() * static_cast<Index>(k));
    for (Index i = 0; i < static_cast<Index>(k); ++i) {
      upper.segment(i * channel_upper.size(), channel_upper.size()) = channel_upper;
    }
    return Polytope::box(std::move(upper));
  }

  void check_point(const Vector& x, const char* what) const {
    detail::require_dim(x.size(), dim(), what);
    for (Index j = 0; j < x.size(); ++j) {
      if (!(x(j) >= 0.0)) {
        throw ValidationError(std::string(what) + ": negative component at index " + std::to_string(j));
      }
    }
  }

  /// sum_s c_st x^i_s for every customer t.
  Vector exposures(const Vector& x, Index advertiser) const {
    Vector e = Vector::Zero(customers_);
    const Index off = advertiser * channels_;
    for (Index t = 0; t < customers_; ++t) {
      double acc = 0.0;
      for (const auto& [s, c] : by_customer_[static_cast<std::size_t>(t)]) acc += c * x(off + s);
      e(t) = acc;
    }
    return e;
  }

  Index channels_;
  Index customers_;
  std::vector<BudgetEdge> edges_;
  std::vector<double> alphas_;
  Polytope polytope_;
  std::vector<std::vector<Link>> by_customer_;
  std::vector<std::vector<Link>> by_channel_;
};

/// Rule turning an aggregated (channel, customer) frequency into an influence
/// probability, given the corpus maximum frequency.
struct FrequencyMapping {
  enum class Kind { kExponential, kLinear };
  Kind kind = Kind::kExponential;
  double p_cap = 0.99;

  double operator()(double frequency, double max_frequency) const {
    const double ratio = frequency / max_frequency;
    return kind == Kind::kExponential ? -std::expm1(-ratio) : std::min(ratio, p_cap);
  }
};

/// Channel/customer graph with aggregated bid frequencies; ids are indexed
/// densely in order of first appearance.
struct BipartiteData {
  struct Edge {
    Index channel;
    Index customer;
    double frequency;
  };
  std::vector<std::string> channel_ids;
  std::vector<std::string> customer_ids;
  std::vector<Edge> edges;

  std::string to_tsv() const {
    std::ostringstream os;
    for (const auto& e : edges) {
      os << channel_ids[static_cast<std::size_t>(e.channel)] << '\t'
         << customer_ids[static_cast<std::size_t>(e.customer)] << '\t' << io::exact(e.frequency) << '\n';
    }
    return os.str();
  }
};

/// Parses `channel <TAB> customer <TAB> frequency` lines. Blank lines and
/// lines starting with '#' are skipped; duplicate pairs have their
/// frequencies summed.
inline BipartiteData parse_bipartite(const std::string& text, const std::string& source = "bipartite") {
  BipartiteData data;
  std::unordered_map<std::string, Index> channel_index, customer_index;
  std::unordered_map<std::uint64_t, std::size_t> edge_index;
  auto intern = [](std::unordered_map<std::string, Index>& map, std::vector<std::string>& ids,
                   const std::string& key) {
    auto [it, inserted] = map.try_emplace(key, static_cast<Index>(ids.size()));
    if (inserted) ids.push_back(key);
    return it->second;
  };

  std::istringstream is(text);
  std::string line;
  int number = 0;
  while (std::getline(is, line)) {
    ++number;
    auto toks = io::split_ws(line);
    if (toks.empty() || toks[0][0] == '#') continue;
    const std::string where = source + ":" + std::to_string(number);
    if (toks.size() != 3) throw ValidationError(where + ": expected 'channel customer frequency'");
    const double freq = io::parse_double(toks[2], where);
    if (!(freq >= 1.0) || !std::isfinite(freq)) throw ValidationError(where + ": frequency must be >= 1");
    const Index s = intern(channel_index, data.channel_ids, toks[0]);
    const Index t = intern(customer_index, data.customer_ids, toks[1]);
    const auto key = (static_cast<std::uint64_t>(s) << 32) | static_cast<std::uint64_t>(t);
    auto [it, inserted] = edge_index.try_emplace(key, data.edges.size());
    if (inserted) {
      data.edges.push_back({s, t, freq});
    } else {
      data.edges[it->second].frequency += freq;
    }
  }
  if (data.edges.empty()) throw ValidationError(source + ": no edges");
  return data;
}

/// Seeded stand-in for a bid log: each (channel, customer) pair is present
/// with probability `density` and carries a frequency in {1..max_frequency}.
/// Every customer receives at least one edge.
inline BipartiteData generate_bipartite(std::uint64_t seed, Index channels, Index customers,
                                        double density, int max_frequency) {
  detail::require(channels >= 1 && customers >= 1, "generate_bipartite: need channels and customers");
  detail::require(density > 0.0 && density <= 1.0, "generate_bipartite: density must be in (0, 1]");
  detail::require(max_frequency >= 1, "generate_bipartite: max_frequency must be >= 1");
  Rng rng(seed);
  BipartiteData data;
  for (Index s = 0; s < channels; ++s) data.channel_ids.push_back("k" + std::to_string(s));
  for (Index t = 0; t < customers; ++t) data.customer_ids.push_back("c" + std::to_string(t));
  auto draw_frequency = [&] {
    return 1.0 + std::floor(rng.uniform() * max_frequency);
  };
  for (Index t = 0; t < customers; ++t) {
    bool any = false;
    for (Index s = 0; s < channels; ++s) {
      if (rng.uniform() < density) {
        data.edges.push_back({s, t, draw_frequency()});
        any = true;
      }
    }
    if (!any) {
      const auto s = static_cast<Index>(std::floor(rng.uniform() * static_cast<double>(channels)));
      data.edges.push_back({std::min(s, channels - 1), t, draw_frequency()});
    }
  }
  return data;
}

struct BudgetOptions {
  FrequencyMapping mapping;
  Index advertisers = 1;
  /// Advertiser weights; empty means 1/k each.
  std::vector<double> alphas;
  /// Per-channel budget limit; unset means mapping(mean edge frequency).
  std::optional<double> upper;
};

inline BudgetAllocationObjective build_budget(const BipartiteData& data, const BudgetOptions& opt) {
  detail::require(!data.edges.empty(), "budget: no edges");
  detail::require(opt.advertisers >= 1, "budget: need at least one advertiser");
  double max_freq = 0.0;
  double sum_freq = 0.0;
  for (const auto& e : data.edges) {
    max_freq = std::max(max_freq, e.frequency);
    sum_freq += e.frequency;
  }
  std::vector<BudgetEdge> edges;
  edges.reserve(data.edges.size());
  for (const auto& e : data.edges) {
    const double p = opt.mapping(e.frequency, max_freq);
    if (!(p > 0.0 && p < 1.0)) {
      throw ValidationError("budget: mapped probability " + io::sig17(p) + " for channel '" +
                            data.channel_ids[static_cast<std::size_t>(e.channel)] + "' is outside (0, 1)");
    }
    edges.push_back({e.channel, e.customer, p});
  }
  std::vector<double> alphas = opt.alphas;
  if (alphas.empty()) alphas.assign(static_cast<std::size_t>(opt.advertisers), 1.0 / static_cast<double>(opt.advertisers));
  detail::require(static_cast<Index>(alphas.size()) == opt.advertisers, "budget: need one alpha per advertiser");
  const double upper =
      opt.upper ? *opt.upper : opt.mapping(sum_freq / static_cast<double>(data.edges.size()), max_freq);
  detail::require(std::isfinite(upper) && upper > 0.0, "budget: budget limit must be positive");
  const auto channels = static_cast<Index>(data.channel_ids.size());
  return BudgetAllocationObjective(channels, static_cast<Index>(data.customer_ids.size()), std::move(edges),
                                   std::move(alphas), Vector::Constant(channels, upper));
}

inline BudgetAllocationObjective load_bipartite(const std::string& path, const BudgetOptions& opt) {
  return build_budget(parse_bipartite(io::read_file(path), path), opt);
}

}  // namespace drsub
