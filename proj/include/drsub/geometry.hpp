#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "drsub/core.hpp"
#include "drsub/io.hpp"

namespace drsub {

/// Thrown when the projection does not settle within its iteration budget.
class ProjectionError : public NumericalError {
 public:
  ProjectionError(const std::string& what, Vector last_iterate, double residual)
      : NumericalError(what), last_iterate_(std::move(last_iterate)), residual_(residual) {}

  const Vector& last_iterate() const noexcept { return last_iterate_; }
  double residual() const noexcept { return residual_; }

 private:
  Vector last_iterate_;
  double residual_;
};

/// Algorithm used by Polytope::project.
enum class ProjectionMethod { kActiveSet, kDykstra };

namespace detail {

/// Dense bounded-variable primal simplex for
///   max c'x  s.t.  A x <= b,  0 <= x <= u
/// with b > 0, u > 0 so the all-slack basis at x = 0 is feasible.
/// Entering and leaving choices follow Bland's rule (lowest variable index),
/// which rules out cycling. Structural variables are indexed 0..n-1 and the
/// row slacks n..n+m-1.
class BoundedSimplex {
 public:
  BoundedSimplex(const Matrix& a, const Vector& b, const Vector& upper)
      : n_(a.cols()), m_(a.rows()), a_(a), b_(b), upper_(upper) {}

  Vector maximize(const Vector& c, double tol) const {
    const Index cols = n_ + m_;
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> tab(m_, cols);
    tab.leftCols(n_) = a_;
    tab.rightCols(m_).setIdentity();
    Vector beta = b_;
    Vector reduced = Vector::Zero(cols);
    reduced.head(n_) = c;

    std::vector<Index> basis(static_cast<std::size_t>(m_));
    std::vector<Status> status(static_cast<std::size_t>(cols), Status::kLower);
    for (Index r = 0; r < m_; ++r) {
      basis[static_cast<std::size_t>(r)] = n_ + r;
      status[static_cast<std::size_t>(n_ + r)] = Status::kBasic;
    }

    const long max_steps = 200L * static_cast<long>(cols) + 1000L;
    for (long step = 0;; ++step) {
      if (step > max_steps) throw NumericalError("lmo: simplex cycling guard exceeded");

      Index entering = -1;
      for (Index j = 0; j < cols; ++j) {
        const Status s = status[static_cast<std::size_t>(j)];
        if ((s == Status::kLower && reduced(j) > tol) || (s == Status::kUpper && reduced(j) < -tol)) {
          entering = j;
          break;
        }
      }
      if (entering < 0) break;

      const double dir = status[static_cast<std::size_t>(entering)] == Status::kLower ? 1.0 : -1.0;
      const double flip_length = upper_bound(entering);

      Index leave_row = -1;
      bool leave_to_upper = false;
      double best = std::numeric_limits<double>::infinity();
      for (Index r = 0; r < m_; ++r) {
        const double alpha = tab(r, entering);
        if (std::abs(alpha) <= kPivotTol) continue;
        const double rate = -dir * alpha;  // d(basic value) / d(step)
        const Index var = basis[static_cast<std::size_t>(r)];
        double limit;
        bool to_upper;
        if (rate < 0.0) {
          limit = beta(r) / -rate;
          to_upper = false;
        } else {
          const double ub = upper_bound(var);
          if (!std::isfinite(ub)) continue;
          limit = (ub - beta(r)) / rate;
          to_upper = true;
        }
        limit = std::max(limit, 0.0);
        const bool better = limit < best - kTieTol;
        const bool tie = !better && limit <= best + kTieTol;
        if (better || (tie && var < basis[static_cast<std::size_t>(leave_row)])) {
          best = limit;
          leave_row = r;
          leave_to_upper = to_upper;
        }
      }

      if (leave_row < 0 && !std::isfinite(flip_length)) {
        throw NumericalError("lmo: linear program is unbounded");
      }

      if (leave_row < 0 || flip_length <= best) {
        // Bound flip: the entering variable runs to its opposite bound.
        beta -= dir * flip_length * tab.col(entering);
        status[static_cast<std::size_t>(entering)] =
            dir > 0 ? Status::kUpper : Status::kLower;
        continue;
      }

      const double theta = best;
      beta -= dir * theta * tab.col(entering);
      const double entering_value = (dir > 0 ? 0.0 : flip_length) + dir * theta;
      const Index leaving = basis[static_cast<std::size_t>(leave_row)];
      status[static_cast<std::size_t>(leaving)] = leave_to_upper ? Status::kUpper : Status::kLower;

      tab.row(leave_row) /= tab(leave_row, entering);
      for (Index r = 0; r < m_; ++r) {
        if (r == leave_row) continue;
        const double f = tab(r, entering);
        if (f != 0.0) tab.row(r) -= f * tab.row(leave_row);
      }
      reduced -= reduced(entering) * tab.row(leave_row).transpose();
      reduced(entering) = 0.0;

      basis[static_cast<std::size_t>(leave_row)] = entering;
      status[static_cast<std::size_t>(entering)] = Status::kBasic;
      beta(leave_row) = entering_value;
    }

    Vector x = Vector::Zero(n_);
    for (Index j = 0; j < n_; ++j) {
      if (status[static_cast<std::size_t>(j)] == Status::kUpper) x(j) = upper_(j);
    }
    for (Index r = 0; r < m_; ++r) {
      const Index var = basis[static_cast<std::size_t>(r)];
      if (var < n_) x(var) = std::clamp(beta(r), 0.0, upper_(var));
    }
    return x;
  }

 private:
  enum class Status { kLower, kUpper, kBasic };
  static constexpr double kPivotTol = 1e-12;
  static constexpr double kTieTol = 1e-12;

  double upper_bound(Index var) const {
    return var < n_ ? upper_(var) : std::numeric_limits<double>::infinity();
  }

  Index n_, m_;
  const Matrix& a_;
  const Vector& b_;
  const Vector& upper_;
};

}  // namespace detail

/// Down-closed polytope {x : A x <= b, 0 <= x <= upper}.
///
/// Immutable after construction. Requires b > 0 and upper > 0, so the origin
/// is strictly feasible.
class Polytope {
 public:
  /// Absolute optimality tolerance of the linear maximization oracle.
  static constexpr double kLpTolerance = 1e-9;

  Polytope(Matrix a, Vector b, Vector upper)
      : a_(std::move(a)), b_(std::move(b)), upper_(std::move(upper)) {
    detail::require(upper_.size() >= 1, "polytope: dimension must be at least 1");
    detail::require(a_.rows() == b_.size(), "polytope: A has " + std::to_string(a_.rows()) +
                                                " rows but b has " + std::to_string(b_.size()));
    detail::require(a_.rows() == 0 || a_.cols() == upper_.size(),
                    "polytope: A column count does not match dimension");
    if (a_.rows() == 0) a_.resize(0, upper_.size());
    detail::require(a_.allFinite(), "polytope: A must be finite");
    for (Index j = 0; j < upper_.size(); ++j) {
      detail::require(std::isfinite(upper_(j)) && upper_(j) > 0.0,
                      "polytope: upper bounds must be finite and positive");
    }
    for (Index i = 0; i < b_.size(); ++i) {
      detail::require(std::isfinite(b_(i)) && b_(i) > 0.0, "polytope: b must be finite and positive");
    }
    row_norm_sq_ = a_.rowwise().squaredNorm();
  }

  static Polytope box(Vector upper) {
    const Index n = upper.size();
    return Polytope(Matrix(0, n), Vector(0), std::move(upper));
  }

  Index dim() const noexcept { return upper_.size(); }
  Index num_constraints() const noexcept { return a_.rows(); }
  const Matrix& a() const noexcept { return a_; }
  const Vector& b() const noexcept { return b_; }
  const Vector& upper() const noexcept { return upper_; }

  /// Largest violation of any box or halfspace constraint (0 when feasible).
  double max_violation(const Vector& x) const {
    detail::require_dim(x.size(), dim(), "polytope");
    double worst = std::max(0.0, (-x).maxCoeff());
    worst = std::max(worst, (x - upper_).maxCoeff());
    if (num_constraints() > 0) worst = std::max(worst, (a_ * x - b_).maxCoeff());
    return worst;
  }

  /// Every box and halfspace constraint holds within `tol`.
  bool contains(const Vector& x, double tol = 0.0) const {
    detail::require_dim(x.size(), dim(), "contains");
    detail::require(tol >= 0.0, "contains: tol must be non-negative");
    for (Index j = 0; j < x.size(); ++j) {
      if (!(x(j) >= -tol && x(j) <= upper_(j) + tol)) return false;
    }
    if (num_constraints() == 0) return true;
    return ((a_ * x - b_).array() <= tol).all();
  }

  /// Euclidean projection onto the polytope. Points already inside are
  /// returned unchanged.
  ///
  /// kActiveSet (default) is a primal active-set method on
  /// min 0.5||x - y||^2; it terminates at an exact KKT point and
  /// `max_iterations` caps the number of working-set changes.
  /// kDykstra alternates projections over the halfspaces and the box and
  /// stops once a full sweep moves the iterate and the correction terms by
  /// at most `tol` combined; `max_iterations` caps the sweeps.
  Vector project(const Vector& y, double tol = 1e-8, int max_iterations = 10000,
                 ProjectionMethod method = ProjectionMethod::kActiveSet) const {
    detail::require_dim(y.size(), dim(), "project");
    detail::require(tol > 0.0 && max_iterations >= 1, "project: tol and max_iterations must be positive");
    if (contains(y, 0.0)) return y;
    if (num_constraints() == 0) return clamp_box(y);
    return method == ProjectionMethod::kDykstra ? project_dykstra(y, tol, max_iterations)
                                                : project_active_set(y, tol, max_iterations);
  }

  /// Linear maximization oracle: a vertex maximizing <g, v> over the polytope.
  /// Coordinates whose objective coefficient does not exceed kLpTolerance stay at 0.
  Vector lmo(const Vector& g) const {
    detail::require_dim(g.size(), dim(), "lmo");
    if (num_constraints() == 0) {
      Vector v = Vector::Zero(dim());
      for (Index j = 0; j < dim(); ++j) {
        if (g(j) > kLpTolerance) v(j) = upper_(j);
      }
      return v;
    }
    return detail::BoundedSimplex(a_, b_, upper_).maximize(g, kLpTolerance);
  }

  /// ||upper||_2, which bounds the diameter because the set lies in [0, upper].
  double diameter_bound() const { return upper_.norm(); }

  void write_body(std::ostream& os) const {
    os << "n " << dim() << '\n' << "m " << num_constraints() << '\n';
    for (Index i = 0; i < num_constraints(); ++i) io::write_row(os, "A", a_.row(i));
    io::write_row(os, "b", b_);
    io::write_row(os, "u", upper_);
  }

  static Polytope read_body(io::KeyLines& lines, Index n) {
    const auto m = static_cast<Index>(lines.take_count("m"));
    Matrix a(m, n);
    for (Index i = 0; i < m; ++i) {
      const auto row = lines.take("A", static_cast<std::size_t>(n));
      for (Index j = 0; j < n; ++j) a(i, j) = row[static_cast<std::size_t>(j)];
    }
    const auto b = lines.take("b", static_cast<std::size_t>(m));
    const auto u = lines.take("u", static_cast<std::size_t>(n));
    return Polytope(std::move(a), Eigen::Map<const Vector>(b.data(), m),
                    Eigen::Map<const Vector>(u.data(), n));
  }

  std::string serialize() const {
    std::ostringstream os;
    os << "polytope\n";
    write_body(os);
    return os.str();
  }

  static Polytope parse(const std::string& text, const std::string& source = "polytope") {
    io::KeyLines lines(text, source);
    lines.expect_tag("polytope");
    const auto n = static_cast<Index>(lines.take_count("n"));
    Polytope p = read_body(lines, n);
    lines.expect_end();
    return p;
  }

 private:
  Vector clamp_box(const Vector& y) const { return y.cwiseMax(0.0).cwiseMin(upper_); }

  Vector project_dykstra(const Vector& y, double tol, int max_sweeps) const {
    const Index m = num_constraints();
    Matrix increments = Matrix::Zero(dim(), m + 1);
    Vector x = y;
    Vector z(dim());
    double change = std::numeric_limits<double>::infinity();
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
      const Vector previous = x;
      const Matrix previous_increments = increments;
      for (Index i = 0; i < m; ++i) {
        z = x + increments.col(i);
        const double excess = a_.row(i).dot(z) - b_(i);
        if (excess > 0.0 && row_norm_sq_(i) > 0.0) {
          x = z - (excess / row_norm_sq_(i)) * a_.row(i).transpose();
        } else {
          x = z;
        }
        increments.col(i) = z - x;
      }
      z = x + increments.col(m);
      x = clamp_box(z);
      increments.col(m) = z - x;

      change = std::sqrt((x - previous).squaredNorm() + (increments - previous_increments).squaredNorm());
      if (change <= tol && max_violation(x) <= tol) return x;
    }
    throw ProjectionError("project: Dykstra did not converge within " + std::to_string(max_sweeps) +
                              " sweeps (last change " + io::sig17(change) + ")",
                          x, change);
  }

  // Working set: variables pinned at a bound plus a list of tight halfspace
  // rows. Each iterate stays feasible; normals in the working set stay
  // linearly independent because a constraint only enters when it blocks a
  // step lying in the null space of the current ones.
  Vector project_active_set(const Vector& y, double tol, int max_iterations) const {
    enum class Pin : unsigned char { kFree, kLower, kUpper };
    const Index n = dim();
    const Index m = num_constraints();
    const double scale = 1.0 + y.cwiseAbs().maxCoeff();
    const double step_eps = 1e-14 * scale;
    const double mult_eps = 1e-12 * scale;

    Vector x = clamp_box(y);
    const Vector ax0 = a_ * x;
    double shrink = 1.0;
    for (Index i = 0; i < m; ++i) {
      if (ax0(i) > b_(i)) shrink = std::min(shrink, b_(i) / ax0(i));
    }
    x *= shrink;
    std::vector<Pin> pin(static_cast<std::size_t>(n), Pin::kFree);
    for (Index j = 0; j < n; ++j) {
      if (x(j) <= 0.0) {
        x(j) = 0.0;
        pin[static_cast<std::size_t>(j)] = Pin::kLower;
      } else if (shrink == 1.0 && x(j) == upper_(j)) {
        pin[static_cast<std::size_t>(j)] = Pin::kUpper;
      }
    }
    std::vector<Index> rows;
    std::vector<char> in_rows(static_cast<std::size_t>(m), 0);

    Vector target(n);
    Vector mu;
    double residual = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < max_iterations; ++iter) {
      std::vector<Index> free_vars;
      for (Index j = 0; j < n; ++j) {
        if (pin[static_cast<std::size_t>(j)] == Pin::kFree) free_vars.push_back(j);
      }
      // Equality-constrained minimizer on the current working set.
      target = x;
      for (Index j : free_vars) target(j) = y(j);
      const auto k = static_cast<Index>(rows.size());
      mu.setZero(k);
      if (k > 0) {
        Matrix a_free(k, static_cast<Index>(free_vars.size()));
        Vector rhs(k);
        Vector y_free(static_cast<Index>(free_vars.size()));
        for (std::size_t c = 0; c < free_vars.size(); ++c) y_free(static_cast<Index>(c)) = y(free_vars[c]);
        for (Index r = 0; r < k; ++r) {
          const Index i = rows[static_cast<std::size_t>(r)];
          double fixed = 0.0;
          for (Index j = 0; j < n; ++j) {
            if (pin[static_cast<std::size_t>(j)] != Pin::kFree) fixed += a_(i, j) * x(j);
          }
          for (std::size_t c = 0; c < free_vars.size(); ++c) a_free(r, static_cast<Index>(c)) = a_(i, free_vars[c]);
          rhs(r) = a_free.row(r).dot(y_free) - (b_(i) - fixed);
        }
        const Matrix gram = a_free * a_free.transpose();
        mu = gram.ldlt().solve(rhs);
        if (!mu.allFinite()) {
          throw ProjectionError("project: singular working set", x, residual);
        }
        const Vector shift = a_free.transpose() * mu;
        for (std::size_t c = 0; c < free_vars.size(); ++c) target(free_vars[c]) -= shift(static_cast<Index>(c));
      }

      const Vector p = target - x;
      residual = p.cwiseAbs().maxCoeff();
      if (residual <= step_eps) {
        // Stationary on the working set: drop the most negative multiplier.
        Vector pull = x - y;
        for (Index r = 0; r < k; ++r) pull += mu(r) * a_.row(rows[static_cast<std::size_t>(r)]).transpose();
        double worst = -mult_eps;
        Index drop_row = -1;
        Index drop_var = -1;
        for (Index r = 0; r < k; ++r) {
          if (mu(r) < worst) {
            worst = mu(r);
            drop_row = r;
            drop_var = -1;
          }
        }
        for (Index j = 0; j < n; ++j) {
          const Pin s = pin[static_cast<std::size_t>(j)];
          if (s == Pin::kFree) continue;
          const double nu = s == Pin::kUpper ? -pull(j) : pull(j);
          if (nu < worst) {
            worst = nu;
            drop_var = j;
            drop_row = -1;
          }
        }
        if (drop_row < 0 && drop_var < 0) {
          if (max_violation(target) > tol) break;
          return target;
        }
        if (drop_var >= 0) {
          pin[static_cast<std::size_t>(drop_var)] = Pin::kFree;
        } else {
          in_rows[static_cast<std::size_t>(rows[static_cast<std::size_t>(drop_row)])] = 0;
          rows.erase(rows.begin() + drop_row);
        }
        continue;
      }

      // Longest feasible move toward the target.
      double alpha = 1.0;
      Index block_row = -1;
      Index block_var = -1;
      Pin block_pin = Pin::kFree;
      for (Index j = 0; j < n; ++j) {
        if (pin[static_cast<std::size_t>(j)] != Pin::kFree) continue;
        if (p(j) < 0.0) {
          const double ratio = std::max(0.0, x(j) / -p(j));
          if (ratio < alpha) {
            alpha = ratio;
            block_var = j;
            block_row = -1;
            block_pin = Pin::kLower;
          }
        } else if (p(j) > 0.0) {
          const double ratio = std::max(0.0, (upper_(j) - x(j)) / p(j));
          if (ratio < alpha) {
            alpha = ratio;
            block_var = j;
            block_row = -1;
            block_pin = Pin::kUpper;
          }
        }
      }
      for (Index i = 0; i < m; ++i) {
        if (in_rows[static_cast<std::size_t>(i)]) continue;
        const double ap = a_.row(i).dot(p);
        if (ap <= 0.0) continue;
        const double ratio = std::max(0.0, (b_(i) - a_.row(i).dot(x)) / ap);
        if (ratio < alpha) {
          alpha = ratio;
          block_row = i;
          block_var = -1;
        }
      }
      x += alpha * p;
      if (block_var >= 0) {
        x(block_var) = block_pin == Pin::kUpper ? upper_(block_var) : 0.0;
        pin[static_cast<std::size_t>(block_var)] = block_pin;
      } else if (block_row >= 0) {
        rows.push_back(block_row);
        in_rows[static_cast<std::size_t>(block_row)] = 1;
      }
    }
    throw ProjectionError("project: active-set method did not converge within " + std::to_string(max_iterations) +
                              " iterations (last step " + io::sig17(residual) + ")",
                          x, residual);
  }

  Matrix a_;
  Vector b_;
  Vector upper_;
  Vector row_norm_sq_;
};

}  // namespace drsub
