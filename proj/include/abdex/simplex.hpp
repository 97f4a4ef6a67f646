#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "abdex/error.hpp"
#include "abdex/linear.hpp"

namespace abdex {

enum class Sense { minimize, maximize, feasibility };

// Continuous LP: column bounds (possibly infinite), linear rows, and an
// optional linear objective. `binary` marks columns that are relaxations of
// binary variables so that solve_fixed_binary can validate its fixings.
struct LpProblem {
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<bool> binary;
  std::vector<LinearConstraint> rows;
  std::vector<Term> objective;
  double objective_constant = 0.0;
  Sense sense = Sense::feasibility;

  std::size_t variable_count() const { return lower.size(); }

  VarId add_variable(double lo, double hi, bool is_binary = false) {
    lower.push_back(lo);
    upper.push_back(hi);
    binary.push_back(is_binary);
    return VarId(lower.size() - 1);
  }

  void add_row(std::vector<Term> terms, Relation rel, double rhs,
               ConstraintOrigin origin = ConstraintOrigin::query) {
    rows.push_back(LinearConstraint{std::move(terms), rel, rhs, origin});
  }
};

enum class LpStatus { optimal, infeasible, unbounded };

inline std::string_view to_string(LpStatus s) {
  switch (s) {
    case LpStatus::optimal: return "optimal";
    case LpStatus::infeasible: return "infeasible";
    case LpStatus::unbounded: return "unbounded";
  }
  return "?";
}

struct LpOutcome {
  LpStatus status = LpStatus::infeasible;
  double value = 0.0;          // objective in the problem's own sense
  std::vector<double> point;   // one entry per column when optimal
  std::size_t iterations = 0;
};

struct SimplexOptions {
  double feasibility_tol = 1e-6;
  double pivot_tol = 1e-9;
  double optimality_tol = 1e-9;
  // Consecutive non-improving iterations before switching to Bland's rule.
  std::size_t stall_threshold = 50;
  std::size_t max_iterations = 100000;
};

// Dense bounded-variable primal simplex with a phase-1 artificial basis.
// Dantzig pricing, falling back to Bland's rule after a stall. One instance
// holds one tableau; do not share an instance across threads.
class SimplexSolver {
 public:
  explicit SimplexSolver(SimplexOptions opts = {}) : opts_(opts) {}

  const SimplexOptions& options() const { return opts_; }

  LpOutcome solve(const LpProblem& p) {
    validate(p);
    setup(p);

    LpOutcome out;
    // Phase 1: minimise the sum of artificials that start basic.
    std::vector<double> phase1(cols_, 0.0);
    bool need_phase1 = false;
    for (std::size_t i = 0; i < m_; ++i) {
      const std::size_t a = art(i);
      if (hi_[a] > 0.0) {
        phase1[a] = 1.0;
        need_phase1 = true;
      }
    }
    if (need_phase1) {
      run(phase1, /*phase_one=*/true);
      refresh_basic_values();
      double infeas = 0.0;
      for (std::size_t i = 0; i < m_; ++i) infeas += std::abs(column_value(art(i)));
      if (infeas > opts_.feasibility_tol) {
        out.status = LpStatus::infeasible;
        out.iterations = iterations_;
        return out;
      }
      for (std::size_t i = 0; i < m_; ++i) hi_[art(i)] = 0.0;
      drive_out_artificials();
    }

    // Phase 2.
    std::vector<double> cost(cols_, 0.0);
    const double sign = p.sense == Sense::maximize ? -1.0 : 1.0;
    if (p.sense != Sense::feasibility)
      for (const auto& t : p.objective) cost[t.var.index()] += sign * t.coef;
    if (!run(cost, /*phase_one=*/false)) {
      out.status = LpStatus::unbounded;
      out.iterations = iterations_;
      return out;
    }
    refresh_basic_values();

    out.point.assign(n_, 0.0);
    for (std::size_t j = 0; j < n_; ++j) {
      double v = column_value(j);
      if (v < lo_[j]) v = lo_[j];
      if (v > hi_[j]) v = hi_[j];
      out.point[j] = v;
    }
    certify(p, out.point);
    out.status = LpStatus::optimal;
    out.value = p.objective_constant;
    if (p.sense != Sense::feasibility)
      for (const auto& t : p.objective) out.value += t.coef * out.point[t.var.index()];
    out.iterations = iterations_;
    return out;
  }

 private:
  enum class Status : unsigned char { basic, at_lower, at_upper, free_zero };

  static void validate(const LpProblem& p) {
    const std::size_t n = p.variable_count();
    if (p.upper.size() != n || p.binary.size() != n)
      throw InputError("LpProblem: bound/tag vectors disagree in length");
    for (std::size_t j = 0; j < n; ++j) {
      if (std::isnan(p.lower[j]) || std::isnan(p.upper[j]) || p.lower[j] == kInf ||
          p.upper[j] == -kInf)
        throw InputError("LpProblem: column " + std::to_string(j) + " has invalid bounds");
    }
    for (std::size_t i = 0; i < p.rows.size(); ++i) {
      const auto& r = p.rows[i];
      if (!std::isfinite(r.rhs))
        throw InputError("LpProblem: row " + std::to_string(i) + " has a non-finite rhs");
      for (const auto& t : r.terms) {
        if (t.var.index() >= n)
          throw InputError("LpProblem: row " + std::to_string(i) + " references column " +
                           std::to_string(t.var.index()));
        if (!std::isfinite(t.coef))
          throw InputError("LpProblem: row " + std::to_string(i) +
                           " has a non-finite coefficient");
      }
    }
    for (const auto& t : p.objective) {
      if (t.var.index() >= n) throw InputError("LpProblem: objective references unknown column");
      if (!std::isfinite(t.coef)) throw InputError("LpProblem: non-finite objective coefficient");
    }
  }

  std::size_t slack(std::size_t i) const { return n_ + i; }
  std::size_t art(std::size_t i) const { return n_ + m_ + i; }
  double& tab(std::size_t i, std::size_t j) { return T_[i * cols_ + j]; }
  double tab(std::size_t i, std::size_t j) const { return T_[i * cols_ + j]; }

  double column_value(std::size_t j) const {
    return status_[j] == Status::basic ? beta_[row_of_[j]] : val_[j];
  }

  void setup(const LpProblem& p) {
    n_ = p.variable_count();
    m_ = p.rows.size();
    cols_ = n_ + 2 * m_;
    iterations_ = 0;

    A_.assign(m_ * n_, 0.0);
    b_.assign(m_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) {
      for (const auto& t : p.rows[i].terms) A_[i * n_ + t.var.index()] += t.coef;
      b_[i] = p.rows[i].rhs;
    }

    lo_.assign(cols_, 0.0);
    hi_.assign(cols_, 0.0);
    val_.assign(cols_, 0.0);
    status_.assign(cols_, Status::at_lower);
    row_of_.assign(cols_, kNone);
    for (std::size_t j = 0; j < n_; ++j) {
      lo_[j] = p.lower[j];
      hi_[j] = p.upper[j];
      if (std::isfinite(lo_[j])) {
        val_[j] = lo_[j];
        status_[j] = Status::at_lower;
      } else if (std::isfinite(hi_[j])) {
        val_[j] = hi_[j];
        status_[j] = Status::at_upper;
      } else {
        val_[j] = 0.0;
        status_[j] = Status::free_zero;
      }
    }
    // Slack s_i: a.x + s = b.  <= : s in [0, inf);  >= : s in (-inf, 0];  = : s = 0.
    for (std::size_t i = 0; i < m_; ++i) {
      const std::size_t s = slack(i);
      switch (p.rows[i].relation) {
        case Relation::le: lo_[s] = 0.0; hi_[s] = kInf; break;
        case Relation::ge: lo_[s] = -kInf; hi_[s] = 0.0; break;
        case Relation::eq: lo_[s] = 0.0; hi_[s] = 0.0; break;
      }
      val_[s] = 0.0;
      status_[s] = std::isfinite(lo_[s]) ? Status::at_lower : Status::at_upper;
    }

    sigma_.assign(m_, 1.0);
    basis_.assign(m_, 0);
    beta_.assign(m_, 0.0);
    T_.assign(m_ * cols_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) {
      double r = b_[i];
      for (std::size_t j = 0; j < n_; ++j) r -= A_[i * n_ + j] * val_[j];
      const std::size_t s = slack(i);
      const std::size_t a = art(i);
      sigma_[i] = r >= 0.0 ? 1.0 : -1.0;
      lo_[a] = 0.0;
      if (r >= lo_[s] && r <= hi_[s]) {
        // Slack absorbs the residual; its artificial stays fixed at zero.
        hi_[a] = 0.0;
        status_[a] = Status::at_lower;
        val_[a] = 0.0;
        basis_[i] = s;
        beta_[i] = r;
        for (std::size_t j = 0; j < n_; ++j) tab(i, j) = A_[i * n_ + j];
        tab(i, s) = 1.0;
        tab(i, a) = sigma_[i];
      } else {
        hi_[a] = kInf;
        basis_[i] = a;
        beta_[i] = std::abs(r);
        // Row divided by the artificial's coefficient sigma.
        for (std::size_t j = 0; j < n_; ++j) tab(i, j) = A_[i * n_ + j] * sigma_[i];
        tab(i, s) = sigma_[i];
        tab(i, a) = 1.0;
      }
      status_[basis_[i]] = Status::basic;
      row_of_[basis_[i]] = i;
    }
  }

  // Recompute basic values from B^-1 (b - N x_N). The artificial block of
  // the tableau is B^-1 diag(sigma).
  void refresh_basic_values() {
    if (m_ == 0) return;
    std::vector<double> r(b_);
    for (std::size_t j = 0; j < n_; ++j) {
      if (status_[j] == Status::basic || val_[j] == 0.0) continue;
      for (std::size_t i = 0; i < m_; ++i) r[i] -= A_[i * n_ + j] * val_[j];
    }
    for (std::size_t i = 0; i < m_; ++i) {
      if (status_[slack(i)] != Status::basic) r[i] -= val_[slack(i)];
      if (status_[art(i)] != Status::basic) r[i] -= sigma_[i] * val_[art(i)];
    }
    for (std::size_t k = 0; k < m_; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < m_; ++i) s += tab(k, art(i)) * sigma_[i] * r[i];
      beta_[k] = s;
    }
  }

  void pivot(std::size_t r, std::size_t j) {
    double* prow = &T_[r * cols_];
    const double inv = 1.0 / prow[j];
    for (std::size_t c = 0; c < cols_; ++c) prow[c] *= inv;
    prow[j] = 1.0;
    for (std::size_t i = 0; i < m_; ++i) {
      if (i == r) continue;
      double* row = &T_[i * cols_];
      const double f = row[j];
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < cols_; ++c) row[c] -= f * prow[c];
      row[j] = 0.0;
    }
    const std::size_t leaving = basis_[r];
    row_of_[leaving] = kNone;
    basis_[r] = j;
    row_of_[j] = r;
    status_[j] = Status::basic;
  }

  // Runs primal simplex on `cost` (minimisation). Returns false on an
  // unbounded ray.
  bool run(const std::vector<double>& cost, bool phase_one) {
    bool bland = opts_.stall_threshold == 0;
    std::size_t stall = 0;
    std::vector<double> y(m_);
    std::size_t since_refresh = 0;

    for (;;) {
      if (++iterations_ > opts_.max_iterations)
        throw SolverError("simplex: iteration limit of " +
                          std::to_string(opts_.max_iterations) + " exceeded");
      if (++since_refresh >= 64) {
        refresh_basic_values();
        since_refresh = 0;
      }

      for (std::size_t i = 0; i < m_; ++i) y[i] = cost[basis_[i]];

      // Pricing.
      std::size_t enter = kNone;
      double enter_dir = 0.0;
      double best = 0.0;
      double enter_d = 0.0;
      for (std::size_t j = 0; j < cols_; ++j) {
        const Status st = status_[j];
        if (st == Status::basic || lo_[j] == hi_[j]) continue;
        double d = cost[j];
        for (std::size_t i = 0; i < m_; ++i) d -= y[i] * T_[i * cols_ + j];
        double dir = 0.0;
        if (st == Status::at_lower && d < -opts_.optimality_tol) dir = 1.0;
        else if (st == Status::at_upper && d > opts_.optimality_tol) dir = -1.0;
        else if (st == Status::free_zero && std::abs(d) > opts_.optimality_tol)
          dir = d < 0.0 ? 1.0 : -1.0;
        if (dir == 0.0) continue;
        if (bland) {
          enter = j;
          enter_dir = dir;
          enter_d = d;
          break;
        }
        if (std::abs(d) > best) {
          best = std::abs(d);
          enter = j;
          enter_dir = dir;
          enter_d = d;
        }
      }
      if (enter == kNone) return true;

      // Ratio test.
      double t_max = kInf;
      std::size_t leave_row = kNone;
      bool leave_to_upper = false;
      double leave_alpha = 0.0;
      if (std::isfinite(lo_[enter]) && std::isfinite(hi_[enter])) t_max = hi_[enter] - lo_[enter];
      for (std::size_t i = 0; i < m_; ++i) {
        const double alpha = enter_dir * tab(i, enter);
        if (std::abs(alpha) <= opts_.pivot_tol) continue;
        const std::size_t bv = basis_[i];
        double t;
        bool to_upper;
        if (alpha > 0.0) {
          if (!std::isfinite(lo_[bv])) continue;
          t = (beta_[i] - lo_[bv]) / alpha;
          to_upper = false;
        } else {
          if (!std::isfinite(hi_[bv])) continue;
          t = (hi_[bv] - beta_[i]) / -alpha;
          to_upper = true;
        }
        if (t < 0.0) t = 0.0;
        bool take;
        if (leave_row == kNone)
          take = t < t_max;
        else if (t < t_max - kTieEps)
          take = true;
        else if (t <= t_max + kTieEps)
          take = bland ? bv < basis_[leave_row] : std::abs(alpha) > std::abs(leave_alpha);
        else
          take = false;
        if (take) {
          t_max = std::min(t_max, t);
          leave_row = i;
          leave_to_upper = to_upper;
          leave_alpha = alpha;
        }
      }
      if (!std::isfinite(t_max)) {
        if (phase_one) throw SolverError("simplex: phase-1 objective unbounded");
        return false;
      }

      // Step.
      const double step = enter_dir * t_max;
      if (t_max > 0.0) {
        for (std::size_t i = 0; i < m_; ++i) beta_[i] -= step * tab(i, enter);
      }
      const double improvement = -enter_d * step;
      if (improvement > 1e-12) stall = 0;
      else if (++stall >= opts_.stall_threshold) bland = true;

      if (leave_row == kNone) {
        // Bound flip of the entering column.
        if (enter_dir > 0.0) {
          val_[enter] = hi_[enter];
          status_[enter] = Status::at_upper;
        } else {
          val_[enter] = lo_[enter];
          status_[enter] = Status::at_lower;
        }
        continue;
      }

      const double entering_value = val_[enter] + step;
      const std::size_t leaving = basis_[leave_row];
      pivot(leave_row, enter);
      beta_[leave_row] = entering_value;
      if (leave_to_upper) {
        val_[leaving] = hi_[leaving];
        status_[leaving] = Status::at_upper;
      } else {
        val_[leaving] = lo_[leaving];
        status_[leaving] = Status::at_lower;
      }
      if (phase_one && leaving >= n_ + m_) hi_[leaving] = 0.0;  // artificials never re-enter
    }
  }

  // After phase 1 every artificial sits at zero. Pivot basic artificials out
  // wherever a non-artificial column has a usable entry; rows where none
  // exists are redundant and keep their (fixed at zero) artificial.
  void drive_out_artificials() {
    for (std::size_t i = 0; i < m_; ++i) {
      const std::size_t bv = basis_[i];
      if (bv < n_ + m_) continue;
      std::size_t best = kNone;
      double best_abs = opts_.pivot_tol;
      for (std::size_t j = 0; j < n_ + m_; ++j) {
        if (status_[j] == Status::basic) continue;
        const double a = std::abs(tab(i, j));
        if (a > best_abs) {
          best_abs = a;
          best = j;
        }
      }
      if (best == kNone) continue;
      const double entering_value = val_[best] + beta_[i] / tab(i, best);
      const double delta = entering_value - val_[best];
      for (std::size_t k = 0; k < m_; ++k)
        if (k != i) beta_[k] -= delta * tab(k, best);
      pivot(i, best);
      beta_[i] = entering_value;
      val_[bv] = 0.0;
      status_[bv] = Status::at_lower;
    }
  }

  void certify(const LpProblem& p, const std::vector<double>& x) const {
    const double tol = opts_.feasibility_tol;
    for (std::size_t i = 0; i < p.rows.size(); ++i) {
      const double v = p.rows[i].violation(x);
      if (v > tol * (1.0 + std::abs(p.rows[i].rhs)))
        throw SolverError("simplex: optimal point violates row " + std::to_string(i) + " by " +
                          std::to_string(v));
    }
  }

  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  static constexpr double kTieEps = 1e-12;

  SimplexOptions opts_;
  std::size_t n_ = 0, m_ = 0, cols_ = 0;
  std::size_t iterations_ = 0;
  std::vector<double> A_, b_;
  std::vector<double> T_;
  std::vector<double> lo_, hi_, val_, beta_, sigma_;
  std::vector<Status> status_;
  std::vector<std::size_t> basis_, row_of_;
};

inline LpOutcome solve_lp(const LpProblem& p, const SimplexOptions& opts = {}) {
  return SimplexSolver(opts).solve(p);
}

// solve_lp with the given binary-tagged columns pinned to 0 or 1.
inline LpOutcome solve_fixed_binary(LpProblem p, const std::map<VarId, int>& fixings,
                                    const SimplexOptions& opts = {}) {
  for (const auto& [id, v] : fixings) {
    if (id.index() >= p.variable_count() || !p.binary[id.index()])
      throw InputError("solve_fixed_binary: column " + std::to_string(id.index()) +
                       " is not a binary variable");
    if (v != 0 && v != 1) throw InputError("solve_fixed_binary: fixing must be 0 or 1");
    p.lower[id.index()] = v;
    p.upper[id.index()] = v;
  }
  return solve_lp(p, opts);
}

}  // namespace abdex
