#include "pipescale/lp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <queue>
#include <sstream>

namespace pipescale {

namespace {

constexpr double kPivotTol = 1e-10;
constexpr double kReducedCostTol = 1e-9;
constexpr double kZeroTol = 1e-12;
constexpr std::int64_t kIterationCap = 500'000;

[[noreturn]] void numerical_failure(const std::string& msg) {
  throw SolverError(SolverError::Code::NumericalFailure, msg);
}

// Standard-form problem: min c'x s.t. Ax = b, x >= 0, built from the general
// bounded-variable program. Original variables map to one or two columns plus
// a shift, so values can be recovered after the solve.
struct StandardForm {
  struct ColMap {
    int pos_col = -1;   // column for +x (after shift)
    int neg_col = -1;   // column for -x part (free variables)
    double shift = 0.0;
    bool negated = false;  // x = shift - col  (upper bound only)
  };

  Eigen::MatrixXd a;       // m x n, structural + slack/surplus columns
  Eigen::VectorXd b;       // m
  Eigen::VectorXd cost;    // n, phase-2 objective (minimization)
  std::vector<ColMap> map; // per original variable
  int structural_cols = 0;
};

StandardForm build_standard_form(const LinearProgram& lp, const std::vector<double>& lower,
                                 const std::vector<double>& upper) {
  const int n_orig = lp.var_count();
  StandardForm sf;
  sf.map.resize(n_orig);

  int next_col = 0;
  for (int j = 0; j < n_orig; ++j) {
    const double lo = lower[j], hi = upper[j];
    auto& m = sf.map[j];
    if (std::isfinite(lo)) {
      m.pos_col = next_col++;
      m.shift = lo;
    } else if (std::isfinite(hi)) {
      m.pos_col = next_col++;
      m.shift = hi;
      m.negated = true;
    } else {
      m.pos_col = next_col++;
      m.neg_col = next_col++;
    }
  }
  sf.structural_cols = next_col;

  // Rows: user constraints plus upper-bound rows for doubly bounded vars.
  struct Row {
    std::vector<std::pair<int, double>> terms;  // in standard-form columns
    Relation rel;
    double rhs;
  };
  std::vector<Row> rows;

  auto push_term = [&](std::vector<std::pair<int, double>>& terms, double& rhs_adjust, int var,
                       double coeff) {
    const auto& m = sf.map[var];
    if (m.neg_col >= 0) {
      terms.emplace_back(m.pos_col, coeff);
      terms.emplace_back(m.neg_col, -coeff);
    } else if (m.negated) {
      terms.emplace_back(m.pos_col, -coeff);
      rhs_adjust += coeff * m.shift;
    } else {
      terms.emplace_back(m.pos_col, coeff);
      rhs_adjust += coeff * m.shift;
    }
  };

  for (const auto& c : lp.constraints) {
    Row row;
    row.rel = c.rel;
    double adjust = 0.0;
    for (const auto& [var, coeff] : c.terms) push_term(row.terms, adjust, var, coeff);
    row.rhs = c.rhs - adjust;
    rows.push_back(std::move(row));
  }
  for (int j = 0; j < n_orig; ++j) {
    const double lo = lower[j], hi = upper[j];
    if (std::isfinite(lo) && std::isfinite(hi)) {
      Row row;
      row.rel = Relation::LessEq;
      row.terms.emplace_back(sf.map[j].pos_col, 1.0);
      row.rhs = hi - lo;
      rows.push_back(std::move(row));
    }
  }

  // Slack / surplus columns; artificials are appended by the solver.
  int n_cols = sf.structural_cols;
  for (const auto& row : rows)
    if (row.rel != Relation::Equal) ++n_cols;

  const int m_rows = static_cast<int>(rows.size());
  sf.a = Eigen::MatrixXd::Zero(m_rows, n_cols);
  sf.b = Eigen::VectorXd::Zero(m_rows);
  int slack_col = sf.structural_cols;
  for (int i = 0; i < m_rows; ++i) {
    for (const auto& [col, coeff] : rows[i].terms) sf.a(i, col) += coeff;
    sf.b(i) = rows[i].rhs;
    if (rows[i].rel == Relation::LessEq)
      sf.a(i, slack_col++) = 1.0;
    else if (rows[i].rel == Relation::GreaterEq)
      sf.a(i, slack_col++) = -1.0;
  }

  sf.cost = Eigen::VectorXd::Zero(n_cols);
  const double sign = lp.sense == Sense::Minimize ? 1.0 : -1.0;
  for (int j = 0; j < n_orig; ++j) {
    const double c = lp.objective[j] * sign;
    if (c == 0.0) continue;
    const auto& m = sf.map[j];
    if (m.neg_col >= 0) {
      sf.cost(m.pos_col) += c;
      sf.cost(m.neg_col) -= c;
    } else if (m.negated) {
      sf.cost(m.pos_col) -= c;
    } else {
      sf.cost(m.pos_col) += c;
    }
  }
  return sf;
}

// Bland's rule on a dense tableau. Returns false when the current objective
// is unbounded below (only meaningful in phase 2).
bool run_simplex(Eigen::MatrixXd& t, Eigen::VectorXd& rhs, Eigen::RowVectorXd& cost,
                 std::vector<int>& basis, int usable_cols) {
  const int m = static_cast<int>(t.rows());
  for (std::int64_t iter = 0; iter < kIterationCap; ++iter) {
    int entering = -1;
    for (int j = 0; j < usable_cols; ++j) {
      if (cost(j) < -kReducedCostTol) {
        entering = j;
        break;  // Bland: lowest index
      }
    }
    if (entering < 0) return true;  // optimal

    int leave_row = -1;
    double best_ratio = 0.0;
    bool had_tiny_pivot = false;
    for (int i = 0; i < m; ++i) {
      const double a = t(i, entering);
      if (a > kZeroTol && a <= kPivotTol) had_tiny_pivot = true;
      if (a <= kPivotTol) continue;
      const double ratio = rhs(i) / a;
      if (leave_row < 0 || ratio < best_ratio - kZeroTol ||
          (ratio < best_ratio + kZeroTol && basis[i] < basis[leave_row])) {
        leave_row = i;
        best_ratio = ratio;
      }
    }
    if (leave_row < 0) {
      if (had_tiny_pivot) numerical_failure("pivot magnitude below 1e-10 with no alternative");
      return false;  // unbounded direction
    }

    const double pivot = t(leave_row, entering);
    t.row(leave_row) /= pivot;
    rhs(leave_row) /= pivot;
    for (int i = 0; i < m; ++i) {
      if (i == leave_row) continue;
      const double f = t(i, entering);
      if (f != 0.0) {
        t.row(i) -= f * t.row(leave_row);
        rhs(i) -= f * rhs(leave_row);
        if (rhs(i) < 0.0 && rhs(i) > -1e-11) rhs(i) = 0.0;
      }
    }
    const double cf = cost(entering);
    if (cf != 0.0) cost -= cf * t.row(leave_row);
    basis[leave_row] = entering;
  }
  numerical_failure("simplex iteration cap exceeded");
}

Solution solve_lp_bounds(const LinearProgram& lp, const std::vector<double>& lower,
                         const std::vector<double>& upper) {
  for (int j = 0; j < lp.var_count(); ++j) {
    if (lower[j] > upper[j] + kZeroTol) return {SolveStatus::Infeasible, 0.0, {}, 0};
  }

  StandardForm sf = build_standard_form(lp, lower, upper);
  const int m = static_cast<int>(sf.a.rows());
  const int n = static_cast<int>(sf.a.cols());

  // Row equilibration keeps the absolute tolerances meaningful when
  // constraint coefficients span orders of magnitude.
  for (int i = 0; i < m; ++i) {
    const double mag = sf.a.row(i).cwiseAbs().maxCoeff();
    if (mag > 0.0) {
      sf.a.row(i) /= mag;
      sf.b(i) /= mag;
    }
  }

  // Normalize rhs signs, then append one artificial per row.
  for (int i = 0; i < m; ++i) {
    if (sf.b(i) < 0.0) {
      sf.a.row(i) *= -1.0;
      sf.b(i) *= -1.0;
    }
  }

  Eigen::MatrixXd t(m, n + m);
  t << sf.a, Eigen::MatrixXd::Identity(m, m);
  Eigen::VectorXd rhs = sf.b;
  std::vector<int> basis(m);
  for (int i = 0; i < m; ++i) basis[i] = n + i;

  // Phase 1: minimize the sum of artificials.
  Eigen::RowVectorXd p1cost = Eigen::RowVectorXd::Zero(n + m);
  for (int i = 0; i < m; ++i) p1cost(n + i) = 1.0;
  for (int i = 0; i < m; ++i) p1cost -= t.row(i);  // reduce against the artificial basis

  if (!run_simplex(t, rhs, p1cost, basis, n + m))
    numerical_failure("phase-1 objective unbounded");
  double p1obj = 0.0;  // nonbasic artificials sit at zero
  for (int i = 0; i < m; ++i)
    if (basis[i] >= n) p1obj += rhs(i);
  if (p1obj > 1e-7) return {SolveStatus::Infeasible, 0.0, {}, 0};

  // Drive remaining artificials out of the basis; rows that cannot pivot are
  // redundant and dropped.
  std::vector<int> keep_rows;
  for (int i = 0; i < m; ++i) {
    if (basis[i] < n) {
      keep_rows.push_back(i);
      continue;
    }
    int pivot_col = -1;
    for (int j = 0; j < n; ++j) {
      if (std::abs(t(i, j)) > 1e-9) {
        pivot_col = j;
        break;
      }
    }
    if (pivot_col < 0) continue;  // redundant row
    const double pivot = t(i, pivot_col);
    t.row(i) /= pivot;
    rhs(i) /= pivot;
    for (int k = 0; k < m; ++k) {
      if (k == i) continue;
      const double f = t(k, pivot_col);
      if (f != 0.0) {
        t.row(k) -= f * t.row(i);
        rhs(k) -= f * rhs(i);
      }
    }
    basis[i] = pivot_col;
    keep_rows.push_back(i);
  }

  const int m2 = static_cast<int>(keep_rows.size());
  Eigen::MatrixXd t2(m2, n);
  Eigen::VectorXd rhs2(m2);
  std::vector<int> basis2(m2);
  for (int i = 0; i < m2; ++i) {
    t2.row(i) = t.row(keep_rows[i]).head(n);
    rhs2(i) = rhs(keep_rows[i]);
    basis2[i] = basis[keep_rows[i]];
  }

  // Phase 2 with the true objective, reduced against the current basis.
  Eigen::RowVectorXd cost = sf.cost.transpose();
  for (int i = 0; i < m2; ++i) {
    const double cb = cost(basis2[i]);
    if (cb != 0.0) cost -= cb * t2.row(i);
  }

  if (!run_simplex(t2, rhs2, cost, basis2, n)) return {SolveStatus::Unbounded, 0.0, {}, 0};

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < m2; ++i) x(basis2[i]) = rhs2(i);

  Solution sol;
  sol.status = SolveStatus::Optimal;
  sol.values.resize(lp.var_count());
  for (int j = 0; j < lp.var_count(); ++j) {
    const auto& mp = sf.map[j];
    double v;
    if (mp.neg_col >= 0)
      v = x(mp.pos_col) - x(mp.neg_col);
    else if (mp.negated)
      v = mp.shift - x(mp.pos_col);
    else
      v = mp.shift + x(mp.pos_col);
    sol.values[j] = v;
  }
  sol.objective = objective_value(lp, sol.values);
  return sol;
}

bool improves(Sense sense, double candidate, double incumbent) {
  const double tol = kBoundRelTol * std::max(1.0, std::abs(incumbent));
  return sense == Sense::Maximize ? candidate > incumbent + tol : candidate < incumbent - tol;
}

}  // namespace

void LinearProgram::validate() const {
  for (int j = 0; j < var_count(); ++j) {
    const auto& v = vars[j];
    if (std::isnan(v.lower) || std::isnan(v.upper) || v.lower > v.upper + kZeroTol)
      throw SolverError(SolverError::Code::InvalidProblem, "bad bounds on variable " + v.name);
    if (v.kind != VarKind::Continuous && (!std::isfinite(v.lower) || !std::isfinite(v.upper)))
      throw SolverError(SolverError::Code::InvalidProblem,
                        "integer variable " + v.name + " must have finite bounds");
    if (!std::isfinite(objective[j]))
      throw SolverError(SolverError::Code::InvalidProblem, "non-finite objective coefficient");
  }
  for (const auto& c : constraints) {
    if (!std::isfinite(c.rhs))
      throw SolverError(SolverError::Code::InvalidProblem, "non-finite rhs in constraint " + c.name);
    for (const auto& [var, coeff] : c.terms) {
      if (var < 0 || var >= var_count() || !std::isfinite(coeff))
        throw SolverError(SolverError::Code::InvalidProblem, "bad term in constraint " + c.name);
    }
  }
}

Solution solve_lp(const LinearProgram& lp) {
  lp.validate();
  std::vector<double> lower(lp.var_count()), upper(lp.var_count());
  for (int j = 0; j < lp.var_count(); ++j) {
    lower[j] = lp.vars[j].lower;
    upper[j] = lp.vars[j].upper;
  }
  return solve_lp_bounds(lp, lower, upper);
}

Solution solve_milp(const LinearProgram& lp, const SolveOptions& opts) {
  lp.validate();

  std::vector<int> int_vars;
  for (int j = 0; j < lp.var_count(); ++j)
    if (lp.vars[j].kind != VarKind::Continuous) int_vars.push_back(j);

  struct Node {
    double bound;
    std::int64_t id;
    std::vector<double> lower, upper;
  };
  auto worse = [&](const Node& a, const Node& b) {
    if (a.bound != b.bound) return lp.sense == Sense::Maximize ? a.bound < b.bound : a.bound > b.bound;
    return a.id > b.id;
  };
  std::priority_queue<Node, std::vector<Node>, decltype(worse)> open(worse);

  Node root;
  root.bound = lp.sense == Sense::Maximize ? kInf : -kInf;
  root.id = 0;
  root.lower.resize(lp.var_count());
  root.upper.resize(lp.var_count());
  for (int j = 0; j < lp.var_count(); ++j) {
    root.lower[j] = lp.vars[j].lower;
    root.upper[j] = lp.vars[j].upper;
    if (lp.vars[j].kind != VarKind::Continuous) {
      root.lower[j] = std::ceil(root.lower[j] - kIntTol);
      root.upper[j] = std::floor(root.upper[j] + kIntTol);
    }
  }
  open.push(root);

  Solution best;
  bool have_incumbent = false;
  std::int64_t next_id = 1;
  std::int64_t solved = 0;

  while (!open.empty()) {
    Node node = open.top();
    open.pop();

    if (have_incumbent && !improves(lp.sense, node.bound, best.objective)) continue;
    if (solved >= opts.node_limit)
      throw SolverError(SolverError::Code::NodeLimitExceeded,
                        "branch-and-bound node limit exceeded (" + std::to_string(opts.node_limit) + ")");

    Solution relax = solve_lp_bounds(lp, node.lower, node.upper);
    ++solved;

    if (relax.status == SolveStatus::Unbounded) {
      // With all integers bounded this is a continuous unbounded direction.
      return {SolveStatus::Unbounded, 0.0, {}, solved};
    }
    if (relax.status != SolveStatus::Optimal) continue;
    if (have_incumbent && !improves(lp.sense, relax.objective, best.objective)) continue;

    // Most fractional integer variable, ties toward the lowest index.
    int branch_var = -1;
    double branch_frac = kIntTol;
    for (int j : int_vars) {
      const double v = relax.values[j];
      const double frac = std::abs(v - std::round(v));
      if (frac > branch_frac + kZeroTol) {
        branch_frac = frac;
        branch_var = j;
      }
    }

    if (branch_var < 0) {
      best = relax;
      best.nodes = 0;
      for (int j : int_vars) best.values[j] = std::round(best.values[j]);
      best.objective = objective_value(lp, best.values);
      have_incumbent = true;
      continue;
    }

    const double v = relax.values[branch_var];
    Node down = node, up = node;
    down.upper[branch_var] = std::floor(v);
    up.lower[branch_var] = std::ceil(v);
    down.bound = up.bound = relax.objective;
    down.id = next_id++;
    up.id = next_id++;
    if (down.lower[branch_var] <= down.upper[branch_var] + kZeroTol) open.push(down);
    if (up.lower[branch_var] <= up.upper[branch_var] + kZeroTol) open.push(up);
  }

  if (!have_incumbent) return {SolveStatus::Infeasible, 0.0, {}, solved};
  best.status = SolveStatus::Optimal;
  best.nodes = solved;
  return best;
}

bool solution_feasible(const LinearProgram& lp, const std::vector<double>& x, double tol) {
  if (static_cast<int>(x.size()) != lp.var_count()) return false;
  for (int j = 0; j < lp.var_count(); ++j) {
    const auto& v = lp.vars[j];
    if (x[j] < v.lower - tol || x[j] > v.upper + tol) return false;
    if (v.kind != VarKind::Continuous && std::abs(x[j] - std::round(x[j])) > kIntTol) return false;
  }
  for (const auto& c : lp.constraints) {
    double lhs = 0.0;
    for (const auto& [var, coeff] : c.terms) lhs += coeff * x[var];
    if (c.rel == Relation::LessEq && lhs > c.rhs + tol) return false;
    if (c.rel == Relation::GreaterEq && lhs < c.rhs - tol) return false;
    if (c.rel == Relation::Equal && std::abs(lhs - c.rhs) > tol) return false;
  }
  return true;
}

double objective_value(const LinearProgram& lp, const std::vector<double>& x) {
  double obj = 0.0;
  for (int j = 0; j < lp.var_count(); ++j) obj += lp.objective[j] * x[j];
  return obj;
}

namespace {

std::string sanitize_name(const std::string& raw) {
  std::string out;
  for (char ch : raw) {
    const bool ok = (ch >= 'A' && ch <= 'Z') || (ch >= 'a' && ch <= 'z') || (ch >= '0' && ch <= '9') || ch == '_';
    out.push_back(ok ? ch : '_');
  }
  if (out.empty() || (out[0] >= '0' && out[0] <= '9') || out[0] == 'e' || out[0] == 'E') out = "v_" + out;
  return out;
}

std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_terms(std::ostream& os, const std::vector<std::pair<int, double>>& terms,
                 const std::vector<std::string>& names) {
  bool first = true;
  for (const auto& [var, coeff] : terms) {
    if (coeff == 0.0) continue;
    if (first) {
      if (coeff < 0.0) os << "- ";
      first = false;
    } else {
      os << (coeff < 0.0 ? " - " : " + ");
    }
    const double mag = std::abs(coeff);
    if (mag != 1.0) os << fmt_num(mag) << ' ';
    os << names[var];
  }
  if (first) os << "0 " << names[0];
}

}  // namespace

std::string export_lp_file(const LinearProgram& lp) {
  lp.validate();
  if (lp.var_count() == 0) throw SolverError(SolverError::Code::InvalidProblem, "empty program");

  std::vector<std::string> names(lp.var_count());
  for (int j = 0; j < lp.var_count(); ++j) {
    names[j] = sanitize_name(lp.vars[j].name.empty() ? "x" + std::to_string(j) : lp.vars[j].name);
  }
  for (int j = 0; j < lp.var_count(); ++j) {
    for (int k = j + 1; k < lp.var_count(); ++k) {
      if (names[j] == names[k])
        throw SolverError(SolverError::Code::InvalidName,
                          "variable names collide after sanitization: " + names[j]);
    }
  }

  std::ostringstream os;
  os << (lp.sense == Sense::Maximize ? "Maximize" : "Minimize") << '\n';
  os << " obj: ";
  std::vector<std::pair<int, double>> obj_terms;
  for (int j = 0; j < lp.var_count(); ++j)
    if (lp.objective[j] != 0.0) obj_terms.emplace_back(j, lp.objective[j]);
  write_terms(os, obj_terms, names);
  os << '\n';

  os << "Subject To\n";
  for (std::size_t i = 0; i < lp.constraints.size(); ++i) {
    const auto& c = lp.constraints[i];
    const std::string cname = c.name.empty() ? "c" + std::to_string(i) : sanitize_name(c.name);
    os << ' ' << cname << ": ";
    write_terms(os, c.terms, names);
    os << (c.rel == Relation::LessEq ? " <= " : c.rel == Relation::GreaterEq ? " >= " : " = ");
    os << fmt_num(c.rhs) << '\n';
  }

  os << "Bounds\n";
  for (int j = 0; j < lp.var_count(); ++j) {
    const auto& v = lp.vars[j];
    if (v.kind == VarKind::Binary) continue;
    if (v.lower == 0.0 && v.upper == kInf) continue;
    os << ' ';
    if (!std::isfinite(v.lower) && !std::isfinite(v.upper)) {
      os << names[j] << " free";
    } else if (!std::isfinite(v.lower)) {
      os << "-infinity <= " << names[j] << " <= " << fmt_num(v.upper);
    } else if (!std::isfinite(v.upper)) {
      os << names[j] << " >= " << fmt_num(v.lower);
    } else {
      os << fmt_num(v.lower) << " <= " << names[j] << " <= " << fmt_num(v.upper);
    }
    os << '\n';
  }

  std::vector<int> generals, binaries;
  for (int j = 0; j < lp.var_count(); ++j) {
    if (lp.vars[j].kind == VarKind::Integer) generals.push_back(j);
    if (lp.vars[j].kind == VarKind::Binary) binaries.push_back(j);
  }
  if (!generals.empty()) {
    os << "Generals\n";
    for (int j : generals) os << ' ' << names[j] << '\n';
  }
  if (!binaries.empty()) {
    os << "Binaries\n";
    for (int j : binaries) os << ' ' << names[j] << '\n';
  }
  os << "End\n";
  return os.str();
}

}  // namespace pipescale
