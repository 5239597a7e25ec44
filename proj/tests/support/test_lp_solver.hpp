#pragma once

// Minimal dense Big-M simplex used only by test oracles. Independent of the
// production solver (single-phase Big-M vs. two-phase, no shared code).

#include <cmath>
#include <vector>

namespace oracle_lp {

struct Row {
  std::vector<double> a;
  int rel = -1;  // -1: <=, 0: ==, +1: >=
  double rhs = 0.0;
};

struct Problem {
  int n = 0;                 // structural variables, all >= 0
  std::vector<double> upper; // per variable; may be infinity
  std::vector<double> objective;
  std::vector<Row> rows;
};

struct Outcome {
  bool feasible = false;
  double objective = 0.0;
  std::vector<double> x;
};

// Maximizes objective'x subject to the rows and bounds.
inline Outcome maximize(const Problem& prob) {
  std::vector<Row> rows = prob.rows;
  for (int j = 0; j < prob.n; ++j) {
    if (std::isfinite(prob.upper[j])) {
      Row r;
      r.a.assign(prob.n, 0.0);
      r.a[j] = 1.0;
      r.rel = -1;
      r.rhs = prob.upper[j];
      rows.push_back(r);
    }
  }
  for (auto& r : rows) {
    if (r.rhs < 0.0) {
      for (auto& v : r.a) v = -v;
      r.rhs = -r.rhs;
      r.rel = -r.rel;
    }
  }

  const int m = static_cast<int>(rows.size());
  int n_total = prob.n;
  std::vector<int> slack_col(m, -1), art_col(m, -1);
  for (int i = 0; i < m; ++i) {
    if (rows[i].rel != 0) slack_col[i] = n_total++;
    if (rows[i].rel >= 0) art_col[i] = n_total++;
  }

  double scale = 1.0;
  for (double c : prob.objective) scale = std::max(scale, std::abs(c));
  const double big_m = 1e7 * scale;

  std::vector<std::vector<double>> t(m, std::vector<double>(n_total + 1, 0.0));
  std::vector<double> cost(n_total + 1, 0.0);
  std::vector<int> basis(m, -1);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < prob.n; ++j) t[i][j] = rows[i].a[j];
    if (slack_col[i] >= 0) t[i][slack_col[i]] = rows[i].rel < 0 ? 1.0 : -1.0;
    if (art_col[i] >= 0) t[i][art_col[i]] = 1.0;
    t[i][n_total] = rows[i].rhs;
    basis[i] = art_col[i] >= 0 ? art_col[i] : slack_col[i];
  }
  for (int j = 0; j < prob.n; ++j) cost[j] = -prob.objective[j];  // minimize -obj
  for (int i = 0; i < m; ++i)
    if (art_col[i] >= 0) cost[art_col[i]] = big_m;
  for (int i = 0; i < m; ++i) {
    const double cb = cost[basis[i]];
    if (cb != 0.0)
      for (int j = 0; j <= n_total; ++j) cost[j] -= cb * t[i][j];
  }

  for (int iter = 0; iter < 200000; ++iter) {
    int enter = -1;
    for (int j = 0; j < n_total; ++j) {
      if (cost[j] < -1e-9) {
        enter = j;
        break;
      }
    }
    if (enter < 0) break;
    int leave = -1;
    double best = 0.0;
    for (int i = 0; i < m; ++i) {
      if (t[i][enter] > 1e-9) {
        const double ratio = t[i][n_total] / t[i][enter];
        if (leave < 0 || ratio < best - 1e-12 ||
            (ratio < best + 1e-12 && basis[i] < basis[leave])) {
          leave = i;
          best = ratio;
        }
      }
    }
    if (leave < 0) break;  // unbounded; callers use bounded problems
    const double piv = t[leave][enter];
    for (int j = 0; j <= n_total; ++j) t[leave][j] /= piv;
    for (int i = 0; i < m; ++i) {
      if (i == leave || t[i][enter] == 0.0) continue;
      const double f = t[i][enter];
      for (int j = 0; j <= n_total; ++j) t[i][j] -= f * t[leave][j];
    }
    const double cf = cost[enter];
    for (int j = 0; j <= n_total; ++j) cost[j] -= cf * t[leave][j];
    basis[leave] = enter;
  }

  Outcome out;
  for (int i = 0; i < m; ++i) {
    if (art_col[i] >= 0 && basis[i] == art_col[i] && t[i][n_total] > 1e-6) return out;  // infeasible
  }
  out.feasible = true;
  out.x.assign(prob.n, 0.0);
  for (int i = 0; i < m; ++i)
    if (basis[i] < prob.n) out.x[basis[i]] = t[i][n_total];
  for (int j = 0; j < prob.n; ++j) out.objective += prob.objective[j] * out.x[j];
  return out;
}

}  // namespace oracle_lp
