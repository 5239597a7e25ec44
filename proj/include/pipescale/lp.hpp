#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace pipescale {

enum class VarKind { Continuous, Integer, Binary };
enum class Relation { LessEq, Equal, GreaterEq };
enum class Sense { Minimize, Maximize };
enum class SolveStatus { Optimal, Infeasible, Unbounded };

class SolverError : public std::runtime_error {
 public:
  enum class Code { NumericalFailure, NodeLimitExceeded, InvalidProblem, InvalidName };

  SolverError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Variable {
  std::string name;
  double lower = 0.0;
  double upper = kInf;
  VarKind kind = VarKind::Continuous;
};

struct ConstraintRow {
  std::vector<std::pair<int, double>> terms;  // (variable index, coefficient)
  Relation rel = Relation::LessEq;
  double rhs = 0.0;
  std::string name;
};

struct LinearProgram {
  Sense sense = Sense::Minimize;
  std::vector<Variable> vars;
  std::vector<double> objective;  // aligned with vars
  std::vector<ConstraintRow> constraints;

  int add_var(const std::string& name, double lower, double upper, VarKind kind) {
    vars.push_back({name, lower, upper, kind});
    objective.push_back(0.0);
    return static_cast<int>(vars.size()) - 1;
  }
  void set_objective_coeff(int var, double coeff) { objective[var] = coeff; }
  void add_constraint(std::vector<std::pair<int, double>> terms, Relation rel, double rhs,
                      std::string name = {}) {
    constraints.push_back({std::move(terms), rel, rhs, std::move(name)});
  }
  int var_count() const { return static_cast<int>(vars.size()); }

  // Finite bounds on integers, no NaN/inf coefficients. Throws InvalidProblem.
  void validate() const;
};

struct Solution {
  SolveStatus status = SolveStatus::Infeasible;
  double objective = 0.0;
  std::vector<double> values;
  std::int64_t nodes = 0;  // branch-and-bound nodes solved (0 for a plain LP solve)
};

struct SolveOptions {
  std::int64_t node_limit = 1'000'000;
};

// Feasibility tolerance 1e-6 absolute, integrality 1e-6, bound pruning 1e-9
// relative.
inline constexpr double kFeasTol = 1e-6;
inline constexpr double kIntTol = 1e-6;
inline constexpr double kBoundRelTol = 1e-9;

// Bounded-variable two-phase dense simplex with Bland's rule; integrality is
// ignored. Deterministic for a fixed problem.
Solution solve_lp(const LinearProgram& lp);

// Exact best-first branch-and-bound on the most fractional integer variable
// (ties toward the lowest variable index). Deterministic.
Solution solve_milp(const LinearProgram& lp, const SolveOptions& opts = {});

// CPLEX LP text (Maximize/Subject To/Bounds/Generals/Binaries sections).
// Variable names are sanitized to [A-Za-z0-9_]; a post-sanitization collision
// throws InvalidName.
std::string export_lp_file(const LinearProgram& lp);

// Audit helper: does x satisfy all constraints, bounds and integrality?
bool solution_feasible(const LinearProgram& lp, const std::vector<double>& x, double tol = kFeasTol);

double objective_value(const LinearProgram& lp, const std::vector<double>& x);

}  // namespace pipescale
