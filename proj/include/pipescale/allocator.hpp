#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pipescale/lp.hpp"
#include "pipescale/pipeline.hpp"

namespace pipescale {

class AllocError : public std::runtime_error {
 public:
  enum class Code { EmptyHistory, BadAlpha, BudgetNonPositive, TotallyInfeasible, BadConfig };

  AllocError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

struct ClusterConfig {
  int worker_count = 1;              // S
  double slo_ms = 0.0;               // L, end-to-end latency SLO
  double comm_latency_ms = 0.0;      // delta, per hop
  std::vector<int> allowed_batches;  // B, ascending

  void validate() const;  // throws BadConfig
};

struct DemandEstimate {
  double qps = 0.0;                  // D
  std::vector<double> mult_factor;   // r-hat per vertex; profiled values by default
};

DemandEstimate profiled_demand(const AugmentedGraph& ag, double qps);

enum class PlanMode { HardwareScaling, AccuracyScaling };

struct AllocationPlan {
  PlanMode mode = PlanMode::HardwareScaling;
  bool best_effort = false;               // coverage relaxed, overload shedding expected
  std::vector<int> instances;             // x, per vertex
  std::vector<int> max_batch;             // y, per vertex (0 where unhosted)
  std::vector<double> path_flow;          // c, per path
  std::vector<std::uint8_t> path_active;  // I, per path
  std::vector<double> latency_budget_ms;  // per vertex (0 where unhosted)
  double planned_accuracy = 0.0;          // sum c*A / sum c
  double served_fraction = 1.0;           // sum c / sum sink shares

  int workers_used() const;
};

// Raised when demand exceeds the cluster's capacity even at the lowest
// accuracy; carries the best-effort max-served plan so callers can shed.
class TotallyInfeasibleError : public AllocError {
 public:
  TotallyInfeasibleError(AllocationPlan plan, double max_feasible)
      : AllocError(Code::TotallyInfeasible, "demand exceeds cluster capacity at lowest accuracy"),
        best_effort(std::move(plan)),
        max_feasible_qps(max_feasible) {}

  AllocationPlan best_effort;
  double max_feasible_qps = 0.0;
};

// EWMA with newest-last convention: e_0 = h_0, e_t = alpha*h_t + (1-alpha)*e_{t-1}.
double estimate_demand(std::span<const double> history, double alpha);

// (L - hops*delta) / 2: communication time removed, then halved for queue wait.
double effective_path_budget(const ClusterConfig& cfg, int hops);  // throws BudgetNonPositive

// The linearized program: z(v,b) one-hot batch selection, w(v,b) per-batch
// instance counts, c(p) path flow, I(p) path activity. HardwareScaling pins
// non-top-accuracy variants to zero and minimizes workers; AccuracyScaling
// maximizes normalized flow-weighted accuracy.
LinearProgram build_milp(const AugmentedGraph& ag, const ClusterConfig& cfg,
                         const DemandEstimate& demand, PlanMode mode);

// Two-step allocation: hardware scaling first, accuracy scaling on
// infeasibility. Throws TotallyInfeasibleError when even the lowest-accuracy
// configuration cannot cover demand.
AllocationPlan allocate(const AugmentedGraph& ag, const ClusterConfig& cfg, const DemandEstimate& demand);

// Hardware scaling only; under overload returns the max-capacity top-accuracy
// plan and leaves shedding to the runtime.
AllocationPlan allocate_hardware_only(const AugmentedGraph& ag, const ClusterConfig& cfg,
                                      const DemandEstimate& demand);

// Pipeline-agnostic baseline: the cluster is split per task proportionally to
// per-task arrival load and each task scales accuracy independently.
AllocationPlan allocate_pipeline_agnostic(const AugmentedGraph& ag, const ClusterConfig& cfg,
                                          const DemandEstimate& demand);

std::vector<double> derive_latency_budgets(const AugmentedGraph& ag, const AllocationPlan& plan);

// Independent post-hoc audit of a plan against the raw profiles.
struct AuditResult {
  bool ok = true;
  std::vector<std::string> failures;
};
AuditResult audit_plan(const AugmentedGraph& ag, const ClusterConfig& cfg, const DemandEstimate& demand,
                       const AllocationPlan& plan);

}  // namespace pipescale
