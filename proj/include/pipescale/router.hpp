#pragma once

#include <span>
#include <string>
#include <vector>

#include "pipescale/pipeline.hpp"

namespace pipescale {

struct WorkerState {
  int id = -1;
  VertexIndex vertex = -1;        // hosted variant; -1 when idle or swapping
  double capacity_qps = 0.0;      // q at the configured batch
  double incoming_qps = 0.0;      // assigned by the routing pass
  double profiled_exec_ms = 0.0;  // latency budget of the hosted variant
};

struct RouteEntry {
  int worker = -1;
  double probability = 0.0;
};

struct RoutingTables {
  // Frontend table over first-task workers. Probabilities sum to
  // served/demand; the residual mass is shed uniformly at random.
  std::vector<RouteEntry> frontend;
  double demand_qps = 0.0;
  double frontend_unrouted_qps = 0.0;

  // Per worker, one entry list per child edge of the worker's task (aligned
  // with PipelineGraph::child_edges order).
  std::vector<std::vector<std::vector<RouteEntry>>> worker_routes;

  // Per task: share of the task's total routed inflow per worker. Used to
  // re-dispatch queued requests when a worker swaps variants.
  std::vector<std::vector<RouteEntry>> task_dispatch;

  double total_unrouted_qps = 0.0;
  bool demand_exceeds_capacity = false;
};

struct BackupEntry {
  int worker = -1;
  double leftover_qps = 0.0;
  double profiled_exec_ms = 0.0;
  double accuracy = 0.0;
};

// Leftover-capacity workers per task, sorted by profiled execution time
// ascending; feeds opportunistic rerouting.
struct BackupTable {
  std::vector<std::vector<BackupEntry>> per_task;
};

struct RouterResult {
  RoutingTables tables;
  BackupTable backup;
  std::vector<WorkerState> workers;  // post-assignment incoming rates
};

// Greedy accuracy-first routing: tasks in topological order; each task's
// inflow saturates workers in non-increasing single-model accuracy order
// (ties by variant declaration order, then worker id); outgoing rates follow
// the multiplicative factors and branch ratios.
RouterResult most_accurate_first(const AugmentedGraph& ag, std::vector<WorkerState> workers,
                                 double demand_qps, std::span<const double> mult_factors);

std::string routes_to_json(const AugmentedGraph& ag, const RouterResult& result);

}  // namespace pipescale
