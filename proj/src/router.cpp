#include "pipescale/router.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace pipescale {

namespace {

// Position of v within its task's declaration order.
int variant_position(const AugmentedGraph& ag, VertexIndex v) {
  const auto& verts = ag.task_variants[ag.profiles[v].task];
  return static_cast<int>(std::find(verts.begin(), verts.end(), v) - verts.begin());
}

}  // namespace

RouterResult most_accurate_first(const AugmentedGraph& ag, std::vector<WorkerState> workers,
                                 double demand_qps, std::span<const double> mult_factors) {
  const int n_tasks = ag.graph.task_count();
  const int n_workers = static_cast<int>(workers.size());

  for (auto& w : workers) w.incoming_qps = 0.0;
  std::vector<double> remaining(n_workers, 0.0);
  for (int i = 0; i < n_workers; ++i) remaining[i] = workers[i].vertex >= 0 ? workers[i].capacity_qps : 0.0;

  // Workers per task, in accuracy / declaration / id order.
  std::vector<std::vector<int>> by_task(n_tasks);
  for (int i = 0; i < n_workers; ++i) {
    if (workers[i].vertex >= 0 && workers[i].capacity_qps > 0.0)
      by_task[ag.profiles[workers[i].vertex].task].push_back(i);
  }
  for (auto& list : by_task) {
    std::sort(list.begin(), list.end(), [&](int a, int b) {
      const auto& wa = workers[a];
      const auto& wb = workers[b];
      const double acc_a = ag.profiles[wa.vertex].accuracy;
      const double acc_b = ag.profiles[wb.vertex].accuracy;
      if (acc_a != acc_b) return acc_a > acc_b;
      const int pa = variant_position(ag, wa.vertex);
      const int pb = variant_position(ag, wb.vertex);
      if (pa != pb) return pa < pb;
      return wa.id < wb.id;
    });
  }

  RouterResult out;
  auto& tables = out.tables;
  tables.demand_qps = demand_qps;
  tables.worker_routes.assign(n_workers, {});

  // Frontend: fill first-task workers until demand is exhausted.
  {
    double left = demand_qps;
    for (int wi : by_task[ag.graph.root]) {
      if (left <= 0.0) break;
      const double routed = std::min(left, remaining[wi]);
      if (routed <= 0.0) continue;
      tables.frontend.push_back({workers[wi].id, routed / demand_qps});
      workers[wi].incoming_qps += routed;
      remaining[wi] -= routed;
      left -= routed;
    }
    tables.frontend_unrouted_qps = std::max(0.0, left);
    tables.total_unrouted_qps += tables.frontend_unrouted_qps;
    tables.demand_exceeds_capacity = tables.frontend_unrouted_qps > 1e-9;
  }

  // Downstream tables, tasks in topological order, parent workers in the same
  // accuracy order used for saturation.
  for (TaskIndex t = 0; t < n_tasks; ++t) {
    for (int wi : by_task[t]) {
      auto& routes = tables.worker_routes[workers[wi].id];
      routes.assign(ag.graph.child_edges[t].size(), {});
      const double r = mult_factors.empty() ? ag.profiles[workers[wi].vertex].mult_factor
                                            : mult_factors[workers[wi].vertex];
      for (std::size_t slot = 0; slot < ag.graph.child_edges[t].size(); ++slot) {
        const auto& edge = ag.graph.edges[ag.graph.child_edges[t][slot]];
        double outgoing = workers[wi].incoming_qps * r * edge.branch_ratio;
        const double total_child_demand = outgoing;
        if (total_child_demand <= 0.0) continue;
        for (int ci : by_task[edge.child]) {
          if (outgoing <= 0.0) break;
          if (remaining[ci] <= 0.0) continue;
          const double routed = std::min(outgoing, remaining[ci]);
          routes[slot].push_back({workers[ci].id, routed / total_child_demand});
          outgoing -= routed;
          remaining[ci] -= routed;
          workers[ci].incoming_qps += routed;
        }
        tables.total_unrouted_qps += std::max(0.0, outgoing);
      }
    }
  }

  // Inflow shares per task (for swap-time re-dispatch).
  tables.task_dispatch.assign(n_tasks, {});
  for (TaskIndex t = 0; t < n_tasks; ++t) {
    double total = 0.0;
    for (int wi : by_task[t]) total += workers[wi].incoming_qps;
    if (total <= 0.0) continue;
    for (int wi : by_task[t]) {
      if (workers[wi].incoming_qps > 0.0)
        tables.task_dispatch[t].push_back({workers[wi].id, workers[wi].incoming_qps / total});
    }
  }

  // Leftover capacities, fastest first.
  out.backup.per_task.assign(n_tasks, {});
  for (TaskIndex t = 0; t < n_tasks; ++t) {
    for (int wi : by_task[t]) {
      if (remaining[wi] > 1e-9) {
        out.backup.per_task[t].push_back({workers[wi].id, remaining[wi], workers[wi].profiled_exec_ms,
                                          ag.profiles[workers[wi].vertex].accuracy});
      }
    }
    std::sort(out.backup.per_task[t].begin(), out.backup.per_task[t].end(),
              [](const BackupEntry& a, const BackupEntry& b) {
                if (a.profiled_exec_ms != b.profiled_exec_ms) return a.profiled_exec_ms < b.profiled_exec_ms;
                return a.worker < b.worker;
              });
  }

  out.workers = std::move(workers);
  return out;
}

std::string routes_to_json(const AugmentedGraph& ag, const RouterResult& result) {
  nlohmann::ordered_json j;
  j["demand_qps"] = result.tables.demand_qps;
  j["unrouted_qps"] = result.tables.total_unrouted_qps;

  auto entry_list = [&](const std::vector<RouteEntry>& entries) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& e : entries) arr.push_back({{"worker", e.worker}, {"probability", e.probability}});
    return arr;
  };

  j["frontend"] = entry_list(result.tables.frontend);

  nlohmann::ordered_json workers = nlohmann::ordered_json::array();
  for (const auto& w : result.workers) {
    nlohmann::ordered_json jw;
    jw["id"] = w.id;
    jw["variant"] = w.vertex >= 0 ? ag.profiles[w.vertex].id : "";
    jw["capacity_qps"] = w.capacity_qps;
    jw["incoming_qps"] = w.incoming_qps;
    if (w.id >= 0 && w.id < static_cast<int>(result.tables.worker_routes.size())) {
      nlohmann::ordered_json routes = nlohmann::ordered_json::array();
      const TaskIndex t = w.vertex >= 0 ? ag.profiles[w.vertex].task : -1;
      const auto& slots = result.tables.worker_routes[w.id];
      for (std::size_t slot = 0; slot < slots.size(); ++slot) {
        nlohmann::ordered_json jr;
        if (t >= 0) jr["child_task"] = ag.graph.task_ids[ag.graph.edges[ag.graph.child_edges[t][slot]].child];
        jr["entries"] = entry_list(slots[slot]);
        routes.push_back(std::move(jr));
      }
      jw["routes"] = std::move(routes);
    }
    workers.push_back(std::move(jw));
  }
  j["workers"] = std::move(workers);

  nlohmann::ordered_json backup = nlohmann::ordered_json::array();
  for (TaskIndex t = 0; t < ag.graph.task_count(); ++t) {
    nlohmann::ordered_json jt;
    jt["task"] = ag.graph.task_ids[t];
    nlohmann::ordered_json entries = nlohmann::ordered_json::array();
    for (const auto& e : result.backup.per_task[t]) {
      entries.push_back({{"worker", e.worker},
                         {"leftover_qps", e.leftover_qps},
                         {"profiled_exec_ms", e.profiled_exec_ms},
                         {"accuracy", e.accuracy}});
    }
    jt["entries"] = std::move(entries);
    backup.push_back(std::move(jt));
  }
  j["backup"] = std::move(backup);
  return j.dump(2);
}

}  // namespace pipescale
