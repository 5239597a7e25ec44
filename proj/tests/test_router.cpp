#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "pipescale/rng.hpp"
#include "pipescale/router.hpp"
#include "support/fixtures.hpp"
#include "support/router_brute.hpp"

using namespace pipescale;

namespace {

std::vector<WorkerState> tiny1_full_plan_workers(const AugmentedGraph& ag) {
  // One worker per variant, all at batch 4.
  std::vector<WorkerState> workers;
  const char* ids[] = {"a1", "a2", "b1", "b2"};
  int id = 0;
  for (const char* name : ids) {
    WorkerState w;
    w.id = id++;
    w.vertex = ag.vertex_index(name);
    w.capacity_qps = ag.profiles[w.vertex].qps_at(4);
    w.profiled_exec_ms = ag.profiles[w.vertex].batch_latency_ms(4);
    workers.push_back(w);
  }
  return workers;
}

double frontend_probability(const RouterResult& r, int worker) {
  for (const auto& e : r.tables.frontend)
    if (e.worker == worker) return e.probability;
  return 0.0;
}

}  // namespace

TEST_CASE("accuracy-first fill on tiny1 at 60 qps") {
  auto pipeline = fixtures::tiny1();
  const auto& ag = pipeline.aug;
  auto workers = tiny1_full_plan_workers(ag);
  const DemandEstimate est = profiled_demand(ag, 60.0);

  RouterResult r = most_accurate_first(ag, workers, 60.0, est.mult_factor);

  // a1 saturates at 20, a2 takes the remaining 40.
  CHECK(r.workers[0].incoming_qps == doctest::Approx(20.0));
  CHECK(r.workers[1].incoming_qps == doctest::Approx(40.0));
  CHECK(frontend_probability(r, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(frontend_probability(r, 1) == doctest::Approx(2.0 / 3.0));

  // a1's 40 outgoing fills b1 exactly; a2's 40 outgoing goes to b2.
  REQUIRE(r.tables.worker_routes[0].size() == 1);
  REQUIRE(r.tables.worker_routes[0][0].size() == 1);
  CHECK(r.tables.worker_routes[0][0][0].worker == 2);
  CHECK(r.tables.worker_routes[0][0][0].probability == doctest::Approx(1.0));
  REQUIRE(r.tables.worker_routes[1][0].size() == 1);
  CHECK(r.tables.worker_routes[1][0][0].worker == 3);
  CHECK(r.tables.worker_routes[1][0][0].probability == doctest::Approx(1.0));
  CHECK(r.tables.total_unrouted_qps == doctest::Approx(0.0));
}

TEST_CASE("leftover capacity lands in the backup table") {
  auto pipeline = fixtures::tiny1();
  const auto& ag = pipeline.aug;
  std::vector<WorkerState> workers;
  WorkerState a1;
  a1.id = 0;
  a1.vertex = ag.vertex_index("a1");
  a1.capacity_qps = ag.profiles[a1.vertex].qps_at(4);
  a1.profiled_exec_ms = ag.profiles[a1.vertex].batch_latency_ms(4);
  WorkerState b1;
  b1.id = 1;
  b1.vertex = ag.vertex_index("b1");
  b1.capacity_qps = ag.profiles[b1.vertex].qps_at(4);
  b1.profiled_exec_ms = ag.profiles[b1.vertex].batch_latency_ms(4);
  workers = {a1, b1};
  const DemandEstimate est = profiled_demand(ag, 10.0);

  RouterResult r = most_accurate_first(ag, workers, 10.0, est.mult_factor);
  CHECK(frontend_probability(r, 0) == doctest::Approx(1.0));
  REQUIRE(r.tables.worker_routes[0][0].size() == 1);
  CHECK(r.tables.worker_routes[0][0][0].probability == doctest::Approx(1.0));

  const TaskIndex task_b = ag.profiles[b1.vertex].task;
  REQUIRE(r.backup.per_task[task_b].size() == 1);
  CHECK(r.backup.per_task[task_b][0].worker == 1);
  CHECK(r.backup.per_task[task_b][0].leftover_qps == doctest::Approx(20.0));
  CHECK(r.backup.per_task[task_b][0].profiled_exec_ms == doctest::Approx(100.0));
}

TEST_CASE("zero demand: empty probabilities, full capacities in backup") {
  auto pipeline = fixtures::tiny1();
  const auto& ag = pipeline.aug;
  auto workers = tiny1_full_plan_workers(ag);
  const DemandEstimate est = profiled_demand(ag, 0.0);

  RouterResult r = most_accurate_first(ag, workers, 0.0, est.mult_factor);
  CHECK(r.tables.frontend.empty());
  for (const auto& w : r.workers) CHECK(w.incoming_qps == doctest::Approx(0.0));
  double backup_total = 0.0;
  for (const auto& task_entries : r.backup.per_task)
    for (const auto& e : task_entries) backup_total += e.leftover_qps;
  CHECK(backup_total == doctest::Approx(20.0 + 80.0 + 40.0 + 200.0));
}

TEST_CASE("demand beyond capacity is flagged, not silently dropped") {
  auto pipeline = fixtures::tiny1();
  const auto& ag = pipeline.aug;
  auto workers = tiny1_full_plan_workers(ag);
  const DemandEstimate est = profiled_demand(ag, 1000.0);

  RouterResult r = most_accurate_first(ag, workers, 1000.0, est.mult_factor);
  CHECK(r.tables.demand_exceeds_capacity);
  CHECK(r.tables.frontend_unrouted_qps == doctest::Approx(1000.0 - 100.0));
  double prob_sum = 0.0;
  for (const auto& e : r.tables.frontend) prob_sum += e.probability;
  CHECK(prob_sum == doctest::Approx(0.1));  // 100 of 1000 qps routable
}

TEST_CASE("mass balance and saturation order on random instances") {
  auto pipeline = fixtures::tiny1();
  const auto& ag = pipeline.aug;
  Rng rng(31337);

  for (int trial = 0; trial < 30; ++trial) {
    // Random worker multiset over the four variants.
    std::vector<WorkerState> workers;
    int id = 0;
    for (VertexIndex v = 0; v < ag.vertex_count(); ++v) {
      const int n = static_cast<int>(rng.pick_index(3));
      for (int i = 0; i < n; ++i) {
        WorkerState w;
        w.id = id++;
        w.vertex = v;
        w.capacity_qps = ag.profiles[v].qps_at(4);
        w.profiled_exec_ms = ag.profiles[v].batch_latency_ms(4);
        workers.push_back(w);
      }
    }
    if (workers.empty()) continue;
    const double demand = static_cast<double>(rng.pick_index(120));
    const DemandEstimate est = profiled_demand(ag, demand);
    RouterResult r = most_accurate_first(ag, workers, demand, est.mult_factor);

    // Frontend mass: min(D, first-task capacity).
    double cap_a = 0.0;
    for (const auto& w : r.workers)
      if (w.vertex >= 0 && ag.profiles[w.vertex].task == ag.graph.root) cap_a += w.capacity_qps;
    double routed_a = 0.0;
    for (const auto& w : r.workers)
      if (w.vertex >= 0 && ag.profiles[w.vertex].task == ag.graph.root) routed_a += w.incoming_qps;
    CHECK(routed_a == doctest::Approx(std::min(demand, cap_a)));

    // Per child task: inflow equals parent outgoing after factors, minus the
    // reported unrouted residual.
    double outgoing_b = 0.0, routed_b = 0.0;
    for (const auto& w : r.workers) {
      if (w.vertex < 0) continue;
      if (ag.profiles[w.vertex].task == ag.graph.root)
        outgoing_b += w.incoming_qps * est.mult_factor[w.vertex];
      else
        routed_b += w.incoming_qps;
    }
    CHECK(routed_b + r.tables.total_unrouted_qps - r.tables.frontend_unrouted_qps ==
          doctest::Approx(outgoing_b).epsilon(1e-9));

    // Saturation order: a worker receives flow only when every strictly more
    // accurate worker of its task is saturated.
    for (const auto& w : r.workers) {
      if (w.vertex < 0 || w.incoming_qps <= 1e-9) continue;
      for (const auto& other : r.workers) {
        if (other.vertex < 0 || other.id == w.id) continue;
        if (ag.profiles[other.vertex].task != ag.profiles[w.vertex].task) continue;
        if (ag.profiles[other.vertex].accuracy > ag.profiles[w.vertex].accuracy + 1e-12)
          CHECK(other.incoming_qps == doctest::Approx(other.capacity_qps));
      }
    }
  }
}

TEST_CASE("identical inputs produce identical tables") {
  auto pipeline = fixtures::tiny1();
  const auto& ag = pipeline.aug;
  auto workers = tiny1_full_plan_workers(ag);
  const DemandEstimate est = profiled_demand(ag, 60.0);
  RouterResult a = most_accurate_first(ag, workers, 60.0, est.mult_factor);
  RouterResult b = most_accurate_first(ag, workers, 60.0, est.mult_factor);
  CHECK(routes_to_json(ag, a) == routes_to_json(ag, b));
}

TEST_CASE("greedy split matches the brute-force optimum (uniform factors)") {
  Rng rng(271828);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const int na = 1 + static_cast<int>(rng.pick_index(3));
    const int nb = 1 + static_cast<int>(rng.pick_index(3));
    const double shared_r = 0.5 + static_cast<double>(rng.pick_index(4)) * 0.5;

    // Build a 2-task spec with one variant per worker and ample B capacity.
    std::string json = R"({"tasks": [{"id": "A", "variants": [)";
    std::vector<double> acc_a(na), acc_b(nb);
    std::vector<int> cap_a(na), cap_b(nb);
    for (int i = 0; i < na; ++i) {
      acc_a[i] = 1.0 - 0.15 * i;
      cap_a[i] = 1 + static_cast<int>(rng.pick_index(30));
      char buf[200];
      std::snprintf(buf, sizeof(buf),
                    R"({"id": "a%d", "accuracy": %.3f, "mult_factor": %.2f, "throughput": {"1": %d}})",
                    i, acc_a[i], shared_r, cap_a[i]);
      json += std::string(i ? "," : "") + buf;
    }
    json += R"(]}, {"id": "B", "variants": [)";
    for (int j = 0; j < nb; ++j) {
      acc_b[j] = 1.0 - 0.2 * j;
      cap_b[j] = 30 + static_cast<int>(rng.pick_index(120));
      char buf[200];
      std::snprintf(buf, sizeof(buf),
                    R"({"id": "b%d", "accuracy": %.3f, "mult_factor": 0.0, "throughput": {"1": %d}})",
                    j, acc_b[j], cap_b[j]);
      json += std::string(j ? "," : "") + buf;
    }
    json += R"(]}], "edges": [{"from": "A", "to": "B", "branch_ratio": 1.0}], "path_accuracy": [)";
    bool first = true;
    for (int i = 0; i < na; ++i)
      for (int j = 0; j < nb; ++j) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), R"({"path": ["a%d", "b%d"], "acc": %.6f})", i, j,
                      acc_a[i] * acc_b[j]);
        json += std::string(first ? "" : ",") + buf;
        first = false;
      }
    json += "]}";
    auto pipeline = load_pipeline_spec_text(json);
    const auto& ag = pipeline.aug;

    double total_b = 0.0;
    for (int j = 0; j < nb; ++j) total_b += cap_b[j];
    double total_a = 0.0;
    for (int i = 0; i < na; ++i) total_a += cap_a[i];
    if (total_b + 1e-9 < total_a * shared_r) continue;  // oracle needs no B shed

    std::vector<WorkerState> workers;
    int id = 0;
    for (VertexIndex v = 0; v < ag.vertex_count(); ++v) {
      WorkerState w;
      w.id = id++;
      w.vertex = v;
      w.capacity_qps = ag.profiles[v].qps_at(1);
      w.profiled_exec_ms = ag.profiles[v].batch_latency_ms(1);
      workers.push_back(w);
    }
    const double demand = static_cast<double>(1 + rng.pick_index(50));
    const DemandEstimate est = profiled_demand(ag, demand);

    RouterResult r = most_accurate_first(ag, workers, demand, est.mult_factor);
    const double greedy = router_brute::realized_accuracy_mass(ag, r, est.mult_factor);
    const double best = router_brute::best_accuracy_mass(ag, workers, demand, shared_r);
    REQUIRE(best >= 0.0);
    CHECK(greedy == doctest::Approx(best).epsilon(1e-6));
    ++checked;
  }
  CHECK(checked >= 30);
}
