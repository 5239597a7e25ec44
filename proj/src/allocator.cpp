#include "pipescale/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pipescale {

namespace {

[[noreturn]] void fail(AllocError::Code code, const std::string& msg) { throw AllocError(code, msg); }

// Variants within 1e-12 of a task's best accuracy count as top accuracy.
std::vector<bool> top_accuracy_mask(const AugmentedGraph& ag) {
  std::vector<bool> top(ag.vertex_count(), false);
  for (TaskIndex t = 0; t < ag.graph.task_count(); ++t) {
    double best = 0.0;
    for (VertexIndex v : ag.task_variants[t]) best = std::max(best, ag.profiles[v].accuracy);
    for (VertexIndex v : ag.task_variants[t])
      if (ag.profiles[v].accuracy >= best - 1e-12) top[v] = true;
  }
  return top;
}

VertexIndex top_variant(const AugmentedGraph& ag, TaskIndex t) {
  VertexIndex best = ag.task_variants[t].front();
  for (VertexIndex v : ag.task_variants[t])
    if (ag.profiles[v].accuracy > ag.profiles[best].accuracy + 1e-12) best = v;
  return best;
}

double budget_for_hops(const ClusterConfig& cfg, int hops) {
  return (cfg.slo_ms - static_cast<double>(hops) * cfg.comm_latency_ms) / 2.0;
}

enum class Objective { MinWorkers, MaxAccuracy, MaxServed, LexWorkersBatches };

struct BuildOptions {
  bool pin_top_only = false;
  bool coverage_equality = true;
  Objective objective = Objective::MinWorkers;
  double pinned_accuracy = -1.0;  // normalized objective value to hold, when >= 0
  double pinned_served = -1.0;
};

struct MilpBuild {
  LinearProgram lp;
  std::vector<int> batches;
  std::vector<std::vector<int>> z, w;  // [vertex][batch position]
  std::vector<int> flow, active;       // per path
};

MilpBuild build_internal(const AugmentedGraph& ag, const ClusterConfig& cfg, const DemandEstimate& demand,
                         const BuildOptions& opt) {
  MilpBuild b;
  b.batches = cfg.allowed_batches;
  const int n_batches = static_cast<int>(b.batches.size());
  const int s_total = cfg.worker_count;
  const double bmax = static_cast<double>(b.batches.back());
  const auto top = top_accuracy_mask(ag);
  const double norm = ag.total_sink_share();

  std::span<const double> rhat(demand.mult_factor);

  b.z.assign(ag.vertex_count(), std::vector<int>(n_batches, -1));
  b.w = b.z;
  for (VertexIndex v = 0; v < ag.vertex_count(); ++v) {
    const bool pinned = opt.pin_top_only && !top[v];
    for (int bi = 0; bi < n_batches; ++bi) {
      const std::string tag = ag.profiles[v].id + "_" + std::to_string(b.batches[bi]);
      b.z[v][bi] = b.lp.add_var("z_" + tag, 0.0, pinned ? 0.0 : 1.0, VarKind::Binary);
      b.w[v][bi] =
          b.lp.add_var("w_" + tag, 0.0, pinned ? 0.0 : static_cast<double>(s_total), VarKind::Integer);
    }
  }
  for (PathIndex p = 0; p < ag.path_count(); ++p) {
    b.flow.push_back(b.lp.add_var("c_p" + std::to_string(p), 0.0, 1.0, VarKind::Continuous));
    b.active.push_back(b.lp.add_var("I_p" + std::to_string(p), 0.0, 1.0, VarKind::Binary));
  }

  // One batch per variant; instances only at the selected batch.
  for (VertexIndex v = 0; v < ag.vertex_count(); ++v) {
    std::vector<std::pair<int, double>> one_hot;
    for (int bi = 0; bi < n_batches; ++bi) {
      one_hot.emplace_back(b.z[v][bi], 1.0);
      b.lp.add_constraint({{b.w[v][bi], 1.0}, {b.z[v][bi], -static_cast<double>(s_total)}},
                          Relation::LessEq, 0.0, "link_" + ag.profiles[v].id + "_" + std::to_string(b.batches[bi]));
    }
    b.lp.add_constraint(std::move(one_hot), Relation::LessEq, 1.0, "one_batch_" + ag.profiles[v].id);
  }

  // Capacity: arriving flow (after multipliers) within hosted throughput.
  for (VertexIndex v = 0; v < ag.vertex_count(); ++v) {
    std::vector<std::pair<int, double>> terms;
    for (PathIndex p : ag.paths_through[v]) {
      const double coeff = demand.qps * path_multiplier(ag, ag.paths[p], v, rhat);
      if (coeff != 0.0) terms.emplace_back(b.flow[p], coeff);
    }
    for (int bi = 0; bi < n_batches; ++bi)
      terms.emplace_back(b.w[v][bi], -ag.profiles[v].qps_at(b.batches[bi]));
    b.lp.add_constraint(std::move(terms), Relation::LessEq, 0.0, "cap_" + ag.profiles[v].id);
  }

  // Cluster size.
  {
    std::vector<std::pair<int, double>> terms;
    for (VertexIndex v = 0; v < ag.vertex_count(); ++v)
      for (int bi = 0; bi < n_batches; ++bi) terms.emplace_back(b.w[v][bi], 1.0);
    b.lp.add_constraint(std::move(terms), Relation::LessEq, static_cast<double>(s_total), "workers");
  }

  // Per-path latency with a path-local big-M (the path's worst-case latency
  // sum), switched off for inactive paths.
  for (PathIndex p = 0; p < ag.path_count(); ++p) {
    const int hops = static_cast<int>(ag.paths[p].vertices.size());
    const double budget = budget_for_hops(cfg, hops);
    if (budget <= 0.0) {
      b.lp.vars[b.active[p]].upper = 0.0;  // SLO infeasible for this path length
      continue;
    }
    double big_m = 0.0;
    std::vector<std::pair<int, double>> terms;
    for (VertexIndex v : ag.paths[p].vertices) {
      double worst = 0.0;
      for (int bi = 0; bi < n_batches; ++bi) {
        const double lat = ag.profiles[v].batch_latency_ms(b.batches[bi]);
        terms.emplace_back(b.z[v][bi], lat);
        worst = std::max(worst, lat);
      }
      big_m += worst;
    }
    terms.emplace_back(b.active[p], big_m);
    b.lp.add_constraint(std::move(terms), Relation::LessEq, budget + big_m, "lat_p" + std::to_string(p));
  }

  // Flow only on active paths.
  for (PathIndex p = 0; p < ag.path_count(); ++p)
    b.lp.add_constraint({{b.flow[p], 1.0}, {b.active[p], -1.0}}, Relation::LessEq, 0.0,
                        "gate_p" + std::to_string(p));

  // Coverage: every sink's branch-ratio share of the demand.
  for (TaskIndex s : ag.graph.sinks()) {
    std::vector<std::pair<int, double>> terms;
    for (PathIndex p = 0; p < ag.path_count(); ++p)
      if (ag.paths[p].sink == s) terms.emplace_back(b.flow[p], 1.0);
    b.lp.add_constraint(std::move(terms), opt.coverage_equality ? Relation::Equal : Relation::LessEq,
                        ag.sink_share(s), "cover_" + ag.graph.task_ids[s]);
  }

  if (opt.pinned_accuracy >= 0.0) {
    std::vector<std::pair<int, double>> terms;
    for (PathIndex p = 0; p < ag.path_count(); ++p)
      terms.emplace_back(b.flow[p], ag.paths[p].profiled_accuracy / norm);
    b.lp.add_constraint(std::move(terms), Relation::GreaterEq, opt.pinned_accuracy - 1e-9, "pin_accuracy");
  }
  if (opt.pinned_served >= 0.0) {
    std::vector<std::pair<int, double>> terms;
    for (PathIndex p = 0; p < ag.path_count(); ++p) terms.emplace_back(b.flow[p], 1.0 / norm);
    b.lp.add_constraint(std::move(terms), Relation::GreaterEq, opt.pinned_served - 1e-9, "pin_served");
  }

  switch (opt.objective) {
    case Objective::MinWorkers:
      b.lp.sense = Sense::Minimize;
      for (VertexIndex v = 0; v < ag.vertex_count(); ++v)
        for (int bi = 0; bi < n_batches; ++bi) b.lp.set_objective_coeff(b.w[v][bi], 1.0);
      break;
    case Objective::LexWorkersBatches:
      // Exact lexicographic min-workers-then-max-batches: worker counts are
      // integral, and the batch bonus never reaches S+1.
      b.lp.sense = Sense::Minimize;
      for (VertexIndex v = 0; v < ag.vertex_count(); ++v)
        for (int bi = 0; bi < n_batches; ++bi)
          b.lp.set_objective_coeff(
              b.w[v][bi], static_cast<double>(s_total + 1) - static_cast<double>(b.batches[bi]) / bmax);
      break;
    case Objective::MaxAccuracy:
      b.lp.sense = Sense::Maximize;
      for (PathIndex p = 0; p < ag.path_count(); ++p)
        b.lp.set_objective_coeff(b.flow[p], ag.paths[p].profiled_accuracy / norm);
      break;
    case Objective::MaxServed:
      b.lp.sense = Sense::Maximize;
      for (PathIndex p = 0; p < ag.path_count(); ++p) b.lp.set_objective_coeff(b.flow[p], 1.0 / norm);
      break;
  }
  return b;
}

AllocationPlan decode_plan(const AugmentedGraph& ag, const MilpBuild& b, const Solution& sol, PlanMode mode,
                           bool best_effort) {
  AllocationPlan plan;
  plan.mode = mode;
  plan.best_effort = best_effort;
  plan.instances.assign(ag.vertex_count(), 0);
  plan.max_batch.assign(ag.vertex_count(), 0);
  plan.latency_budget_ms.assign(ag.vertex_count(), 0.0);
  plan.path_flow.assign(ag.path_count(), 0.0);
  plan.path_active.assign(ag.path_count(), 0);

  for (VertexIndex v = 0; v < ag.vertex_count(); ++v) {
    for (std::size_t bi = 0; bi < b.batches.size(); ++bi) {
      const int count = static_cast<int>(std::llround(sol.values[b.w[v][bi]]));
      if (count > 0) {
        plan.instances[v] += count;
        plan.max_batch[v] = b.batches[bi];
      }
    }
    if (plan.instances[v] > 0)
      plan.latency_budget_ms[v] = ag.profiles[v].batch_latency_ms(plan.max_batch[v]);
  }

  double flow_sum = 0.0, acc_sum = 0.0;
  for (PathIndex p = 0; p < ag.path_count(); ++p) {
    double c = std::clamp(sol.values[b.flow[p]], 0.0, 1.0);
    if (c < 1e-9) c = 0.0;
    plan.path_flow[p] = c;
    plan.path_active[p] = c > 0.0 || sol.values[b.active[p]] > 0.5;
    flow_sum += c;
    acc_sum += c * ag.paths[p].profiled_accuracy;
  }
  plan.planned_accuracy = flow_sum > 1e-12 ? acc_sum / flow_sum : 0.0;
  plan.served_fraction = ag.total_sink_share() > 0.0 ? flow_sum / ag.total_sink_share() : 0.0;
  return plan;
}

// Accuracy scaling as a solve ladder: best accuracy under full coverage, or —
// when even the lowest accuracy cannot cover demand — max served fraction,
// then best accuracy, then fewest workers. Refinement tiers pin the previous
// tier's objective; a tier that fails to re-solve (pinning can push a problem
// onto the numerical edge) falls back to the last solved tier.
AllocationPlan run_accuracy_ladder(const AugmentedGraph& ag, const ClusterConfig& cfg,
                                   const DemandEstimate& demand, bool pin_top) {
  BuildOptions acc;
  acc.pin_top_only = pin_top;
  acc.objective = Objective::MaxAccuracy;
  MilpBuild b1 = build_internal(ag, cfg, demand, acc);
  Solution s1 = solve_milp(b1.lp);
  if (s1.status == SolveStatus::Optimal) {
    BuildOptions tie = acc;
    tie.objective = Objective::LexWorkersBatches;
    tie.pinned_accuracy = s1.objective;
    MilpBuild b2 = build_internal(ag, cfg, demand, tie);
    Solution s2 = solve_milp(b2.lp);
    if (s2.status == SolveStatus::Optimal) return decode_plan(ag, b2, s2, PlanMode::AccuracyScaling, false);
    return decode_plan(ag, b1, s1, PlanMode::AccuracyScaling, false);
  }

  BuildOptions shed;
  shed.pin_top_only = pin_top;
  shed.coverage_equality = false;
  shed.objective = Objective::MaxServed;
  MilpBuild b2 = build_internal(ag, cfg, demand, shed);
  Solution s2 = solve_milp(b2.lp);
  if (s2.status != SolveStatus::Optimal) {
    // Relaxed coverage admits the all-zero plan; reaching this means the
    // instance is numerically degenerate. Serve nothing.
    AllocationPlan empty;
    empty.mode = PlanMode::AccuracyScaling;
    empty.best_effort = true;
    empty.instances.assign(ag.vertex_count(), 0);
    empty.max_batch.assign(ag.vertex_count(), 0);
    empty.latency_budget_ms.assign(ag.vertex_count(), 0.0);
    empty.path_flow.assign(ag.path_count(), 0.0);
    empty.path_active.assign(ag.path_count(), 0);
    empty.served_fraction = 0.0;
    return empty;
  }
  const MilpBuild* best_build = &b2;
  const Solution* best_sol = &s2;

  BuildOptions shed_acc = shed;
  shed_acc.objective = Objective::MaxAccuracy;
  shed_acc.pinned_served = s2.objective;
  MilpBuild b3 = build_internal(ag, cfg, demand, shed_acc);
  Solution s3 = solve_milp(b3.lp);
  if (s3.status == SolveStatus::Optimal) {
    best_build = &b3;
    best_sol = &s3;

    BuildOptions shed_tie = shed_acc;
    shed_tie.objective = Objective::LexWorkersBatches;
    shed_tie.pinned_accuracy = s3.objective;
    MilpBuild b4 = build_internal(ag, cfg, demand, shed_tie);
    Solution s4 = solve_milp(b4.lp);
    if (s4.status == SolveStatus::Optimal)
      return decode_plan(ag, b4, s4, PlanMode::AccuracyScaling, true);
  }
  return decode_plan(ag, *best_build, *best_sol, PlanMode::AccuracyScaling, true);
}

Solution solve_hardware_lex(const AugmentedGraph& ag, const ClusterConfig& cfg,
                            const DemandEstimate& demand, MilpBuild& out) {
  BuildOptions hw;
  hw.pin_top_only = true;
  hw.objective = Objective::LexWorkersBatches;
  out = build_internal(ag, cfg, demand, hw);
  return solve_milp(out.lp);
}

void check_inputs(const AugmentedGraph& ag, const ClusterConfig& cfg, const DemandEstimate& demand) {
  cfg.validate();
  if (demand.qps < 0.0) fail(AllocError::Code::BadConfig, "negative demand");
  if (demand.mult_factor.size() != static_cast<std::size_t>(ag.vertex_count()))
    fail(AllocError::Code::BadConfig, "mult_factor estimate size mismatch");
  for (VertexIndex v = 0; v < ag.vertex_count(); ++v)
    for (int batch : cfg.allowed_batches) ag.profiles[v].qps_at(batch);  // BatchNotProfiled
}

}  // namespace

void ClusterConfig::validate() const {
  if (worker_count < 1) fail(AllocError::Code::BadConfig, "worker_count must be >= 1");
  if (!(slo_ms > 0.0)) fail(AllocError::Code::BadConfig, "slo_ms must be positive");
  if (comm_latency_ms < 0.0) fail(AllocError::Code::BadConfig, "comm_latency_ms must be >= 0");
  if (allowed_batches.empty()) fail(AllocError::Code::BadConfig, "allowed_batches must be non-empty");
  for (std::size_t i = 0; i < allowed_batches.size(); ++i) {
    if (allowed_batches[i] < 1 || (i > 0 && allowed_batches[i] <= allowed_batches[i - 1]))
      fail(AllocError::Code::BadConfig, "allowed_batches must be ascending positive");
  }
}

DemandEstimate profiled_demand(const AugmentedGraph& ag, double qps) {
  DemandEstimate d;
  d.qps = qps;
  d.mult_factor.resize(ag.vertex_count());
  for (VertexIndex v = 0; v < ag.vertex_count(); ++v) d.mult_factor[v] = ag.profiles[v].mult_factor;
  return d;
}

int AllocationPlan::workers_used() const { return std::accumulate(instances.begin(), instances.end(), 0); }

double estimate_demand(std::span<const double> history, double alpha) {
  if (history.empty()) fail(AllocError::Code::EmptyHistory, "demand history is empty");
  if (!(alpha > 0.0) || alpha > 1.0) fail(AllocError::Code::BadAlpha, "alpha must be in (0,1]");
  double e = history[0];
  for (std::size_t i = 1; i < history.size(); ++i) e = alpha * history[i] + (1.0 - alpha) * e;
  return e;
}

double effective_path_budget(const ClusterConfig& cfg, int hops) {
  if (hops < 1) fail(AllocError::Code::BadConfig, "hops must be >= 1");
  const double budget = budget_for_hops(cfg, hops);
  if (budget <= 0.0)
    fail(AllocError::Code::BudgetNonPositive,
         "SLO " + std::to_string(cfg.slo_ms) + " ms infeasible for a " + std::to_string(hops) + "-task path");
  return budget;
}

LinearProgram build_milp(const AugmentedGraph& ag, const ClusterConfig& cfg, const DemandEstimate& demand,
                         PlanMode mode) {
  check_inputs(ag, cfg, demand);
  BuildOptions opt;
  opt.pin_top_only = mode == PlanMode::HardwareScaling;
  opt.objective = mode == PlanMode::HardwareScaling ? Objective::MinWorkers : Objective::MaxAccuracy;
  return build_internal(ag, cfg, demand, opt).lp;
}

AllocationPlan allocate(const AugmentedGraph& ag, const ClusterConfig& cfg, const DemandEstimate& demand) {
  check_inputs(ag, cfg, demand);

  MilpBuild hw;
  Solution hw_sol = solve_hardware_lex(ag, cfg, demand, hw);
  if (hw_sol.status == SolveStatus::Optimal)
    return decode_plan(ag, hw, hw_sol, PlanMode::HardwareScaling, false);

  AllocationPlan plan = run_accuracy_ladder(ag, cfg, demand, false);
  if (!plan.best_effort) return plan;
  const double max_feasible = demand.qps * plan.served_fraction;
  throw TotallyInfeasibleError(std::move(plan), max_feasible);
}

AllocationPlan allocate_hardware_only(const AugmentedGraph& ag, const ClusterConfig& cfg,
                                      const DemandEstimate& demand) {
  check_inputs(ag, cfg, demand);

  MilpBuild hw;
  Solution hw_sol = solve_hardware_lex(ag, cfg, demand, hw);
  if (hw_sol.status == SolveStatus::Optimal)
    return decode_plan(ag, hw, hw_sol, PlanMode::HardwareScaling, false);

  AllocationPlan plan = run_accuracy_ladder(ag, cfg, demand, true);
  plan.mode = PlanMode::HardwareScaling;  // top-accuracy variants only; runtime sheds the excess
  return plan;
}

AllocationPlan allocate_pipeline_agnostic(const AugmentedGraph& ag, const ClusterConfig& cfg,
                                          const DemandEstimate& demand) {
  check_inputs(ag, cfg, demand);
  const int n_tasks = ag.graph.task_count();

  // Per-task arrival load under the top-accuracy multiplicative factors.
  std::vector<double> load(n_tasks, 0.0);
  load[ag.graph.root] = demand.qps;
  for (TaskIndex t = 0; t < n_tasks; ++t) {
    const double r_top = demand.mult_factor[top_variant(ag, t)];
    for (int e : ag.graph.child_edges[t])
      load[ag.graph.edges[e].child] = load[t] * r_top * ag.graph.edges[e].branch_ratio;
  }

  // Largest-remainder split of the cluster, at least one worker per task when
  // possible.
  std::vector<int> share(n_tasks, 0);
  {
    double total = std::accumulate(load.begin(), load.end(), 0.0);
    int to_assign = cfg.worker_count;
    if (cfg.worker_count >= n_tasks) {
      share.assign(n_tasks, 1);
      to_assign -= n_tasks;
    }
    std::vector<double> quota(n_tasks);
    for (TaskIndex t = 0; t < n_tasks; ++t)
      quota[t] = total > 0.0 ? to_assign * load[t] / total
                             : static_cast<double>(to_assign) / n_tasks;
    std::vector<std::pair<double, int>> rem;
    int assigned = 0;
    for (TaskIndex t = 0; t < n_tasks; ++t) {
      const int base = static_cast<int>(std::floor(quota[t] + 1e-9));
      share[t] += base;
      assigned += base;
      rem.emplace_back(quota[t] - base, t);
    }
    std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; i < rem.size() && assigned < to_assign; ++i, ++assigned) ++share[rem[i].second];
  }

  AllocationPlan plan;
  plan.mode = PlanMode::AccuracyScaling;
  plan.instances.assign(ag.vertex_count(), 0);
  plan.max_batch.assign(ag.vertex_count(), 0);
  plan.latency_budget_ms.assign(ag.vertex_count(), 0.0);
  plan.path_flow.assign(ag.path_count(), 0.0);
  plan.path_active.assign(ag.path_count(), 0);

  // Per-task accuracy scaling on the task's own share of the cluster, with the
  // path budget split evenly across the path's tasks.
  std::vector<std::vector<double>> variant_share(n_tasks);
  for (TaskIndex t = 0; t < n_tasks; ++t) {
    const auto& verts = ag.task_variants[t];
    variant_share[t].assign(verts.size(), 0.0);

    const int hops = ag.graph.max_hops_through(t);
    const double budget = budget_for_hops(cfg, hops) / hops;
    bool servable = budget > 0.0 && share[t] > 0;

    if (servable) {
      std::vector<TaskDecl> decl{{ag.graph.task_ids[t]}};
      PipelineGraph sub_graph = build_pipeline(decl, {});
      std::vector<VariantProfile> sub_profiles;
      for (VertexIndex v : verts) {
        VariantProfile p = ag.profiles[v];
        p.task = 0;
        sub_profiles.push_back(std::move(p));
      }
      AugmentedGraph sub = build_augmented_graph(sub_graph, std::move(sub_profiles));
      for (auto& path : sub.paths) path.profiled_accuracy = sub.profiles[path.vertices[0]].accuracy;

      ClusterConfig sub_cfg;
      sub_cfg.worker_count = share[t];
      sub_cfg.slo_ms = 2.0 * budget + cfg.comm_latency_ms;
      sub_cfg.comm_latency_ms = cfg.comm_latency_ms;
      sub_cfg.allowed_batches = cfg.allowed_batches;

      DemandEstimate sub_demand;
      sub_demand.qps = load[t];
      for (VertexIndex v : verts) sub_demand.mult_factor.push_back(demand.mult_factor[v]);

      AllocationPlan sub_plan = run_accuracy_ladder(sub, sub_cfg, sub_demand, false);
      for (std::size_t i = 0; i < verts.size(); ++i) {
        plan.instances[verts[i]] = sub_plan.instances[i];
        plan.max_batch[verts[i]] = sub_plan.max_batch[i];
        plan.latency_budget_ms[verts[i]] = sub_plan.latency_budget_ms[i];
        variant_share[t][i] = sub_plan.path_flow[i];
      }
    }

    // No hardware scaling: leftover workers become replicas, preferring the
    // most accurate hosted variant.
    int used = 0;
    for (VertexIndex v : verts) used += plan.instances[v];
    if (int leftover = share[t] - used; leftover > 0) {
      VertexIndex host = -1;
      for (VertexIndex v : verts)
        if (plan.instances[v] > 0 && (host < 0 || ag.profiles[v].accuracy > ag.profiles[host].accuracy))
          host = v;
      if (host < 0) {
        host = top_variant(ag, t);
        int batch = cfg.allowed_batches.front();
        for (int cand : cfg.allowed_batches)
          if (ag.profiles[host].batch_latency_ms(cand) <= budget) batch = cand;
        plan.max_batch[host] = batch;
        plan.latency_budget_ms[host] = ag.profiles[host].batch_latency_ms(batch);
      }
      plan.instances[host] += leftover;
    }
  }

  // Independent per-task mixing: a path's flow is the product of its variants'
  // per-task shares.
  double flow_sum = 0.0, acc_sum = 0.0;
  for (PathIndex p = 0; p < ag.path_count(); ++p) {
    double c = ag.sink_share(ag.paths[p].sink);
    for (VertexIndex v : ag.paths[p].vertices) {
      const TaskIndex t = ag.profiles[v].task;
      const auto& verts = ag.task_variants[t];
      const auto pos = std::find(verts.begin(), verts.end(), v) - verts.begin();
      c *= variant_share[t][pos];
    }
    if (c < 1e-12) c = 0.0;
    plan.path_flow[p] = c;
    plan.path_active[p] = c > 0.0;
    flow_sum += c;
    acc_sum += c * ag.paths[p].profiled_accuracy;
  }
  plan.planned_accuracy = flow_sum > 1e-12 ? acc_sum / flow_sum : 0.0;
  plan.served_fraction = ag.total_sink_share() > 0.0 ? flow_sum / ag.total_sink_share() : 0.0;
  plan.best_effort = plan.served_fraction < 1.0 - 1e-9;
  return plan;
}

std::vector<double> derive_latency_budgets(const AugmentedGraph& ag, const AllocationPlan& plan) {
  std::vector<double> budgets(ag.vertex_count(), 0.0);
  for (VertexIndex v = 0; v < ag.vertex_count(); ++v)
    if (plan.instances[v] > 0) budgets[v] = ag.profiles[v].batch_latency_ms(plan.max_batch[v]);
  return budgets;
}

AuditResult audit_plan(const AugmentedGraph& ag, const ClusterConfig& cfg, const DemandEstimate& demand,
                       const AllocationPlan& plan) {
  AuditResult res;
  auto flag = [&](const std::string& msg) {
    res.ok = false;
    res.failures.push_back(msg);
  };

  if (plan.instances.size() != static_cast<std::size_t>(ag.vertex_count()) ||
      plan.path_flow.size() != static_cast<std::size_t>(ag.path_count())) {
    flag("plan shape does not match the graph");
    return res;
  }

  if (plan.workers_used() > cfg.worker_count) flag("worker budget exceeded");

  const auto top = top_accuracy_mask(ag);
  std::span<const double> rhat(demand.mult_factor);
  for (VertexIndex v = 0; v < ag.vertex_count(); ++v) {
    const int x = plan.instances[v];
    if (x < 0) flag("negative instance count at " + ag.profiles[v].id);
    if (x > 0 &&
        std::find(cfg.allowed_batches.begin(), cfg.allowed_batches.end(), plan.max_batch[v]) ==
            cfg.allowed_batches.end())
      flag("batch size not allowed at " + ag.profiles[v].id);
    if (plan.mode == PlanMode::HardwareScaling && x > 0 && !top[v])
      flag("hardware-scaling plan hosts non-top variant " + ag.profiles[v].id);

    double arriving = 0.0;
    for (PathIndex p : ag.paths_through[v])
      arriving += demand.qps * plan.path_flow[p] * path_multiplier(ag, ag.paths[p], v, rhat);
    const double capacity = x > 0 ? x * ag.profiles[v].qps_at(plan.max_batch[v]) : 0.0;
    if (arriving > capacity + 1e-6 * std::max(1.0, arriving))
      flag("capacity violated at " + ag.profiles[v].id);
  }

  for (PathIndex p = 0; p < ag.path_count(); ++p) {
    if (plan.path_flow[p] < -1e-12 || plan.path_flow[p] > 1.0 + 1e-9) flag("path flow outside [0,1]");
    if (plan.path_flow[p] > 0.0 && !plan.path_active[p]) flag("positive flow on inactive path");
    if (!plan.path_active[p]) continue;
    const int hops = static_cast<int>(ag.paths[p].vertices.size());
    const double budget = budget_for_hops(cfg, hops);
    double lat = 0.0;
    for (VertexIndex v : ag.paths[p].vertices)
      if (plan.instances[v] > 0) lat += ag.profiles[v].batch_latency_ms(plan.max_batch[v]);
    if (lat > budget + 1e-6) flag("latency budget violated on path " + std::to_string(p));
  }

  for (TaskIndex s : ag.graph.sinks()) {
    double covered = 0.0;
    for (PathIndex p = 0; p < ag.path_count(); ++p)
      if (ag.paths[p].sink == s) covered += plan.path_flow[p];
    const double g = ag.sink_share(s);
    if (plan.best_effort) {
      if (covered > g + 1e-6) flag("coverage above sink share at " + ag.graph.task_ids[s]);
    } else if (std::abs(covered - g) > 1e-6) {
      flag("coverage mismatch at sink " + ag.graph.task_ids[s]);
    }
  }
  return res;
}

}  // namespace pipescale
