#include "pipescale/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <queue>

namespace pipescale {

DropDecision apply_drop_policy(DropPolicy policy, double time_spent_ms, double budget_ms,
                               bool at_last_task, double remaining_slack_ms, double expected_exec_ms) {
  switch (policy) {
    case DropPolicy::None:
      return {DropDecision::Action::Continue, 0.0};
    case DropPolicy::LastTask:
      if (at_last_task && remaining_slack_ms < expected_exec_ms) return {DropDecision::Action::Drop, 0.0};
      return {DropDecision::Action::Continue, 0.0};
    case DropPolicy::PerTask:
      if (time_spent_ms > budget_ms) return {DropDecision::Action::Drop, 0.0};
      return {DropDecision::Action::Continue, 0.0};
    case DropPolicy::OpportunisticRerouting:
      if (time_spent_ms > budget_ms)
        return {DropDecision::Action::TryReroute, time_spent_ms - budget_ms};
      return {DropDecision::Action::Continue, 0.0};
  }
  return {DropDecision::Action::Continue, 0.0};
}

RerouteOutcome opportunistic_reroute(double deficit_ms, double nominal_exec_ms,
                                     std::vector<BackupEntry>& candidates, Rng& tie_break) {
  const double limit = nominal_exec_ms - deficit_ms;
  double best_acc = -1.0;
  std::vector<std::size_t> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& e = candidates[i];
    if (e.leftover_qps <= 0.0 || e.profiled_exec_ms > limit + 1e-9) continue;
    if (e.accuracy > best_acc + 1e-12) {
      best_acc = e.accuracy;
      best.assign(1, i);
    } else if (e.accuracy > best_acc - 1e-12) {
      best.push_back(i);
    }
  }
  if (best.empty()) return {false, -1};
  const std::size_t pick = best[tie_break.pick_index(best.size())];
  candidates[pick].leftover_qps -= 1.0;
  return {true, candidates[pick].worker};
}

int sample_fanout(double rate, Rng& rng, FanoutMode mode) {
  if (rate <= 0.0) return 0;
  if (mode == FanoutMode::Poisson) return rng.poisson(rate);
  const double base = std::floor(rate);
  const double frac = rate - base;
  return static_cast<int>(base) + (rng.bernoulli(frac) ? 1 : 0);
}

void SimConfig::validate() const {
  if (pipeline == nullptr) throw ConfigError("no pipeline attached to the simulation config");
  cluster.validate();
  if (controller_period_ms <= 0.0 || router_period_ms <= 0.0 || heartbeat_period_ms <= 0.0)
    throw ConfigError("periods must be positive");
  if (swap_delay_ms < 0.0) throw ConfigError("swap_delay_ms must be >= 0");
  if (!(ewma_alpha > 0.0) || ewma_alpha > 1.0) throw ConfigError("ewma_alpha must be in (0,1]");
  if (realloc_threshold <= 0.0) throw ConfigError("realloc_threshold must be positive");
  const double horizon = horizon_ms < 0.0 ? arrivals.horizon_ms : horizon_ms;
  if (!(horizon > 0.0)) throw ConfigError("horizon must be positive");
}

namespace {

enum class EvKind { Arrival, Enqueue, Wake, Controller, RouterRefresh, Heartbeat, SwapDone };

struct Event {
  double t = 0.0;
  std::int64_t seq = 0;
  EvKind kind = EvKind::Arrival;
  std::int64_t a = -1;  // arrival index / transfer index / worker id
  std::int64_t b = -1;  // swap epoch
};

struct EventLater {
  bool operator()(const Event& x, const Event& y) const {
    if (x.t != y.t) return x.t > y.t;
    return x.seq > y.seq;
  }
};

struct SimRequest {
  std::int64_t root = -1;
  TaskIndex task = 0;
  std::vector<VertexIndex> path;  // realized variants at upstream tasks
  double enqueue_ms = 0.0;
};

struct Transfer {
  SimRequest req;
  int worker = -1;
};

struct SimWorker {
  int id = -1;
  VertexIndex vertex = -1;
  int max_batch = 0;
  double capacity_qps = 0.0;
  double exec_budget_ms = 0.0;

  bool swapping = false;
  bool has_pending = false;
  VertexIndex pending_vertex = -1;
  int pending_batch = 0;
  std::int64_t swap_epoch = 0;

  bool busy = false;
  std::deque<SimRequest> queue;
  std::vector<SimRequest> executing;
  VertexIndex executing_vertex = -1;
  double busy_ms = 0.0;
};

struct RootRec {
  double arrival_ms = 0.0;
  double deadline_ms = 0.0;
  int outstanding = 0;
  bool any_drop = false;
  double acc_sum = 0.0;
  int acc_n = 0;
  bool resolved = false;
  double resolve_ms = -1.0;
};

class Simulation {
 public:
  explicit Simulation(const SimConfig& cfg)
      : cfg_(cfg), ag_(*cfg.pipeline), rng_(cfg.seed),
        horizon_(cfg.horizon_ms < 0.0 ? cfg.arrivals.horizon_ms : cfg.horizon_ms) {}

  SimArtifacts run();

 private:
  void schedule(double t, EvKind kind, std::int64_t a = -1, std::int64_t b = -1) {
    queue_.push({t, next_seq_++, kind, a, b});
  }

  double current_estimate(double now) const;
  void run_controller(double now);
  void apply_plan(const AllocationPlan& plan, double now);
  void refresh_tables(double now);
  void begin_swap(SimWorker& w, double now);        // marks the swap; no redispatch
  void start_pending_swap(SimWorker& w, double now);  // swap + refresh + redispatch
  void redispatch_queue(SimWorker& w, double now);

  void on_arrival(std::int64_t index, double now);
  void on_enqueue(std::int64_t transfer, double now);
  void on_wake(std::int64_t worker, double now);
  void try_start_batch(SimWorker& w, double now);
  void process_completion(SimRequest& req, SimWorker& w, double now);
  void spawn_children(const SimRequest& req, VertexIndex vertex, SimWorker& w, double now);

  void shed_request(const SimRequest& req, double now);
  void drop_request(const SimRequest& req, double now);
  void close_branch(std::int64_t root, double now);
  int sample_route(const std::vector<RouteEntry>& entries, double& u) const;
  int redispatch_target(TaskIndex task);
  bool worker_routable(int id, TaskIndex task) const;

  const SimConfig& cfg_;
  const AugmentedGraph& ag_;
  RngStreams rng_;
  double horizon_;

  std::priority_queue<Event, std::vector<Event>, EventLater> queue_;
  std::int64_t next_seq_ = 0;
  std::vector<Transfer> transfers_;

  std::vector<SimWorker> workers_;
  std::vector<RootRec> roots_;
  std::vector<double> rhat_;
  std::vector<std::int64_t> arrivals_per_sec_;
  std::vector<double> obs_in_, obs_out_;  // heartbeat accumulators per vertex
  std::map<std::vector<VertexIndex>, PathIndex> path_lookup_;

  AllocationPlan plan_;
  bool have_plan_ = false;
  double planned_demand_ = 0.0;
  double allowance_scale_ = 1.0;
  double initial_estimate_ = 0.0;
  RouterResult router_;
  bool have_tables_ = false;

  RunLog log_;
};

double Simulation::current_estimate(double now) const {
  const auto full_seconds =
      std::min<std::int64_t>(static_cast<std::int64_t>(now / 1000.0), arrivals_per_sec_.size());
  if (full_seconds <= 0) return initial_estimate_;
  double e = static_cast<double>(arrivals_per_sec_[0]);
  for (std::int64_t s = 1; s < full_seconds; ++s)
    e = cfg_.ewma_alpha * static_cast<double>(arrivals_per_sec_[s]) + (1.0 - cfg_.ewma_alpha) * e;
  return e;
}

void Simulation::run_controller(double now) {
  const double demand_qps = current_estimate(now);
  DemandEstimate demand{demand_qps, rhat_};

  AllocationPlan plan;
  switch (cfg_.policy_mode) {
    case PolicyMode::Loki:
      try {
        plan = allocate(ag_, cfg_.cluster, demand);
      } catch (const TotallyInfeasibleError& e) {
        plan = e.best_effort;  // serve what fits, shed the rest
      }
      break;
    case PolicyMode::HardwareOnly:
      plan = allocate_hardware_only(ag_, cfg_.cluster, demand);
      break;
    case PolicyMode::PipelineAgnostic:
      plan = allocate_pipeline_agnostic(ag_, cfg_.cluster, demand);
      break;
  }
  planned_demand_ = demand_qps;
  apply_plan(plan, now);
}

void Simulation::apply_plan(const AllocationPlan& plan, double now) {
  const bool first = !have_plan_;
  plan_ = plan;
  have_plan_ = true;
  log_.plan_segments.push_back({now, plan.workers_used(), plan.mode});

  // Early-dropping allowances must partition the whole SLO: stretch the
  // per-task shares so they sum to the SLO on the tightest active path.
  allowance_scale_ = 1.0;
  double worst_ratio = 0.0;
  for (PathIndex p = 0; p < ag_.path_count(); ++p) {
    if (!plan.path_active[p]) continue;
    double shares = 0.0;
    bool hosted = true;
    for (VertexIndex v : ag_.paths[p].vertices) {
      if (plan.instances[v] <= 0) {
        hosted = false;
        break;
      }
      shares += 2.0 * plan.latency_budget_ms[v];
    }
    if (!hosted || shares <= 0.0) continue;
    const double slack =
        cfg_.cluster.slo_ms -
        static_cast<double>(ag_.paths[p].vertices.size()) * cfg_.cluster.comm_latency_ms;
    worst_ratio = std::max(worst_ratio, shares / std::max(slack, 1e-9));
  }
  if (worst_ratio > 0.0) allowance_scale_ = std::max(1.0, 1.0 / worst_ratio);

  // Assign workers to variants, keeping existing hosts where the variant
  // stays, then filling remaining slots with the lowest-id free workers.
  const int s_total = cfg_.cluster.worker_count;
  std::vector<VertexIndex> target(s_total, -1);
  std::vector<int> target_batch(s_total, 0);
  std::vector<bool> taken(s_total, false);

  auto effective_vertex = [&](const SimWorker& w) { return w.has_pending ? w.pending_vertex : w.vertex; };

  for (VertexIndex v = 0; v < ag_.vertex_count(); ++v) {
    int need = plan.instances[v];
    for (int i = 0; i < s_total && need > 0; ++i) {
      if (!taken[i] && effective_vertex(workers_[i]) == v) {
        taken[i] = true;
        target[i] = v;
        target_batch[i] = plan.max_batch[v];
        --need;
      }
    }
  }
  for (VertexIndex v = 0; v < ag_.vertex_count(); ++v) {
    int need = plan.instances[v];
    for (int i = 0; i < s_total && need > 0; ++i)
      if (taken[i] && target[i] == v) --need;
    for (int i = 0; i < s_total && need > 0; ++i) {
      if (!taken[i]) {
        taken[i] = true;
        target[i] = v;
        target_batch[i] = plan.max_batch[v];
        --need;
      }
    }
  }

  std::vector<int> to_redispatch;
  for (int i = 0; i < s_total; ++i) {
    SimWorker& w = workers_[i];
    const VertexIndex cur = effective_vertex(w);
    if (cur == target[i]) {
      // Same variant: batching config updates take effect immediately.
      if (w.has_pending) {
        w.pending_batch = target_batch[i];
      } else if (w.vertex >= 0 && target[i] >= 0) {
        w.max_batch = target_batch[i];
        w.capacity_qps = ag_.profiles[w.vertex].qps_at(w.max_batch);
        w.exec_budget_ms = ag_.profiles[w.vertex].batch_latency_ms(w.max_batch);
      }
      continue;
    }
    if (first || cfg_.swap_delay_ms <= 0.0) {
      w.vertex = target[i];
      w.max_batch = target_batch[i];
      if (w.vertex >= 0) {
        w.capacity_qps = ag_.profiles[w.vertex].qps_at(w.max_batch);
        w.exec_budget_ms = ag_.profiles[w.vertex].batch_latency_ms(w.max_batch);
      } else {
        w.capacity_qps = 0.0;
        w.exec_budget_ms = 0.0;
      }
      if (!w.queue.empty()) to_redispatch.push_back(i);
      continue;
    }
    // Model swap: the worker goes dark for swap_delay_ms once its current
    // batch (if any) finishes.
    w.has_pending = true;
    w.pending_vertex = target[i];
    w.pending_batch = target_batch[i];
    if (!w.busy && !w.swapping) {
      begin_swap(w, now);
      to_redispatch.push_back(i);
    }
  }

  refresh_tables(now);
  for (int i : to_redispatch) redispatch_queue(workers_[i], now);
}

void Simulation::begin_swap(SimWorker& w, double now) {
  w.swapping = true;
  w.has_pending = false;
  w.vertex = w.pending_vertex;
  w.max_batch = w.pending_batch;
  if (w.vertex >= 0) {
    w.capacity_qps = ag_.profiles[w.vertex].qps_at(w.max_batch);
    w.exec_budget_ms = ag_.profiles[w.vertex].batch_latency_ms(w.max_batch);
  } else {
    w.capacity_qps = 0.0;
    w.exec_budget_ms = 0.0;
  }
  ++w.swap_epoch;
  schedule(now + cfg_.swap_delay_ms, EvKind::SwapDone, w.id, w.swap_epoch);
}

void Simulation::start_pending_swap(SimWorker& w, double now) {
  begin_swap(w, now);
  refresh_tables(now);
  redispatch_queue(w, now);
}

void Simulation::redispatch_queue(SimWorker& w, double now) {
  std::deque<SimRequest> pending;
  pending.swap(w.queue);
  while (!pending.empty()) {
    SimRequest req = std::move(pending.front());
    pending.pop_front();
    const int target = redispatch_target(req.task);
    if (target < 0) {
      shed_request(req, now);
      continue;
    }
    req.enqueue_ms = now;
    workers_[target].queue.push_back(std::move(req));
    try_start_batch(workers_[target], now);
  }
}

bool Simulation::worker_routable(int id, TaskIndex task) const {
  const SimWorker& w = workers_[id];
  return !w.swapping && !w.has_pending && w.vertex >= 0 && ag_.profiles[w.vertex].task == task;
}

int Simulation::redispatch_target(TaskIndex task) {
  if (have_tables_ && task < static_cast<TaskIndex>(router_.tables.task_dispatch.size())) {
    const auto& entries = router_.tables.task_dispatch[task];
    if (!entries.empty()) {
      for (int attempt = 0; attempt < 4; ++attempt) {
        double u = rng_.routing.next_double();
        int chosen = entries.back().worker;
        double cum = 0.0;
        for (const auto& e : entries) {
          cum += e.probability;
          if (u < cum) {
            chosen = e.worker;
            break;
          }
        }
        if (worker_routable(chosen, task)) return chosen;
      }
      for (const auto& e : entries)  // deterministic fallback scan
        if (worker_routable(e.worker, task)) return e.worker;
    }
  }
  // No planned inflow for this task: dispatch by capacity share instead so
  // idle-but-hosted capacity still serves.
  double total = 0.0;
  for (const auto& w : workers_)
    if (worker_routable(w.id, task)) total += w.capacity_qps;
  if (total <= 0.0) return -1;
  double u = rng_.routing.next_double() * total;
  int last = -1;
  for (const auto& w : workers_) {
    if (!worker_routable(w.id, task)) continue;
    last = w.id;
    u -= w.capacity_qps;
    if (u < 0.0) return w.id;
  }
  return last;
}

void Simulation::refresh_tables(double now) {
  std::vector<WorkerState> states;
  states.reserve(workers_.size());
  for (const auto& w : workers_) {
    WorkerState s;
    s.id = w.id;
    const bool available = !w.swapping && !w.has_pending && w.vertex >= 0;
    s.vertex = available ? w.vertex : -1;
    s.capacity_qps = available ? w.capacity_qps : 0.0;
    s.profiled_exec_ms = available ? w.exec_budget_ms : 0.0;
    states.push_back(s);
  }
  router_ = most_accurate_first(ag_, std::move(states), current_estimate(now), rhat_);
  have_tables_ = true;
}

int Simulation::sample_route(const std::vector<RouteEntry>& entries, double& u) const {
  double cum = 0.0;
  for (const auto& e : entries) {
    cum += e.probability;
    if (u < cum) return e.worker;
  }
  return -1;  // residual mass: shed
}

void Simulation::close_branch(std::int64_t root, double now) {
  RootRec& r = roots_[root];
  if (--r.outstanding > 0 || r.resolved) return;
  r.resolved = true;
  r.resolve_ms = now;
}

void Simulation::shed_request(const SimRequest& req, double now) {
  ++log_.task_flow[req.task].dropped;
  roots_[req.root].any_drop = true;
  close_branch(req.root, now);
}

void Simulation::drop_request(const SimRequest& req, double now) {
  ++log_.task_flow[req.task].dropped;
  roots_[req.root].any_drop = true;
  close_branch(req.root, now);
}

void Simulation::on_arrival(std::int64_t index, double now) {
  const auto sec = static_cast<std::size_t>(now / 1000.0);
  if (sec < arrivals_per_sec_.size()) ++arrivals_per_sec_[sec];

  RootRec rec;
  rec.arrival_ms = now;
  rec.deadline_ms = now + cfg_.cluster.slo_ms;
  rec.outstanding = 1;
  roots_[index] = rec;

  const TaskIndex root_task = ag_.graph.root;
  ++log_.task_flow[root_task].spawned;

  int target = -1;
  if (have_tables_ && !router_.tables.frontend.empty()) {
    double u = rng_.routing.next_double();
    target = sample_route(router_.tables.frontend, u);  // residual mass sheds
    if (target >= 0 && !worker_routable(target, root_task)) target = redispatch_target(root_task);
  } else {
    target = redispatch_target(root_task);
  }
  if (target < 0) {
    SimRequest req;
    req.root = index;
    req.task = root_task;
    shed_request(req, now);
    return;
  }

  Transfer tr;
  tr.req.root = index;
  tr.req.task = root_task;
  tr.worker = target;
  transfers_.push_back(std::move(tr));
  schedule(now + cfg_.cluster.comm_latency_ms, EvKind::Enqueue,
           static_cast<std::int64_t>(transfers_.size()) - 1);
}

void Simulation::on_enqueue(std::int64_t transfer, double now) {
  Transfer& tr = transfers_[transfer];
  int target = tr.worker;
  if (!worker_routable(target, tr.req.task)) target = redispatch_target(tr.req.task);
  if (target < 0) {
    shed_request(tr.req, now);
    return;
  }
  SimWorker& w = workers_[target];
  tr.req.enqueue_ms = now;
  w.queue.push_back(std::move(tr.req));
  try_start_batch(w, now);
}

void Simulation::try_start_batch(SimWorker& w, double now) {
  if (w.busy || w.swapping || w.vertex < 0) return;
  if (w.queue.empty()) {
    if (w.has_pending) start_pending_swap(w, now);
    return;
  }

  // Last-task dropping acts here, before execution: a request whose remaining
  // slack cannot cover the expected processing time is abandoned.
  const bool at_sink = ag_.graph.is_sink(ag_.profiles[w.vertex].task);
  std::vector<SimRequest> batch;
  while (!w.queue.empty() && static_cast<int>(batch.size()) < w.max_batch) {
    SimRequest req = std::move(w.queue.front());
    w.queue.pop_front();
    if (cfg_.drop_policy == DropPolicy::LastTask && at_sink) {
      const DropDecision d =
          apply_drop_policy(cfg_.drop_policy, now - req.enqueue_ms, w.exec_budget_ms, at_sink,
                            roots_[req.root].deadline_ms - now, w.exec_budget_ms);
      if (d.action == DropDecision::Action::Drop) {
        drop_request(req, now);
        continue;
      }
    }
    batch.push_back(std::move(req));
  }
  if (batch.empty()) {
    if (w.queue.empty() && w.has_pending) start_pending_swap(w, now);
    return;
  }

  const int size = static_cast<int>(batch.size());
  // Partial batches run at the nearest profiled point above their size.
  int profile_batch = cfg_.cluster.allowed_batches.back();
  for (int b : cfg_.cluster.allowed_batches) {
    if (b >= size) {
      profile_batch = b;
      break;
    }
  }
  const double exec_ms = 1000.0 * size / ag_.profiles[w.vertex].qps_at(profile_batch);
  w.busy = true;
  w.executing = std::move(batch);
  w.executing_vertex = w.vertex;
  w.busy_ms += std::min(exec_ms, std::max(0.0, horizon_ - now));
  schedule(now + exec_ms, EvKind::Wake, w.id);
}

void Simulation::on_wake(std::int64_t worker, double now) {
  SimWorker& w = workers_[worker];
  std::vector<SimRequest> batch = std::move(w.executing);
  w.executing.clear();
  w.busy = false;

  obs_in_[w.executing_vertex] += static_cast<double>(batch.size());
  for (auto& req : batch) process_completion(req, w, now);

  if (w.has_pending && w.queue.empty())
    start_pending_swap(w, now);
  else
    try_start_batch(w, now);
}

void Simulation::process_completion(SimRequest& req, SimWorker& w, double now) {
  const VertexIndex vertex = w.executing_vertex;
  const TaskIndex task = req.task;
  ++log_.task_flow[task].completed;

  std::vector<VertexIndex> full_path = req.path;
  full_path.push_back(vertex);

  if (ag_.graph.is_sink(task)) {
    auto it = path_lookup_.find(full_path);
    RootRec& root = roots_[req.root];
    if (it != path_lookup_.end()) {
      root.acc_sum += ag_.paths[it->second].profiled_accuracy;
      ++root.acc_n;
    }
    close_branch(req.root, now);
    return;
  }

  const double elapsed = now - req.enqueue_ms;
  if (cfg_.drop_policy == DropPolicy::PerTask) {
    // The task's share of the SLO covers one batch of queue wait on top of
    // the batch execution time, stretched so the shares along the tightest
    // active path sum to the SLO, plus the hop's communication latency.
    const double allowance =
        2.0 * w.exec_budget_ms * allowance_scale_ + cfg_.cluster.comm_latency_ms;
    const DropDecision d = apply_drop_policy(cfg_.drop_policy, elapsed, allowance, false,
                                             roots_[req.root].deadline_ms - now, w.exec_budget_ms);
    if (d.action == DropDecision::Action::Drop) {
      roots_[req.root].any_drop = true;
      close_branch(req.root, now);
      return;
    }
  }

  req.path = std::move(full_path);
  spawn_children(req, vertex, w, now);
}

void Simulation::spawn_children(const SimRequest& req, VertexIndex vertex, SimWorker& w, double now) {
  const TaskIndex task = req.task;
  const int fanout = sample_fanout(ag_.profiles[vertex].mult_factor, rng_.fanout, cfg_.fanout_mode);
  obs_out_[vertex] += static_cast<double>(fanout);

  RootRec& root = roots_[req.root];
  const double elapsed = now - req.enqueue_ms;
  const auto& slots = ag_.graph.child_edges[task];
  for (std::size_t slot = 0; slot < slots.size(); ++slot) {
    const auto& edge = ag_.graph.edges[slots[slot]];
    int count = fanout;
    if (edge.branch_ratio < 1.0) {
      count = 0;
      for (int i = 0; i < fanout; ++i)
        if (rng_.fanout.bernoulli(edge.branch_ratio)) ++count;
    }
    const auto& routes = w.id < static_cast<int>(router_.tables.worker_routes.size())
                             ? router_.tables.worker_routes[w.id]
                             : std::vector<std::vector<RouteEntry>>{};
    for (int i = 0; i < count; ++i) {
      ++log_.task_flow[edge.child].spawned;
      int target = -1;
      if (slot < routes.size() && !routes[slot].empty()) {
        double u = rng_.routing.next_double();
        target = sample_route(routes[slot], u);  // residual mass sheds
        if (target >= 0 && !worker_routable(target, edge.child)) target = redispatch_target(edge.child);
      } else {
        target = redispatch_target(edge.child);
      }
      if (target >= 0 && cfg_.drop_policy == DropPolicy::OpportunisticRerouting) {
        // A request is behind once its projected finish through the sampled
        // nominal worker misses the deadline; the budget passed down is the
        // time this task could consume while staying on track.
        const double nominal_exec = workers_[target].exec_budget_ms;
        const double need = 2.0 * nominal_exec + cfg_.cluster.comm_latency_ms;
        const double budget = (root.deadline_ms - req.enqueue_ms) - need;
        const DropDecision d = apply_drop_policy(cfg_.drop_policy, elapsed, budget, false,
                                                 root.deadline_ms - now, nominal_exec);
        if (d.action == DropDecision::Action::TryReroute) {
          RerouteOutcome alt = opportunistic_reroute(d.deficit_ms, nominal_exec,
                                                     router_.backup.per_task[edge.child], rng_.tie_break);
          if (alt.rerouted && worker_routable(alt.worker, edge.child)) {
            target = alt.worker;
          } else {
            ++log_.task_flow[edge.child].dropped;
            root.any_drop = true;
            continue;
          }
        }
      }
      if (target < 0) {
        ++log_.task_flow[edge.child].dropped;
        root.any_drop = true;
        continue;
      }
      ++root.outstanding;
      Transfer tr;
      tr.req.root = req.root;
      tr.req.task = edge.child;
      tr.req.path = req.path;
      tr.worker = target;
      transfers_.push_back(std::move(tr));
      schedule(now + cfg_.cluster.comm_latency_ms, EvKind::Enqueue,
               static_cast<std::int64_t>(transfers_.size()) - 1);
    }
  }
  close_branch(req.root, now);
}

SimArtifacts Simulation::run() {
  cfg_.validate();

  const int s_total = cfg_.cluster.worker_count;
  workers_.resize(s_total);
  for (int i = 0; i < s_total; ++i) workers_[i].id = i;

  rhat_.resize(ag_.vertex_count());
  for (VertexIndex v = 0; v < ag_.vertex_count(); ++v) rhat_[v] = ag_.profiles[v].mult_factor;
  obs_in_.assign(ag_.vertex_count(), 0.0);
  obs_out_.assign(ag_.vertex_count(), 0.0);

  for (PathIndex p = 0; p < ag_.path_count(); ++p) path_lookup_[ag_.paths[p].vertices] = p;

  const auto horizon_sec = static_cast<std::size_t>(std::ceil(horizon_ / 1000.0));
  arrivals_per_sec_.assign(horizon_sec + 1, 0);

  // Bootstrap demand estimate: the mean rate over the first controller period
  // of the trace unless the config pins one.
  if (cfg_.initial_demand_qps >= 0.0) {
    initial_estimate_ = cfg_.initial_demand_qps;
  } else {
    const double window = std::min(horizon_, cfg_.controller_period_ms);
    std::int64_t count = 0;
    for (double t : cfg_.arrivals.timestamps_ms)
      if (t < window) ++count;
    initial_estimate_ = window > 0.0 ? 1000.0 * static_cast<double>(count) / window : 0.0;
  }

  log_.horizon_ms = horizon_;
  log_.cluster_size = s_total;
  log_.seed = cfg_.seed;
  log_.config_digest = cfg_.config_digest;
  log_.task_flow.assign(ag_.graph.task_count(), {});

  std::int64_t n_roots = 0;
  for (double t : cfg_.arrivals.timestamps_ms)
    if (t < horizon_) ++n_roots;
  roots_.resize(n_roots);
  for (std::int64_t i = 0; i < n_roots; ++i) schedule(cfg_.arrivals.timestamps_ms[i], EvKind::Arrival, i);

  for (double t = 0.0; t <= horizon_; t += cfg_.controller_period_ms) schedule(t, EvKind::Controller);
  for (double t = cfg_.router_period_ms; t <= horizon_; t += cfg_.router_period_ms)
    schedule(t, EvKind::RouterRefresh);
  for (double t = cfg_.heartbeat_period_ms; t <= horizon_; t += cfg_.heartbeat_period_ms)
    schedule(t, EvKind::Heartbeat);

  while (!queue_.empty()) {
    const Event ev = queue_.top();
    if (ev.t > horizon_ + 1e-9) break;
    queue_.pop();
    switch (ev.kind) {
      case EvKind::Arrival:
        on_arrival(ev.a, ev.t);
        break;
      case EvKind::Enqueue:
        on_enqueue(ev.a, ev.t);
        break;
      case EvKind::Wake:
        on_wake(ev.a, ev.t);
        break;
      case EvKind::Controller:
        run_controller(ev.t);
        break;
      case EvKind::RouterRefresh: {
        const double estimate = current_estimate(ev.t);
        if (have_plan_ && planned_demand_ > 0.0 &&
            std::abs(estimate - planned_demand_) / planned_demand_ > cfg_.realloc_threshold) {
          run_controller(ev.t);  // significant drift since the last invocation
        } else {
          refresh_tables(ev.t);
        }
        break;
      }
      case EvKind::Heartbeat:
        for (VertexIndex v = 0; v < ag_.vertex_count(); ++v) {
          if (obs_in_[v] > 0.0) {
            const double ratio = obs_out_[v] / obs_in_[v];
            rhat_[v] = 0.3 * ratio + 0.7 * rhat_[v];
          }
          obs_in_[v] = 0.0;
          obs_out_[v] = 0.0;
        }
        break;
      case EvKind::SwapDone: {
        SimWorker& w = workers_[ev.a];
        if (w.swap_epoch != ev.b) break;  // superseded by a newer swap
        w.swapping = false;
        refresh_tables(ev.t);
        try_start_batch(w, ev.t);
        break;
      }
    }
  }

  // Snapshot at the horizon: unresolved roots stay in flight.
  for (const auto& rec : roots_) {
    RootOutcome out;
    out.arrival_ms = rec.arrival_ms;
    if (!rec.resolved) {
      out.state = RootState::InFlight;
    } else {
      out.resolve_ms = rec.resolve_ms;
      if (rec.any_drop) {
        out.state = RootState::Dropped;
      } else {
        out.state = RootState::Completed;
        out.late = rec.resolve_ms > rec.deadline_ms + 1e-9;
        if (rec.acc_n > 0) out.accuracy = rec.acc_sum / rec.acc_n;
      }
    }
    log_.roots.push_back(out);
  }
  for (const auto& w : workers_) {
    log_.worker_busy_ms.push_back(w.busy_ms);
    for (const auto& req : w.queue) ++log_.task_flow[req.task].queued_at_end;
    for (const auto& req : w.executing) ++log_.task_flow[req.task].executing_at_end;
  }

  SimArtifacts out;
  out.log = std::move(log_);
  if (have_tables_) out.routes_json = routes_to_json(ag_, router_);
  out.final_mult_estimates = rhat_;
  return out;
}

}  // namespace

SimArtifacts simulate(const SimConfig& cfg) {
  Simulation sim(cfg);
  return sim.run();
}

SimResult run(const SimConfig& cfg) { return finalize(simulate(cfg).log); }

}  // namespace pipescale
