#include "pipescale/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace pipescale {

namespace {

using nlohmann::ordered_json;

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

WorkloadSpec parse_workload(const ordered_json& j) {
  WorkloadSpec w;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "step") {
    w.kind = WorkloadSpec::Kind::Step;
    for (const auto& level : j.at("levels_qps")) w.levels_qps.push_back(level.get<double>());
    w.level_duration_s = j.value("level_duration_s", 1.0);
  } else if (kind == "poisson") {
    w.kind = WorkloadSpec::Kind::Poisson;
    w.rate_qps = j.at("rate_qps").get<double>();
    w.horizon_s = j.at("horizon_s").get<double>();
  } else if (kind == "ramp") {
    w.kind = WorkloadSpec::Kind::Ramp;
    w.start_qps = j.at("start_qps").get<double>();
    w.end_qps = j.at("end_qps").get<double>();
    w.duration_s = j.at("duration_s").get<double>();
  } else if (kind == "trace") {
    const std::string format = j.at("format").get<std::string>();
    if (format == "aggregate_csv")
      w.kind = WorkloadSpec::Kind::TraceAggregate;
    else if (format == "timestamp_csv")
      w.kind = WorkloadSpec::Kind::TraceTimestamps;
    else
      throw ConfigError("unknown trace format: " + format);
    w.path = j.at("path").get<std::string>();
    w.target_peak_qps = j.value("target_peak_qps", -1.0);
  } else {
    throw ConfigError("unknown workload kind: " + kind);
  }
  return w;
}

DropPolicy parse_drop_policy(const std::string& name) {
  if (name == "none") return DropPolicy::None;
  if (name == "last_task") return DropPolicy::LastTask;
  if (name == "per_task") return DropPolicy::PerTask;
  if (name == "opportunistic_rerouting") return DropPolicy::OpportunisticRerouting;
  throw ConfigError("unknown drop policy: " + name);
}

std::string resolve_path(const std::string& base_file, const std::string& relative) {
  std::filesystem::path p(relative);
  if (p.is_absolute()) return relative;
  return (std::filesystem::path(base_file).parent_path() / p).string();
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

struct LoadedExperiment {
  ExperimentConfig cfg;
  LoadedPipeline pipeline;
};

LoadedExperiment load_all(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open experiment config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  ordered_json j = ordered_json::parse(ss.str(), nullptr, false);
  if (j.is_discarded()) throw ConfigError("experiment config is not valid JSON: " + path);

  LoadedExperiment out;
  auto& cfg = out.cfg;
  try {
    cfg.pipeline_path = resolve_path(path, j.at("pipeline").get<std::string>());
    const auto& jc = j.at("cluster");
    cfg.cluster.worker_count = jc.at("workers").get<int>();
    cfg.cluster.slo_ms = jc.at("slo_ms").get<double>();
    cfg.cluster.comm_latency_ms = jc.value("comm_latency_ms", 0.0);
    for (const auto& b : jc.at("allowed_batches")) cfg.cluster.allowed_batches.push_back(b.get<int>());
    cfg.workload = parse_workload(j.at("workload"));
    if (!cfg.workload.path.empty()) cfg.workload.path = resolve_path(path, cfg.workload.path);
    cfg.policy_mode = parse_policy_mode(j.value("policy_mode", "loki"));
    cfg.drop_policy = parse_drop_policy(j.value("drop_policy", "opportunistic_rerouting"));
    const std::string fan = j.value("fanout_mode", "deterministic");
    if (fan == "deterministic")
      cfg.fanout_mode = FanoutMode::Deterministic;
    else if (fan == "poisson")
      cfg.fanout_mode = FanoutMode::Poisson;
    else
      throw ConfigError("unknown fanout_mode: " + fan);
    if (!j.contains("seed")) throw ConfigError("experiment config must pin a seed");
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.horizon_s = j.value("horizon_s", -1.0);
    cfg.output_dir = j.value("output_dir", std::string("out"));
    cfg.controller_period_s = j.value("controller_period_s", 10.0);
    cfg.router_period_s = j.value("router_period_s", 1.0);
    cfg.heartbeat_period_s = j.value("heartbeat_period_s", 1.0);
    cfg.swap_delay_ms = j.value("swap_delay_ms", 500.0);
    cfg.ewma_alpha = j.value("ewma_alpha", 0.3);
    cfg.realloc_threshold = j.value("realloc_threshold", 0.2);
    cfg.initial_demand_qps = j.value("initial_demand_qps", -1.0);
  } catch (const ordered_json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  cfg.canonical_text = j.dump();
  cfg.cluster.validate();
  out.pipeline = load_pipeline_spec_file(cfg.pipeline_path);
  return out;
}

}  // namespace

const char* policy_mode_name(PolicyMode mode) {
  switch (mode) {
    case PolicyMode::Loki: return "loki";
    case PolicyMode::HardwareOnly: return "hardware_only";
    case PolicyMode::PipelineAgnostic: return "pipeline_agnostic";
  }
  return "loki";
}

PolicyMode parse_policy_mode(const std::string& name) {
  if (name == "loki") return PolicyMode::Loki;
  if (name == "hardware_only") return PolicyMode::HardwareOnly;
  if (name == "pipeline_agnostic") return PolicyMode::PipelineAgnostic;
  throw ConfigError("unknown policy mode: " + name);
}

ExperimentConfig load_experiment_file(const std::string& path) { return load_all(path).cfg; }

ArrivalProcess build_arrivals(const WorkloadSpec& spec, std::uint64_t seed) {
  switch (spec.kind) {
    case WorkloadSpec::Kind::Step:
      return synth_step(spec.levels_qps, spec.level_duration_s);
    case WorkloadSpec::Kind::Poisson:
      return synth_poisson(spec.rate_qps, spec.horizon_s, seed);
    case WorkloadSpec::Kind::Ramp:
      return synth_ramp(spec.start_qps, spec.end_qps, spec.duration_s, seed);
    case WorkloadSpec::Kind::TraceAggregate:
    case WorkloadSpec::Kind::TraceTimestamps: {
      ArrivalProcess p = load_trace(spec.path, spec.kind == WorkloadSpec::Kind::TraceAggregate
                                                   ? TraceFormat::AggregateCsv
                                                   : TraceFormat::TimestampCsv);
      if (spec.target_peak_qps >= 0.0) p = scale_trace(p, spec.target_peak_qps);
      return p;
    }
  }
  throw ConfigError("unhandled workload kind");
}

std::string config_digest(const ExperimentConfig& exp, std::uint64_t seed) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(exp.canonical_text + "#" + std::to_string(seed))));
  return buf;
}

SimConfig make_sim_config(const AugmentedGraph& ag, const ExperimentConfig& exp, std::uint64_t seed) {
  SimConfig sim;
  sim.pipeline = &ag;
  sim.cluster = exp.cluster;
  sim.arrivals = build_arrivals(exp.workload, seed);
  sim.seed = seed;
  sim.policy_mode = exp.policy_mode;
  sim.drop_policy = exp.drop_policy;
  sim.fanout_mode = exp.fanout_mode;
  sim.controller_period_ms = exp.controller_period_s * 1000.0;
  sim.router_period_ms = exp.router_period_s * 1000.0;
  sim.heartbeat_period_ms = exp.heartbeat_period_s * 1000.0;
  sim.swap_delay_ms = exp.swap_delay_ms;
  sim.ewma_alpha = exp.ewma_alpha;
  sim.realloc_threshold = exp.realloc_threshold;
  sim.initial_demand_qps = exp.initial_demand_qps;
  sim.horizon_ms = exp.horizon_s > 0.0 ? exp.horizon_s * 1000.0 : -1.0;
  sim.config_digest = config_digest(exp, seed);
  return sim;
}

std::string plan_to_json(const AugmentedGraph& ag, const AllocationPlan& plan) {
  ordered_json j;
  j["mode"] = plan.mode == PlanMode::HardwareScaling ? "hardware" : "accuracy";
  j["best_effort"] = plan.best_effort;
  j["workers_used"] = plan.workers_used();
  j["planned_accuracy"] = plan.planned_accuracy;
  j["served_fraction"] = plan.served_fraction;
  ordered_json instances = ordered_json::object();
  for (VertexIndex v = 0; v < ag.vertex_count(); ++v) {
    if (plan.instances[v] <= 0) continue;
    instances[ag.profiles[v].id] = {{"count", plan.instances[v]},
                                    {"batch", plan.max_batch[v]},
                                    {"latency_budget_ms", plan.latency_budget_ms[v]}};
  }
  j["instances"] = std::move(instances);
  ordered_json flows = ordered_json::array();
  for (PathIndex p = 0; p < ag.path_count(); ++p) {
    if (plan.path_flow[p] <= 0.0 && !plan.path_active[p]) continue;
    ordered_json jf;
    ordered_json verts = ordered_json::array();
    for (VertexIndex v : ag.paths[p].vertices) verts.push_back(ag.profiles[v].id);
    jf["path"] = std::move(verts);
    jf["flow"] = plan.path_flow[p];
    jf["active"] = static_cast<bool>(plan.path_active[p]);
    jf["accuracy"] = ag.paths[p].profiled_accuracy;
    flows.push_back(std::move(jf));
  }
  j["path_flow"] = std::move(flows);
  return j.dump(2) + "\n";
}

namespace {

int map_exit(const std::exception& e, std::ostream& out) {
  if (dynamic_cast<const TotallyInfeasibleError*>(&e) != nullptr) return 2;
  out << "error: " << e.what() << "\n";
  if (dynamic_cast<const ConfigError*>(&e) != nullptr) return 1;
  if (dynamic_cast<const PipelineError*>(&e) != nullptr) return 1;
  if (dynamic_cast<const TraceError*>(&e) != nullptr) return 1;
  if (const auto* alloc = dynamic_cast<const AllocError*>(&e);
      alloc != nullptr && alloc->code() == AllocError::Code::BadConfig)
    return 1;
  return 3;
}

}  // namespace

int cmd_validate(const std::string& config_path, std::ostream& out) {
  try {
    LoadedExperiment exp = load_all(config_path);
    const auto& ag = exp.pipeline.aug;
    const auto& cluster = exp.cfg.cluster;
    for (VertexIndex v = 0; v < ag.vertex_count(); ++v)
      for (int b : cluster.allowed_batches) ag.profiles[v].qps_at(b);

    out << "tasks: " << ag.graph.task_count() << ", variants: " << ag.vertex_count()
        << ", workers: " << cluster.worker_count << "\n";
    for (VertexIndex v = 0; v < ag.vertex_count(); ++v) {
      double best = 0.0;
      for (int b : cluster.allowed_batches) best = std::max(best, ag.profiles[v].qps_at(b));
      out << "variant " << ag.profiles[v].id << ": " << fixed6(best) << " qps/instance, "
          << fixed6(best * cluster.worker_count) << " qps max cluster-wide\n";
    }
    out << ag.path_count() << " paths, OK\n";
    return 0;
  } catch (const std::exception& e) {
    out << "error: " << e.what() << "\n";
    return 1;
  }
}

int cmd_allocate(const std::string& config_path, double demand_qps, const std::string& export_lp_path,
                 const std::string& dump_routes_path, std::ostream& out) {
  try {
    LoadedExperiment exp = load_all(config_path);
    const auto& ag = exp.pipeline.aug;
    const DemandEstimate demand = profiled_demand(ag, demand_qps);

    AllocationPlan plan;
    int code = 0;
    double max_feasible = -1.0;
    try {
      plan = allocate(ag, exp.cfg.cluster, demand);
    } catch (const TotallyInfeasibleError& e) {
      plan = e.best_effort;
      max_feasible = e.max_feasible_qps;
      code = 2;
    }

    if (!export_lp_path.empty()) {
      const LinearProgram lp = build_milp(ag, exp.cfg.cluster, demand, plan.mode);
      std::ofstream lf(export_lp_path, std::ios::binary);
      if (!lf) throw ConfigError("cannot write LP file: " + export_lp_path);
      lf << export_lp_file(lp);
    }
    if (!dump_routes_path.empty()) {
      std::vector<WorkerState> states;
      int id = 0;
      for (VertexIndex v = 0; v < ag.vertex_count(); ++v) {
        for (int i = 0; i < plan.instances[v]; ++i) {
          WorkerState w;
          w.id = id++;
          w.vertex = v;
          w.capacity_qps = ag.profiles[v].qps_at(plan.max_batch[v]);
          w.profiled_exec_ms = plan.latency_budget_ms[v];
          states.push_back(w);
        }
      }
      const DemandEstimate est = profiled_demand(ag, demand_qps);
      RouterResult routes = most_accurate_first(ag, std::move(states), demand_qps, est.mult_factor);
      std::ofstream rf(dump_routes_path, std::ios::binary);
      if (!rf) throw ConfigError("cannot write routes file: " + dump_routes_path);
      rf << routes_to_json(ag, routes);
    }

    if (code == 2) {
      ordered_json j;
      j["status"] = "infeasible";
      j["max_feasible_qps"] = max_feasible;
      j["best_effort"] = ordered_json::parse(plan_to_json(ag, plan));
      out << j.dump(2) << "\n";
      return 2;
    }
    out << plan_to_json(ag, plan);
    return 0;
  } catch (const std::exception& e) {
    return map_exit(e, out);
  }
}

int cmd_simulate(const std::string& config_path, std::int64_t seed_override, const std::string& out_dir,
                 bool dump_routes, std::ostream& out) {
  try {
    LoadedExperiment exp = load_all(config_path);
    const std::uint64_t seed = seed_override >= 0 ? static_cast<std::uint64_t>(seed_override) : exp.cfg.seed;
    const std::string dir = out_dir.empty() ? exp.cfg.output_dir : out_dir;

    SimConfig sim = make_sim_config(exp.pipeline.aug, exp.cfg, seed);
    SimArtifacts artifacts = simulate(sim);
    SimResult result = finalize(artifacts.log);
    write_outputs(result, dir);
    if (dump_routes) {
      std::ofstream rf(std::filesystem::path(dir) / "routes.json", std::ios::binary);
      rf << artifacts.routes_json;
    }
    out << summary_to_json(result);
    return 0;
  } catch (const std::exception& e) {
    return map_exit(e, out);
  }
}

int cmd_sweep(const std::string& config_path, const std::string& variable, double from, double to,
              double step, std::int64_t seed_override, const std::string& out_dir, std::ostream& out) {
  try {
    if (step <= 0.0 || to < from) throw ConfigError("sweep range must have from <= to and step > 0");
    LoadedExperiment exp = load_all(config_path);
    const auto& ag = exp.pipeline.aug;
    const std::uint64_t seed = seed_override >= 0 ? static_cast<std::uint64_t>(seed_override) : exp.cfg.seed;
    const std::string dir = out_dir.empty() ? exp.cfg.output_dir : out_dir;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    std::ofstream csv(std::filesystem::path(dir) / "sweep.csv", std::ios::binary);
    if (!csv) throw ConfigError("cannot write sweep.csv in " + dir);

    if (variable == "demand") {
      csv << "demand_qps,feasible,mode,workers,planned_accuracy,served_fraction\n";
      std::string prev_mode;
      for (double d = from; d <= to + 1e-9; d += step) {
        AllocationPlan plan;
        bool feasible = true;
        try {
          plan = allocate(ag, exp.cfg.cluster, profiled_demand(ag, d));
        } catch (const TotallyInfeasibleError& e) {
          plan = e.best_effort;
          feasible = false;
        }
        const std::string mode = plan.mode == PlanMode::HardwareScaling ? "hardware" : "accuracy";
        csv << fixed6(d) << ',' << (feasible ? 1 : 0) << ',' << mode << ',' << plan.workers_used() << ','
            << fixed6(plan.planned_accuracy) << ',' << fixed6(plan.served_fraction) << '\n';
        if (!prev_mode.empty() && mode != prev_mode)
          out << "phase boundary: " << prev_mode << " -> " << mode << " at demand " << fixed6(d) << "\n";
        prev_mode = mode;
      }
    } else if (variable == "slo") {
      csv << "slo_ms,infeasible,violation_ratio,system_accuracy,max_accuracy_drop,cluster_utilization\n";
      for (double slo = from; slo <= to + 1e-9; slo += step) {
        ExperimentConfig point = exp.cfg;
        point.cluster.slo_ms = slo;
        SimConfig sim = make_sim_config(ag, point, seed);

        // Flag points where allocation is infeasible at the trace's bootstrap
        // demand even at lowest accuracy.
        const double window = std::min(sim.horizon_ms < 0 ? sim.arrivals.horizon_ms : sim.horizon_ms,
                                       sim.controller_period_ms);
        std::int64_t count = 0;
        for (double t : sim.arrivals.timestamps_ms)
          if (t < window) ++count;
        const double bootstrap = window > 0.0 ? 1000.0 * static_cast<double>(count) / window : 0.0;
        bool infeasible = false;
        try {
          allocate(ag, point.cluster, profiled_demand(ag, bootstrap));
        } catch (const TotallyInfeasibleError&) {
          infeasible = true;
        }

        SimResult result = run(sim);
        csv << fixed6(slo) << ',' << (infeasible ? 1 : 0) << ','
            << fixed6(result.summary.slo_violation_ratio) << ','
            << (std::isnan(result.summary.system_accuracy) ? ""
                                                           : fixed6(result.summary.system_accuracy))
            << ',' << fixed6(result.summary.max_accuracy_drop) << ','
            << fixed6(result.summary.cluster_utilization) << '\n';
      }
    } else {
      throw ConfigError("sweep variable must be 'demand' or 'slo'");
    }
    csv.flush();
    out << "sweep written to " << (std::filesystem::path(dir) / "sweep.csv").string() << "\n";
    return 0;
  } catch (const std::exception& e) {
    return map_exit(e, out);
  }
}

int cmd_compare(const std::string& config_path, const std::vector<std::string>& policies, int n_seeds,
                std::int64_t seed_override, const std::string& out_dir, std::ostream& out) {
  try {
    if (n_seeds < 1) throw ConfigError("compare needs at least one seed");
    LoadedExperiment exp = load_all(config_path);
    const auto& ag = exp.pipeline.aug;
    const std::uint64_t base_seed =
        seed_override >= 0 ? static_cast<std::uint64_t>(seed_override) : exp.cfg.seed;
    const std::string dir = out_dir.empty() ? exp.cfg.output_dir : out_dir;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    std::ofstream csv(std::filesystem::path(dir) / "compare.csv", std::ios::binary);
    if (!csv) throw ConfigError("cannot write compare.csv in " + dir);
    csv << "policy,seed,violation_ratio,system_accuracy,cluster_utilization,arrivals,completed,dropped,"
           "late\n";

    std::vector<PolicyMode> modes;
    for (const auto& name : policies) modes.push_back(parse_policy_mode(name));
    if (modes.empty())
      modes = {PolicyMode::Loki, PolicyMode::HardwareOnly, PolicyMode::PipelineAgnostic};

    for (PolicyMode mode : modes) {
      double mean_violation = 0.0, mean_util = 0.0, mean_acc = 0.0;
      int acc_points = 0;
      for (int k = 0; k < n_seeds; ++k) {
        const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(k);
        ExperimentConfig point = exp.cfg;
        point.policy_mode = mode;
        SimConfig sim = make_sim_config(ag, point, seed);
        SimResult r = run(sim);
        csv << policy_mode_name(mode) << ',' << seed << ',' << fixed6(r.summary.slo_violation_ratio)
            << ',' << (std::isnan(r.summary.system_accuracy) ? "" : fixed6(r.summary.system_accuracy))
            << ',' << fixed6(r.summary.cluster_utilization) << ',' << r.summary.arrivals << ','
            << r.summary.completed << ',' << r.summary.dropped << ',' << r.summary.late << '\n';
        mean_violation += r.summary.slo_violation_ratio;
        mean_util += r.summary.cluster_utilization;
        if (!std::isnan(r.summary.system_accuracy)) {
          mean_acc += r.summary.system_accuracy;
          ++acc_points;
        }
      }
      out << policy_mode_name(mode) << ": violation " << fixed6(mean_violation / n_seeds) << ", accuracy "
          << (acc_points > 0 ? fixed6(mean_acc / acc_points) : std::string("n/a")) << ", utilization "
          << fixed6(mean_util / n_seeds) << " (mean of " << n_seeds << " seeds)\n";
    }
    csv.flush();
    out << "comparison written to " << (std::filesystem::path(dir) / "compare.csv").string() << "\n";
    return 0;
  } catch (const std::exception& e) {
    return map_exit(e, out);
  }
}

}  // namespace pipescale
