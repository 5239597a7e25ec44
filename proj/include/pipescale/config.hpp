#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pipescale/simulator.hpp"

namespace pipescale {

struct WorkloadSpec {
  enum class Kind { Step, Poisson, Ramp, TraceAggregate, TraceTimestamps };
  Kind kind = Kind::Step;
  std::vector<double> levels_qps;
  double level_duration_s = 1.0;
  double rate_qps = 0.0;
  double horizon_s = 0.0;
  double start_qps = 0.0;
  double end_qps = 0.0;
  double duration_s = 0.0;
  std::string path;                // trace kinds
  double target_peak_qps = -1.0;   // < 0: use the trace as-is
};

struct ExperimentConfig {
  std::string pipeline_path;
  ClusterConfig cluster;
  WorkloadSpec workload;
  PolicyMode policy_mode = PolicyMode::Loki;
  DropPolicy drop_policy = DropPolicy::OpportunisticRerouting;
  FanoutMode fanout_mode = FanoutMode::Deterministic;
  std::uint64_t seed = 0;
  double horizon_s = -1.0;
  std::string output_dir = "out";
  double controller_period_s = 10.0;
  double router_period_s = 1.0;
  double heartbeat_period_s = 1.0;
  double swap_delay_ms = 500.0;
  double ewma_alpha = 0.3;
  double realloc_threshold = 0.2;
  double initial_demand_qps = -1.0;

  std::string canonical_text;  // normalized form used for the digest
};

ExperimentConfig load_experiment_file(const std::string& path);

// Synthetic workloads draw from the given seed, so paired-seed runs rebuild
// the arrival process per seed.
ArrivalProcess build_arrivals(const WorkloadSpec& spec, std::uint64_t seed);

SimConfig make_sim_config(const AugmentedGraph& ag, const ExperimentConfig& exp, std::uint64_t seed);

std::string config_digest(const ExperimentConfig& exp, std::uint64_t seed);

std::string plan_to_json(const AugmentedGraph& ag, const AllocationPlan& plan);

const char* policy_mode_name(PolicyMode mode);
PolicyMode parse_policy_mode(const std::string& name);  // throws ConfigError

// CLI entry points. Exit codes: 0 success, 1 validation/config error,
// 2 infeasible, 3 runtime error.
int cmd_validate(const std::string& config_path, std::ostream& out);
int cmd_allocate(const std::string& config_path, double demand_qps, const std::string& export_lp_path,
                 const std::string& dump_routes_path, std::ostream& out);
int cmd_simulate(const std::string& config_path, std::int64_t seed_override, const std::string& out_dir,
                 bool dump_routes, std::ostream& out);
int cmd_sweep(const std::string& config_path, const std::string& variable, double from, double to,
              double step, std::int64_t seed_override, const std::string& out_dir, std::ostream& out);
int cmd_compare(const std::string& config_path, const std::vector<std::string>& policies, int n_seeds,
                std::int64_t seed_override, const std::string& out_dir, std::ostream& out);

}  // namespace pipescale
