#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "pipescale/allocator.hpp"
#include "pipescale/metrics.hpp"
#include "pipescale/pipeline.hpp"
#include "pipescale/rng.hpp"
#include "pipescale/router.hpp"
#include "pipescale/workload.hpp"

namespace pipescale {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class DropPolicy { None, LastTask, PerTask, OpportunisticRerouting };
enum class PolicyMode { Loki, HardwareOnly, PipelineAgnostic };
enum class FanoutMode { Deterministic, Poisson };

struct SimConfig {
  const AugmentedGraph* pipeline = nullptr;  // non-owning
  ClusterConfig cluster;
  ArrivalProcess arrivals;
  std::uint64_t seed = 0;
  PolicyMode policy_mode = PolicyMode::Loki;
  DropPolicy drop_policy = DropPolicy::OpportunisticRerouting;
  FanoutMode fanout_mode = FanoutMode::Deterministic;
  double controller_period_ms = 10'000.0;
  double router_period_ms = 1'000.0;
  double heartbeat_period_ms = 1'000.0;
  double swap_delay_ms = 500.0;
  double ewma_alpha = 0.3;
  double realloc_threshold = 0.2;   // reallocate early when |EWMA - planned| / planned exceeds this
  double initial_demand_qps = -1.0; // < 0: mean rate over the first controller period of the trace
  double horizon_ms = -1.0;         // < 0: the arrival process horizon
  std::string config_digest;

  void validate() const;  // throws ConfigError
};

struct DropDecision {
  enum class Action { Continue, Drop, TryReroute };
  Action action = Action::Continue;
  double deficit_ms = 0.0;
};

// Early-dropping rule evaluation. PerTask and OpportunisticRerouting act on
// the time spent at the finished task vs. its latency budget; LastTask acts
// only at a sink, comparing the request's remaining SLO slack against the
// expected processing time there.
DropDecision apply_drop_policy(DropPolicy policy, double time_spent_ms, double budget_ms,
                               bool at_last_task, double remaining_slack_ms, double expected_exec_ms);

struct RerouteOutcome {
  bool rerouted = false;
  int worker = -1;
};

// Pick the highest-accuracy backup worker able to execute within
// nominal_exec_ms - deficit_ms (ties broken uniformly at random); the chosen
// entry's leftover capacity is decremented by the request's 1-qps share.
RerouteOutcome opportunistic_reroute(double deficit_ms, double nominal_exec_ms,
                                     std::vector<BackupEntry>& candidates, Rng& tie_break);

// Deterministic: floor(rate) plus one more with probability frac(rate);
// Poisson: a Poisson(rate) draw. Long-run mean is rate either way.
int sample_fanout(double rate, Rng& rng, FanoutMode mode);

struct SimArtifacts {
  RunLog log;
  std::string routes_json;                  // final routing tables
  std::vector<double> final_mult_estimates; // controller's r-hat per vertex at the horizon
};

SimArtifacts simulate(const SimConfig& cfg);
SimResult run(const SimConfig& cfg);

}  // namespace pipescale
