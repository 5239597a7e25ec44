#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "pipescale/allocator.hpp"

namespace pipescale {

class MetricsError : public std::runtime_error {
 public:
  explicit MetricsError(const std::string& what) : std::runtime_error(what) {}
};

enum class RootState { InFlight, Completed, Dropped };

struct RootOutcome {
  double arrival_ms = 0.0;
  double resolve_ms = -1.0;  // < 0 while unresolved
  RootState state = RootState::InFlight;
  bool late = false;         // completed past its deadline
  double accuracy = -1.0;    // < 0 when no sink completion defined one
};

struct PlanSegment {
  double start_ms = 0.0;
  int active_workers = 0;
  PlanMode mode = PlanMode::HardwareScaling;
};

// Per-task intermediate-query accounting, for conservation checks.
struct TaskFlowCounts {
  std::int64_t spawned = 0;
  std::int64_t completed = 0;
  std::int64_t dropped = 0;  // includes shed
  std::int64_t queued_at_end = 0;
  std::int64_t executing_at_end = 0;
};

// Raw per-run accounting the simulator produces; everything downstream is a
// deterministic aggregation of this log.
struct RunLog {
  double horizon_ms = 0.0;
  int cluster_size = 1;
  std::uint64_t seed = 0;
  std::string config_digest;
  std::vector<RootOutcome> roots;
  std::vector<PlanSegment> plan_segments;
  std::vector<TaskFlowCounts> task_flow;
  std::vector<double> worker_busy_ms;
};

struct SecondRow {
  std::int64_t second = 0;
  double demand_qps = 0.0;
  double served_qps = 0.0;
  double violation_ratio = 0.0;
  double accuracy = 0.0;  // NaN when no completions that second
  double utilization = 0.0;
  PlanMode mode = PlanMode::HardwareScaling;
};

struct SimSummary {
  std::int64_t arrivals = 0;
  std::int64_t completed = 0;
  std::int64_t dropped = 0;  // includes shed requests
  std::int64_t late = 0;
  std::int64_t in_flight_at_horizon = 0;
  double system_accuracy = 0.0;      // NaN when no completions
  double cluster_utilization = 0.0;
  double slo_violation_ratio = 0.0;  // (late + dropped) / arrivals
  double max_accuracy_drop = 0.0;
  std::vector<double> phase_transitions_ms;
};

struct SimResult {
  std::vector<SecondRow> series;
  SimSummary summary;
  std::uint64_t seed = 0;
  std::string config_digest;
};

// Buckets by root arrival second; utilization is the time-weighted active
// worker share from the plan segments.
SimResult finalize(const RunLog& log);

// timeseries.csv and summary.json, stable column order, floats with 6
// decimals. Byte-identical across reruns of the same seed/config.
void write_outputs(const SimResult& result, const std::string& out_dir);

std::string summary_to_json(const SimResult& result);

}  // namespace pipescale
