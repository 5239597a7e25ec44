#include "pipescale/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "json.hpp"

namespace pipescale {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

const char* mode_name(PlanMode m) { return m == PlanMode::HardwareScaling ? "hardware" : "accuracy"; }

// Time-weighted active workers over [from_ms, to_ms).
double active_worker_time(const std::vector<PlanSegment>& segments, double from_ms, double to_ms) {
  double acc = 0.0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const double seg_start = segments[i].start_ms;
    const double seg_end = i + 1 < segments.size() ? segments[i + 1].start_ms : to_ms;
    const double lo = std::max(seg_start, from_ms);
    const double hi = std::min(seg_end, to_ms);
    if (hi > lo) acc += (hi - lo) * segments[i].active_workers;
  }
  return acc;
}

PlanMode mode_at(const std::vector<PlanSegment>& segments, double t_ms) {
  PlanMode mode = PlanMode::HardwareScaling;
  for (const auto& seg : segments) {
    if (seg.start_ms <= t_ms + 1e-9) mode = seg.mode;
  }
  return mode;
}

}  // namespace

SimResult finalize(const RunLog& log) {
  SimResult out;
  out.seed = log.seed;
  out.config_digest = log.config_digest;

  const auto seconds = static_cast<std::int64_t>(std::ceil(log.horizon_ms / 1000.0 - 1e-9));

  struct Bucket {
    std::int64_t arrivals = 0, completed = 0, late = 0, dropped = 0, acc_n = 0;
    double acc_sum = 0.0;
  };
  std::vector<Bucket> buckets(std::max<std::int64_t>(seconds, 0));

  auto& sum = out.summary;
  double total_acc = 0.0;
  std::int64_t total_acc_n = 0;
  for (const auto& root : log.roots) {
    ++sum.arrivals;
    const auto s = static_cast<std::int64_t>(root.arrival_ms / 1000.0);
    Bucket* b = s >= 0 && s < seconds ? &buckets[s] : nullptr;
    if (b) ++b->arrivals;

    if (root.state == RootState::InFlight) {
      ++sum.in_flight_at_horizon;
      continue;
    }
    if (root.state == RootState::Dropped) {
      ++sum.dropped;
      if (b) ++b->dropped;
      continue;
    }
    ++sum.completed;
    if (b) ++b->completed;
    if (root.late) {
      ++sum.late;
      if (b) ++b->late;
    }
    if (root.accuracy >= 0.0) {
      total_acc += root.accuracy;
      ++total_acc_n;
      if (b) {
        b->acc_sum += root.accuracy;
        ++b->acc_n;
      }
    }
  }

  sum.system_accuracy = total_acc_n > 0 ? total_acc / total_acc_n : kNaN;
  sum.slo_violation_ratio =
      sum.arrivals > 0 ? static_cast<double>(sum.late + sum.dropped) / static_cast<double>(sum.arrivals) : 0.0;
  sum.cluster_utilization =
      log.horizon_ms > 0.0
          ? active_worker_time(log.plan_segments, 0.0, log.horizon_ms) / (log.horizon_ms * log.cluster_size)
          : 0.0;

  for (std::size_t i = 1; i < log.plan_segments.size(); ++i) {
    if (log.plan_segments[i].mode != log.plan_segments[i - 1].mode)
      sum.phase_transitions_ms.push_back(log.plan_segments[i].start_ms);
  }

  double acc_min = kNaN, acc_max = kNaN;
  for (std::int64_t s = 0; s < seconds; ++s) {
    const auto& b = buckets[s];
    SecondRow row;
    row.second = s;
    row.demand_qps = static_cast<double>(b.arrivals);
    row.served_qps = static_cast<double>(b.completed);
    row.violation_ratio =
        b.arrivals > 0 ? static_cast<double>(b.late + b.dropped) / static_cast<double>(b.arrivals) : 0.0;
    row.accuracy = b.acc_n > 0 ? b.acc_sum / b.acc_n : kNaN;
    row.utilization = active_worker_time(log.plan_segments, s * 1000.0, (s + 1) * 1000.0) /
                      (1000.0 * log.cluster_size);
    row.mode = mode_at(log.plan_segments, s * 1000.0);
    if (!std::isnan(row.accuracy)) {
      acc_min = std::isnan(acc_min) ? row.accuracy : std::min(acc_min, row.accuracy);
      acc_max = std::isnan(acc_max) ? row.accuracy : std::max(acc_max, row.accuracy);
    }
    out.series.push_back(row);
  }
  sum.max_accuracy_drop = std::isnan(acc_min) ? 0.0 : acc_max - acc_min;
  return out;
}

std::string summary_to_json(const SimResult& result) {
  const auto& s = result.summary;
  nlohmann::ordered_json j;
  j["arrivals"] = s.arrivals;
  j["completed"] = s.completed;
  j["dropped"] = s.dropped;
  j["late"] = s.late;
  j["in_flight_at_horizon"] = s.in_flight_at_horizon;
  if (std::isnan(s.system_accuracy))
    j["system_accuracy"] = nullptr;
  else
    j["system_accuracy"] = s.system_accuracy;
  j["cluster_utilization"] = s.cluster_utilization;
  j["slo_violation_ratio"] = s.slo_violation_ratio;
  j["max_accuracy_drop"] = s.max_accuracy_drop;
  j["phase_transitions_ms"] = s.phase_transitions_ms;
  j["seed"] = result.seed;
  j["config_digest"] = result.config_digest;
  return j.dump(2) + "\n";
}

void write_outputs(const SimResult& result, const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw MetricsError("cannot create output directory " + out_dir + ": " + ec.message());

  const auto ts_path = std::filesystem::path(out_dir) / "timeseries.csv";
  std::ofstream ts(ts_path, std::ios::binary);
  if (!ts) throw MetricsError("cannot open " + ts_path.string());
  ts << "second,demand_qps,served_qps,violation_ratio,accuracy,utilization,mode\n";
  for (const auto& row : result.series) {
    ts << row.second << ',' << fixed6(row.demand_qps) << ',' << fixed6(row.served_qps) << ','
       << fixed6(row.violation_ratio) << ',' << (std::isnan(row.accuracy) ? "" : fixed6(row.accuracy))
       << ',' << fixed6(row.utilization) << ',' << mode_name(row.mode) << '\n';
  }
  if (!ts.flush()) throw MetricsError("failed writing " + ts_path.string());

  const auto sum_path = std::filesystem::path(out_dir) / "summary.json";
  std::ofstream sj(sum_path, std::ios::binary);
  if (!sj) throw MetricsError("cannot open " + sum_path.string());
  sj << summary_to_json(result);
  if (!sj.flush()) throw MetricsError("failed writing " + sum_path.string());
}

}  // namespace pipescale
