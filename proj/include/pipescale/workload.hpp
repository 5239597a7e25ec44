#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pipescale {

class TraceError : public std::runtime_error {
 public:
  enum class Code { ParseError, NonMonotonicTimestamps, ZeroPeak, BadParams, Io };

  TraceError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

enum class ArrivalKind { TraceAggregate, TraceTimestamps, Poisson, Ramp, Step };
enum class TraceFormat { AggregateCsv, TimestampCsv };

struct ArrivalProcess {
  ArrivalKind kind = ArrivalKind::Step;
  double horizon_ms = 0.0;
  std::vector<double> timestamps_ms;        // sorted, materialized arrivals
  std::vector<std::int64_t> per_second;     // arrival count per whole second

  double peak_qps() const;
  std::int64_t total() const { return static_cast<std::int64_t>(timestamps_ms.size()); }
};

// Aggregate rows expand to arrivals spread uniformly within each second at
// fractional positions (i + 0.5) / count.
ArrivalProcess expand_aggregate(const std::vector<std::int64_t>& counts);

ArrivalProcess load_trace(const std::string& path, TraceFormat format);
ArrivalProcess parse_trace_text(const std::string& text, TraceFormat format);

// Shape-preserving rescale to the target peak rate; counts are re-discretized
// with largest-remainder rounding (each second within +-1 of the exact value).
ArrivalProcess scale_trace(const ArrivalProcess& p, double target_peak_qps);

ArrivalProcess synth_poisson(double rate_qps, double horizon_s, std::uint64_t seed);
ArrivalProcess synth_ramp(double start_qps, double end_qps, double duration_s, std::uint64_t seed);
ArrivalProcess synth_step(const std::vector<double>& levels_qps, double level_duration_s);

}  // namespace pipescale
