#include "pipescale/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pipescale/rng.hpp"

namespace pipescale {

namespace {

[[noreturn]] void fail(TraceError::Code code, const std::string& msg) { throw TraceError(code, msg); }

std::vector<std::int64_t> bucket_per_second(const std::vector<double>& timestamps_ms, double horizon_ms) {
  const auto seconds = static_cast<std::size_t>(std::ceil(horizon_ms / 1000.0));
  std::vector<std::int64_t> counts(seconds, 0);
  for (double t : timestamps_ms) {
    auto s = static_cast<std::size_t>(t / 1000.0);
    if (s < counts.size()) ++counts[s];
  }
  return counts;
}

void spread_uniform(std::vector<double>& out, std::size_t second, std::int64_t count) {
  for (std::int64_t i = 0; i < count; ++i) {
    out.push_back(static_cast<double>(second) * 1000.0 +
                  1000.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(count));
  }
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

double ArrivalProcess::peak_qps() const {
  std::int64_t peak = 0;
  for (auto c : per_second) peak = std::max(peak, c);
  return static_cast<double>(peak);
}

ArrivalProcess expand_aggregate(const std::vector<std::int64_t>& counts) {
  ArrivalProcess p;
  p.kind = ArrivalKind::TraceAggregate;
  p.per_second = counts;
  p.horizon_ms = static_cast<double>(counts.size()) * 1000.0;
  for (std::size_t s = 0; s < counts.size(); ++s) {
    if (counts[s] < 0) fail(TraceError::Code::ParseError, "negative arrival count");
    spread_uniform(p.timestamps_ms, s, counts[s]);
  }
  return p;
}

ArrivalProcess parse_trace_text(const std::string& text, TraceFormat format) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;

  auto next_line = [&](std::string& out) {
    while (std::getline(in, line)) {
      ++line_no;
      out = trim(line);
      if (!out.empty()) return true;
    }
    return false;
  };

  std::string header;
  if (!next_line(header)) fail(TraceError::Code::ParseError, "empty trace file");

  if (format == TraceFormat::AggregateCsv) {
    if (header != "second,count")
      fail(TraceError::Code::ParseError, "line 1: expected header 'second,count'");
    std::vector<std::pair<std::int64_t, std::int64_t>> rows;
    std::string row;
    while (next_line(row)) {
      std::int64_t sec, count;
      char comma;
      std::istringstream ls(row);
      if (!(ls >> sec >> comma >> count) || comma != ',')
        fail(TraceError::Code::ParseError, "line " + std::to_string(line_no) + ": expected 'second,count'");
      if (sec < 0 || count < 0)
        fail(TraceError::Code::ParseError, "line " + std::to_string(line_no) + ": negative value");
      rows.emplace_back(sec, count);
    }
    if (rows.empty()) fail(TraceError::Code::ParseError, "trace has no data rows");
    std::int64_t max_sec = 0;
    for (auto& [s, c] : rows) max_sec = std::max(max_sec, s);
    std::vector<std::int64_t> counts(static_cast<std::size_t>(max_sec) + 1, 0);
    for (auto& [s, c] : rows) counts[static_cast<std::size_t>(s)] += c;
    return expand_aggregate(counts);
  }

  if (header != "timestamp_ms")
    fail(TraceError::Code::ParseError, "line 1: expected header 'timestamp_ms'");
  ArrivalProcess p;
  p.kind = ArrivalKind::TraceTimestamps;
  std::string row;
  while (next_line(row)) {
    std::istringstream ls(row);
    double t;
    if (!(ls >> t) || t < 0.0)
      fail(TraceError::Code::ParseError, "line " + std::to_string(line_no) + ": expected timestamp_ms");
    if (!p.timestamps_ms.empty() && t < p.timestamps_ms.back())
      fail(TraceError::Code::NonMonotonicTimestamps,
           "line " + std::to_string(line_no) + ": timestamps must be nondecreasing");
    p.timestamps_ms.push_back(t);
  }
  if (p.timestamps_ms.empty()) fail(TraceError::Code::ParseError, "trace has no data rows");
  p.horizon_ms = std::ceil(p.timestamps_ms.back() / 1000.0) * 1000.0;
  if (p.horizon_ms <= p.timestamps_ms.back()) p.horizon_ms += 1000.0;
  p.per_second = bucket_per_second(p.timestamps_ms, p.horizon_ms);
  return p;
}

ArrivalProcess load_trace(const std::string& path, TraceFormat format) {
  std::ifstream in(path);
  if (!in) fail(TraceError::Code::Io, "cannot open trace: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_trace_text(ss.str(), format);
}

ArrivalProcess scale_trace(const ArrivalProcess& p, double target_peak_qps) {
  const double peak = p.peak_qps();
  if (peak <= 0.0) fail(TraceError::Code::ZeroPeak, "trace peak is zero, cannot scale");
  if (target_peak_qps < 0.0) fail(TraceError::Code::BadParams, "negative target peak");
  const double factor = target_peak_qps / peak;

  std::vector<double> exact(p.per_second.size());
  double exact_total = 0.0;
  for (std::size_t s = 0; s < p.per_second.size(); ++s) {
    exact[s] = static_cast<double>(p.per_second[s]) * factor;
    exact_total += exact[s];
  }

  std::vector<std::int64_t> counts(exact.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::int64_t floored_total = 0;
  for (std::size_t s = 0; s < exact.size(); ++s) {
    counts[s] = static_cast<std::int64_t>(std::floor(exact[s] + 1e-9));
    floored_total += counts[s];
    remainders.emplace_back(exact[s] - static_cast<double>(counts[s]), s);
  }
  std::int64_t want = std::llround(exact_total);
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; i < remainders.size() && floored_total < want; ++i) {
    ++counts[remainders[i].second];
    ++floored_total;
  }
  return expand_aggregate(counts);
}

ArrivalProcess synth_poisson(double rate_qps, double horizon_s, std::uint64_t seed) {
  if (rate_qps < 0.0 || horizon_s <= 0.0) fail(TraceError::Code::BadParams, "poisson: bad rate/horizon");
  ArrivalProcess p;
  p.kind = ArrivalKind::Poisson;
  p.horizon_ms = horizon_s * 1000.0;
  Rng rng(RngStreams::derive(seed, 0x706f6973ULL));
  if (rate_qps > 0.0) {
    double t = rng.exponential(rate_qps) * 1000.0;
    while (t < p.horizon_ms) {
      p.timestamps_ms.push_back(t);
      t += rng.exponential(rate_qps) * 1000.0;
    }
  }
  p.per_second = bucket_per_second(p.timestamps_ms, p.horizon_ms);
  return p;
}

ArrivalProcess synth_ramp(double start_qps, double end_qps, double duration_s, std::uint64_t seed) {
  if (start_qps < 0.0 || end_qps < 0.0 || duration_s <= 0.0)
    fail(TraceError::Code::BadParams, "ramp: bad parameters");
  ArrivalProcess p;
  p.kind = ArrivalKind::Ramp;
  const auto seconds = static_cast<std::size_t>(std::ceil(duration_s));
  p.horizon_ms = static_cast<double>(seconds) * 1000.0;
  Rng rng(RngStreams::derive(seed, 0x72616d70ULL));
  p.per_second.resize(seconds);
  for (std::size_t s = 0; s < seconds; ++s) {
    const double frac = (static_cast<double>(s) + 0.5) / duration_s;
    const double rate = start_qps + (end_qps - start_qps) * std::min(1.0, frac);
    p.per_second[s] = rng.poisson(rate);
    spread_uniform(p.timestamps_ms, s, p.per_second[s]);
  }
  return p;
}

ArrivalProcess synth_step(const std::vector<double>& levels_qps, double level_duration_s) {
  if (levels_qps.empty() || level_duration_s <= 0.0) fail(TraceError::Code::BadParams, "step: bad parameters");
  std::vector<std::int64_t> counts;
  for (double level : levels_qps) {
    if (level < 0.0) fail(TraceError::Code::BadParams, "step: negative level");
    const auto seconds = static_cast<std::size_t>(std::llround(level_duration_s));
    for (std::size_t s = 0; s < seconds; ++s) counts.push_back(std::llround(level));
  }
  ArrivalProcess p = expand_aggregate(counts);
  p.kind = ArrivalKind::Step;
  return p;
}

}  // namespace pipescale
