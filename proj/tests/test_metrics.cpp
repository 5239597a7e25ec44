#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pipescale/metrics.hpp"
#include "pipescale/simulator.hpp"
#include "pipescale/workload.hpp"
#include "support/fixtures.hpp"

using namespace pipescale;

namespace {

RunLog synthetic_log(std::int64_t arrivals, std::int64_t dropped, std::int64_t late, double accuracy,
                     double horizon_s = 10.0) {
  RunLog log;
  log.horizon_ms = horizon_s * 1000.0;
  log.cluster_size = 4;
  log.seed = 1;
  log.config_digest = "deadbeef";
  log.plan_segments.push_back({0.0, 2, PlanMode::HardwareScaling});
  for (std::int64_t i = 0; i < arrivals; ++i) {
    RootOutcome r;
    r.arrival_ms = static_cast<double>(i % static_cast<std::int64_t>(horizon_s)) * 1000.0 + 100.0;
    if (i < dropped) {
      r.state = RootState::Dropped;
      r.resolve_ms = r.arrival_ms + 50.0;
    } else {
      r.state = RootState::Completed;
      r.resolve_ms = r.arrival_ms + 200.0;
      r.late = i < dropped + late;
      r.accuracy = accuracy;
    }
    log.roots.push_back(r);
  }
  return log;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("summary metric definitions") {
  SUBCASE("clean run") {
    SimResult r = finalize(synthetic_log(100, 0, 0, 1.0));
    CHECK(r.summary.slo_violation_ratio == doctest::Approx(0.0));
    CHECK(r.summary.system_accuracy == doctest::Approx(1.0));
  }
  SUBCASE("drops and late completions both violate") {
    SimResult r = finalize(synthetic_log(100, 10, 5, 0.9));
    CHECK(r.summary.slo_violation_ratio == doctest::Approx(0.15));
    CHECK(r.summary.completed == 90);
    CHECK(r.summary.dropped == 10);
    CHECK(r.summary.late == 5);
  }
  SUBCASE("plan-based utilization") {
    SimResult r = finalize(synthetic_log(10, 0, 0, 1.0));
    CHECK(r.summary.cluster_utilization == doctest::Approx(0.5));  // 2 of 4 workers throughout
  }
}

TEST_CASE("per-second violation ratios weighted by arrivals average to the summary") {
  auto pipeline = fixtures::tiny1();
  SimConfig cfg;
  cfg.pipeline = &pipeline.aug;
  cfg.cluster = fixtures::tiny1_cluster();
  cfg.arrivals = synth_poisson(120.0, 30.0, 77);
  cfg.seed = 77;
  SimResult r = run(cfg);

  double weighted = 0.0, arrivals = 0.0;
  for (const auto& row : r.series) {
    weighted += row.violation_ratio * row.demand_qps;
    arrivals += row.demand_qps;
  }
  // The series only covers resolved requests; in-flight roots never enter any
  // numerator, so rescale by the resolved share.
  const double resolved_ratio =
      weighted / arrivals *
      (arrivals / static_cast<double>(r.summary.arrivals));
  CHECK(resolved_ratio * static_cast<double>(r.summary.arrivals) ==
        doctest::Approx(static_cast<double>(r.summary.late + r.summary.dropped)).epsilon(1e-9));
}

TEST_CASE("summary recomputed independently from the raw log") {
  auto pipeline = fixtures::tiny1();
  SimConfig cfg;
  cfg.pipeline = &pipeline.aug;
  cfg.cluster = fixtures::tiny1_cluster();
  cfg.arrivals = synth_poisson(90.0, 25.0, 13);
  cfg.seed = 13;
  SimArtifacts art = simulate(cfg);
  SimResult r = finalize(art.log);

  std::int64_t late = 0, dropped = 0;
  for (const auto& root : art.log.roots) {
    if (root.state == RootState::Dropped) ++dropped;
    if (root.state == RootState::Completed && root.late) ++late;
  }
  CHECK(r.summary.slo_violation_ratio ==
        doctest::Approx(static_cast<double>(late + dropped) / static_cast<double>(art.log.roots.size()))
            .epsilon(1e-12));
}

TEST_CASE("output files") {
  const auto dir = std::filesystem::temp_directory_path() / "pipescale_metrics_test";
  std::filesystem::remove_all(dir);

  SUBCASE("row count equals horizon seconds; reruns are byte-identical") {
    SimResult r = finalize(synthetic_log(40, 4, 2, 0.8, 10.0));
    write_outputs(r, (dir / "a").string());
    write_outputs(r, (dir / "b").string());
    const std::string csv_a = slurp(dir / "a" / "timeseries.csv");
    CHECK(csv_a == slurp(dir / "b" / "timeseries.csv"));
    CHECK(slurp(dir / "a" / "summary.json") == slurp(dir / "b" / "summary.json"));

    std::int64_t lines = 0;
    for (char ch : csv_a)
      if (ch == '\n') ++lines;
    CHECK(lines == 11);  // header + 10 seconds
    CHECK(csv_a.rfind("second,demand_qps,served_qps,violation_ratio,accuracy,utilization,mode", 0) == 0);
  }

  SUBCASE("empty run writes a header-only csv and null metrics") {
    RunLog log;
    log.horizon_ms = 0.0;
    log.cluster_size = 4;
    SimResult r = finalize(log);
    write_outputs(r, (dir / "empty").string());
    const std::string csv = slurp(dir / "empty" / "timeseries.csv");
    std::int64_t lines = 0;
    for (char ch : csv)
      if (ch == '\n') ++lines;
    CHECK(lines == 1);
    const std::string summary = slurp(dir / "empty" / "summary.json");
    CHECK(summary.find("\"system_accuracy\": null") != std::string::npos);
  }

  SUBCASE("io errors are reported") {
    SimResult r = finalize(synthetic_log(5, 0, 0, 1.0));
    CHECK_THROWS_AS(write_outputs(r, "/proc/definitely/not/writable"), MetricsError);
  }

  std::filesystem::remove_all(dir);
}

TEST_CASE("max accuracy drop spans the per-second extremes") {
  RunLog log = synthetic_log(0, 0, 0, 1.0, 3.0);
  auto add = [&](double arrival_s, double acc) {
    RootOutcome r;
    r.arrival_ms = arrival_s * 1000.0;
    r.resolve_ms = r.arrival_ms + 10.0;
    r.state = RootState::Completed;
    r.accuracy = acc;
    log.roots.push_back(r);
  };
  add(0.2, 1.0);
  add(1.2, 0.8);
  add(2.2, 0.9);
  SimResult r = finalize(log);
  CHECK(r.summary.max_accuracy_drop == doctest::Approx(0.2));
}
