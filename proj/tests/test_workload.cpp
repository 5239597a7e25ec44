#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "pipescale/workload.hpp"

using namespace pipescale;

TEST_CASE("aggregate expansion spreads arrivals uniformly within the second") {
  ArrivalProcess p = expand_aggregate({2, 0});
  REQUIRE(p.timestamps_ms.size() == 2);
  CHECK(p.timestamps_ms[0] == doctest::Approx(250.0));
  CHECK(p.timestamps_ms[1] == doctest::Approx(750.0));
  CHECK(p.horizon_ms == doctest::Approx(2000.0));
}

TEST_CASE("trace parsing") {
  SUBCASE("aggregate csv") {
    ArrivalProcess p = parse_trace_text("second,count\n0,2\n1,0\n", TraceFormat::AggregateCsv);
    CHECK(p.total() == 2);
    CHECK(p.per_second == std::vector<std::int64_t>{2, 0});
  }
  SUBCASE("empty file") {
    CHECK_THROWS_AS(parse_trace_text("", TraceFormat::AggregateCsv), TraceError);
  }
  SUBCASE("bad row reports its line number") {
    try {
      parse_trace_text("second,count\n0,2\nnot-a-row\n", TraceFormat::AggregateCsv);
      FAIL("expected ParseError");
    } catch (const TraceError& e) {
      CHECK(e.code() == TraceError::Code::ParseError);
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
  SUBCASE("timestamp csv keeps rows verbatim") {
    ArrivalProcess p = parse_trace_text("timestamp_ms\n10\n20\n4000\n", TraceFormat::TimestampCsv);
    REQUIRE(p.total() == 3);
    CHECK(p.timestamps_ms[2] == doctest::Approx(4000.0));
  }
  SUBCASE("non-monotonic timestamps rejected") {
    try {
      parse_trace_text("timestamp_ms\n10\n5\n", TraceFormat::TimestampCsv);
      FAIL("expected NonMonotonicTimestamps");
    } catch (const TraceError& e) {
      CHECK(e.code() == TraceError::Code::NonMonotonicTimestamps);
    }
  }
}

TEST_CASE("shape-preserving scaling") {
  SUBCASE("linear scaling of [1,2,3] to peak 30") {
    ArrivalProcess p = expand_aggregate({1, 2, 3});
    ArrivalProcess scaled = scale_trace(p, 30.0);
    CHECK(scaled.per_second == std::vector<std::int64_t>{10, 20, 30});
  }
  SUBCASE("identity") {
    ArrivalProcess p = expand_aggregate({10, 10, 10});
    ArrivalProcess scaled = scale_trace(p, 10.0);
    CHECK(scaled.per_second == p.per_second);
    CHECK(scaled.timestamps_ms == p.timestamps_ms);
  }
  SUBCASE("halving") {
    ArrivalProcess p = expand_aggregate({100, 50, 80});
    ArrivalProcess scaled = scale_trace(p, 50.0);
    CHECK(scaled.per_second == std::vector<std::int64_t>{50, 25, 40});
  }
  SUBCASE("zero peak") {
    ArrivalProcess p = expand_aggregate({0, 0});
    CHECK_THROWS_AS(scale_trace(p, 10.0), TraceError);
  }
  SUBCASE("scaling twice equals scaling once, within one arrival per second") {
    ArrivalProcess p = expand_aggregate({7, 13, 29, 5, 17});
    ArrivalProcess twice = scale_trace(scale_trace(p, 20.0), 9.0);
    ArrivalProcess once = scale_trace(p, 9.0);
    REQUIRE(twice.per_second.size() == once.per_second.size());
    for (std::size_t s = 0; s < once.per_second.size(); ++s)
      CHECK(std::abs(twice.per_second[s] - once.per_second[s]) <= 1);
  }
}

TEST_CASE("expansion then re-aggregation is exact") {
  const std::vector<std::int64_t> counts{3, 0, 7, 1, 12};
  ArrivalProcess p = expand_aggregate(counts);
  std::vector<std::int64_t> rebucketed(counts.size(), 0);
  for (double t : p.timestamps_ms) ++rebucketed[static_cast<std::size_t>(t / 1000.0)];
  CHECK(rebucketed == counts);
}

TEST_CASE("poisson synthesis") {
  ArrivalProcess p = synth_poisson(100.0, 100.0, 42);
  const double n = static_cast<double>(p.total());
  CHECK(std::abs(n - 10'000.0) <= 3.0 * std::sqrt(10'000.0));

  ArrivalProcess again = synth_poisson(100.0, 100.0, 42);
  CHECK(p.timestamps_ms == again.timestamps_ms);

  ArrivalProcess other = synth_poisson(100.0, 100.0, 43);
  CHECK(p.timestamps_ms != other.timestamps_ms);
}

TEST_CASE("ramp synthesis hits the midpoint rate") {
  ArrivalProcess p = synth_ramp(0.0, 100.0, 100.0, 7);
  const double mid = static_cast<double>(p.per_second[50]);
  CHECK(std::abs(mid - 50.5) <= 3.0 * std::sqrt(50.5) + 1.0);
  CHECK(p.horizon_ms == doctest::Approx(100'000.0));
}

TEST_CASE("step synthesis is the exact aggregate expansion") {
  ArrivalProcess p = synth_step({5.0}, 10.0);
  ArrivalProcess expected = expand_aggregate(std::vector<std::int64_t>(10, 5));
  CHECK(p.timestamps_ms == expected.timestamps_ms);
  CHECK(p.total() == 50);
}

TEST_CASE("bad synth parameters") {
  CHECK_THROWS_AS(synth_poisson(-1.0, 10.0, 1), TraceError);
  CHECK_THROWS_AS(synth_ramp(0.0, 10.0, 0.0, 1), TraceError);
  CHECK_THROWS_AS(synth_step({}, 10.0), TraceError);
}
