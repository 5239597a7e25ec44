#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <map>

#include "pipescale/pipeline.hpp"
#include "pipescale/rng.hpp"
#include "support/fixtures.hpp"

using namespace pipescale;

namespace {

VariantProfile make_profile(TaskIndex task, const std::string& id, double acc, double r,
                            std::map<int, double> q) {
  VariantProfile p;
  p.task = task;
  p.id = id;
  p.accuracy = acc;
  p.mult_factor = r;
  p.throughput = std::move(q);
  return p;
}

}  // namespace

TEST_CASE("tiny1 builds as a rooted chain") {
  auto lp = fixtures::tiny1();
  const auto& g = lp.aug.graph;
  CHECK(g.task_count() == 2);
  CHECK(g.task_ids[g.root] == "A");
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0].branch_ratio == 1.0);
  CHECK(g.sinks() == std::vector<TaskIndex>{1});
}

TEST_CASE("cycles, multi-parents and bad refs are rejected") {
  std::vector<TaskDecl> tasks{{"A"}, {"B"}};
  SUBCASE("cycle") {
    std::vector<EdgeDecl> edges{{"A", "B", 1.0}, {"B", "A", 1.0}};
    CHECK_THROWS_WITH_AS(build_pipeline(tasks, edges), doctest::Contains("root"), PipelineError);
  }
  SUBCASE("multi-parent") {
    std::vector<TaskDecl> three{{"A"}, {"B"}, {"C"}};
    std::vector<EdgeDecl> edges{{"A", "C", 1.0}, {"B", "C", 1.0}};
    CHECK_THROWS_AS(build_pipeline(three, edges), PipelineError);
  }
  SUBCASE("unknown task") {
    std::vector<EdgeDecl> edges{{"A", "Z", 1.0}};
    try {
      build_pipeline(tasks, edges);
      FAIL("expected UnknownTaskRef");
    } catch (const PipelineError& e) {
      CHECK(e.code() == PipelineError::Code::UnknownTaskRef);
    }
  }
  SUBCASE("branch ratio out of range") {
    std::vector<EdgeDecl> edges{{"A", "B", 1.5}};
    try {
      build_pipeline(tasks, edges);
      FAIL("expected BranchRatioOutOfRange");
    } catch (const PipelineError& e) {
      CHECK(e.code() == PipelineError::Code::BranchRatioOutOfRange);
    }
  }
}

TEST_CASE("three-task tree with fan-out") {
  std::vector<TaskDecl> tasks{{"A"}, {"B"}, {"C"}};
  std::vector<EdgeDecl> edges{{"A", "B", 0.6}, {"A", "C", 0.8}};
  PipelineGraph g = build_pipeline(tasks, edges);
  auto sinks = g.sinks();
  CHECK(sinks.size() == 2);
  CHECK(g.task_ids[g.root] == "A");
}

TEST_CASE("augmented graph counts") {
  SUBCASE("tiny1 chain: 2x2") {
    auto lp = fixtures::tiny1();
    CHECK(lp.aug.vertex_count() == 4);
    CHECK(lp.aug.edges.size() == 4);
    CHECK(lp.aug.path_count() == 4);
  }
  SUBCASE("single task, 3 variants") {
    PipelineGraph g = build_pipeline({{"A"}}, {});
    std::vector<VariantProfile> profiles{
        make_profile(0, "v1", 1.0, 0.0, {{1, 10.0}}),
        make_profile(0, "v2", 0.9, 0.0, {{1, 20.0}}),
        make_profile(0, "v3", 0.8, 0.0, {{1, 30.0}}),
    };
    AugmentedGraph ag = build_augmented_graph(g, profiles);
    CHECK(ag.vertex_count() == 3);
    CHECK(ag.edges.empty());
    CHECK(ag.path_count() == 3);
  }
  SUBCASE("tree A(2) -> {B(2), C(3)} has 2*2 + 2*3 paths") {
    PipelineGraph g = build_pipeline({{"A"}, {"B"}, {"C"}}, {{"A", "B", 1.0}, {"A", "C", 1.0}});
    std::vector<VariantProfile> profiles;
    for (int k = 0; k < 2; ++k) profiles.push_back(make_profile(0, "a" + std::to_string(k), 1.0 - 0.1 * k, 1.0, {{1, 10.0}}));
    for (int k = 0; k < 2; ++k) profiles.push_back(make_profile(1, "b" + std::to_string(k), 1.0 - 0.1 * k, 0.0, {{1, 10.0}}));
    for (int k = 0; k < 3; ++k) profiles.push_back(make_profile(2, "c" + std::to_string(k), 1.0 - 0.1 * k, 0.0, {{1, 10.0}}));
    AugmentedGraph ag = build_augmented_graph(g, profiles);
    CHECK(ag.path_count() == 10);
  }
  SUBCASE("task without variants") {
    PipelineGraph g = build_pipeline({{"A"}, {"B"}}, {{"A", "B", 1.0}});
    std::vector<VariantProfile> profiles{make_profile(0, "a", 1.0, 1.0, {{1, 10.0}})};
    CHECK_THROWS_AS(build_augmented_graph(g, profiles), PipelineError);
  }
}

TEST_CASE("path count formula matches exhaustive enumeration on random trees") {
  Rng rng(1234);
  for (int trial = 0; trial < 40; ++trial) {
    const int n_tasks = 1 + static_cast<int>(rng.pick_index(5));
    std::vector<TaskDecl> tasks;
    std::vector<EdgeDecl> edges;
    for (int i = 0; i < n_tasks; ++i) tasks.push_back({"t" + std::to_string(i)});
    for (int i = 1; i < n_tasks; ++i) {
      const int parent = static_cast<int>(rng.pick_index(i));
      edges.push_back({"t" + std::to_string(parent), "t" + std::to_string(i), 1.0});
    }
    std::vector<int> n_variants(n_tasks);
    std::vector<VariantProfile> profiles;
    PipelineGraph g = build_pipeline(tasks, edges);
    for (int i = 0; i < n_tasks; ++i) {
      n_variants[i] = 1 + static_cast<int>(rng.pick_index(3));
      for (int k = 0; k < n_variants[i]; ++k)
        profiles.push_back(make_profile(g.task_index("t" + std::to_string(i)),
                                        "t" + std::to_string(i) + "v" + std::to_string(k), 1.0 - 0.05 * k,
                                        1.0, {{1, 10.0}}));
    }
    AugmentedGraph ag = build_augmented_graph(g, profiles);

    // Independent count: product of variant counts along each root-to-sink
    // task path, summed over sinks.
    std::int64_t expected = 0;
    for (TaskIndex s : g.sinks()) {
      std::int64_t prod = 1;
      TaskIndex t = s;
      while (true) {
        prod *= static_cast<std::int64_t>(ag.task_variants[t].size());
        if (g.parent_edge[t] < 0) break;
        t = g.edges[g.parent_edge[t]].parent;
      }
      expected += prod;
    }
    CHECK(ag.path_count() == expected);
  }
}

TEST_CASE("path enumeration is deterministic") {
  auto a = fixtures::tiny1();
  auto b = fixtures::tiny1();
  REQUIRE(a.aug.path_count() == b.aug.path_count());
  for (PathIndex p = 0; p < a.aug.path_count(); ++p) CHECK(a.aug.paths[p].vertices == b.aug.paths[p].vertices);
}

TEST_CASE("path multipliers") {
  auto lp = fixtures::tiny1();
  const auto& ag = lp.aug;
  const VertexIndex a1 = ag.vertex_index("a1");
  const VertexIndex b1 = ag.vertex_index("b1");
  PathIndex p = ag.path_for(std::vector<VertexIndex>{a1, b1});
  REQUIRE(p >= 0);

  CHECK(path_multiplier(ag, ag.paths[p], a1) == doctest::Approx(1.0));
  CHECK(path_multiplier(ag, ag.paths[p], b1) == doctest::Approx(2.0));
  const VertexIndex b2 = ag.vertex_index("b2");
  CHECK_THROWS_AS(path_multiplier(ag, ag.paths[p], b2), PipelineError);

  SUBCASE("three-hop chain") {
    PipelineGraph g = build_pipeline({{"X"}, {"Y"}, {"Z"}}, {{"X", "Y", 1.0}, {"Y", "Z", 1.0}});
    std::vector<VariantProfile> profiles{
        make_profile(0, "x", 1.0, 2.0, {{1, 10.0}}),
        make_profile(1, "y", 1.0, 1.5, {{1, 10.0}}),
        make_profile(2, "z", 1.0, 0.0, {{1, 10.0}}),
    };
    AugmentedGraph chain = build_augmented_graph(g, profiles);
    REQUIRE(chain.path_count() == 1);
    CHECK(path_multiplier(chain, chain.paths[0], 2) == doctest::Approx(3.0));
  }

  SUBCASE("sink multiplier equals forward propagation on random chains") {
    Rng rng(777);
    for (int trial = 0; trial < 25; ++trial) {
      const int len = 2 + static_cast<int>(rng.pick_index(4));
      std::vector<TaskDecl> tasks;
      std::vector<EdgeDecl> edges;
      std::vector<VariantProfile> profiles;
      for (int i = 0; i < len; ++i) {
        tasks.push_back({"t" + std::to_string(i)});
        if (i > 0)
          edges.push_back({"t" + std::to_string(i - 1), "t" + std::to_string(i), 0.25 + 0.75 * rng.next_double()});
      }
      PipelineGraph g = build_pipeline(tasks, edges);
      for (int i = 0; i < len; ++i)
        profiles.push_back(make_profile(i, "v" + std::to_string(i), 1.0, 0.2 + 2.0 * rng.next_double(),
                                        {{1, 10.0}}));
      AugmentedGraph chain = build_augmented_graph(g, profiles);
      REQUIRE(chain.path_count() == 1);
      double forward = 1.0;
      for (int i = 0; i + 1 < len; ++i)
        forward *= chain.profiles[chain.paths[0].vertices[i]].mult_factor * g.edges[i].branch_ratio;
      CHECK(path_multiplier(chain, chain.paths[0], chain.paths[0].vertices.back()) ==
            doctest::Approx(forward));
    }
  }
}

TEST_CASE("path latency") {
  auto lp = fixtures::tiny1();
  const auto& ag = lp.aug;
  const VertexIndex a1 = ag.vertex_index("a1");
  const VertexIndex a2 = ag.vertex_index("a2");
  const VertexIndex b1 = ag.vertex_index("b1");
  const VertexIndex b2 = ag.vertex_index("b2");

  PathIndex p11 = ag.path_for(std::vector<VertexIndex>{a1, b1});
  CHECK(path_latency_ms(ag, ag.paths[p11], {{a1, 4}, {b1, 4}}) == doctest::Approx(300.0));

  PathIndex p22 = ag.path_for(std::vector<VertexIndex>{a2, b2});
  CHECK(path_latency_ms(ag, ag.paths[p22], {{a2, 1}, {b2, 1}}) == doctest::Approx(35.0));

  CHECK_THROWS_AS(path_latency_ms(ag, ag.paths[p11], {{a1, 4}}), PipelineError);
  CHECK_THROWS_AS(path_latency_ms(ag, ag.paths[p11], {{a1, 2}, {b1, 4}}), PipelineError);

  SUBCASE("single vertex") {
    PipelineGraph g = build_pipeline({{"A"}}, {});
    AugmentedGraph one = build_augmented_graph(g, {make_profile(0, "v", 1.0, 0.0, {{1, 100.0}})});
    CHECK(path_latency_ms(one, one.paths[0], {{0, 1}}) == doctest::Approx(10.0));
  }
}

TEST_CASE("profile and accuracy-table validation") {
  SUBCASE("throughput must not decrease with batch size") {
    auto p = make_profile(0, "bad", 1.0, 0.0, {{1, 100.0}, {4, 50.0}});
    CHECK_THROWS_AS(p.validate(), PipelineError);
  }
  SUBCASE("batch latency must not decrease with batch size") {
    auto p = make_profile(0, "bad", 1.0, 0.0, {{1, 10.0}, {4, 100.0}});
    CHECK_THROWS_AS(p.validate(), PipelineError);
  }
  SUBCASE("missing path accuracy is a load error") {
    std::string text = fixtures::kTiny1Json;
    auto pos = text.find(R"({"path": ["a2", "b2"], "acc": 0.6})");
    REQUIRE(pos != std::string::npos);
    text.erase(pos, std::string(R"({"path": ["a2", "b2"], "acc": 0.6})").size());
    auto comma = text.rfind(',', pos);
    text.erase(comma, 1);
    CHECK_THROWS_AS(load_pipeline_spec_text(text), PipelineError);
  }
  SUBCASE("non-monotone path accuracy is a load error") {
    std::string text = fixtures::kTiny1Json;
    // a1 is strictly more accurate than a2, so A(a1,b1) may not fall below
    // A(a2,b1).
    auto pos = text.find(R"({"path": ["a1", "b1"], "acc": 1.0})");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, std::string(R"({"path": ["a1", "b1"], "acc": 1.0})").size(),
                 R"({"path": ["a1", "b1"], "acc": 0.5})");
    try {
      load_pipeline_spec_text(text);
      FAIL("expected AccuracyNotMonotone");
    } catch (const PipelineError& e) {
      CHECK(e.code() == PipelineError::Code::AccuracyNotMonotone);
    }
  }
}
