#pragma once

#include <string>

#include "pipescale/allocator.hpp"
#include "pipescale/pipeline.hpp"

namespace fixtures {

// Two-task chain A->B with two variants per task; profiles chosen so the
// hardware-scaling phase ends at exactly 40 qps and the accuracy-scaling
// phase at 200 qps.
inline const char* kTiny1Json = R"json({
  "tasks": [
    {"id": "A", "variants": [
      {"id": "a1", "accuracy": 1.0, "mult_factor": 2.0, "throughput": {"1": 10, "4": 20}},
      {"id": "a2", "accuracy": 0.8, "mult_factor": 1.0, "throughput": {"1": 40, "4": 80}}
    ]},
    {"id": "B", "variants": [
      {"id": "b1", "accuracy": 1.0, "mult_factor": 0.0, "throughput": {"1": 20, "4": 40}},
      {"id": "b2", "accuracy": 0.7, "mult_factor": 0.0, "throughput": {"1": 100, "4": 200}}
    ]}
  ],
  "edges": [{"from": "A", "to": "B", "branch_ratio": 1.0}],
  "path_accuracy": [
    {"path": ["a1", "b1"], "acc": 1.0},
    {"path": ["a1", "b2"], "acc": 0.75},
    {"path": ["a2", "b1"], "acc": 0.78},
    {"path": ["a2", "b2"], "acc": 0.6}
  ]
})json";

inline pipescale::LoadedPipeline tiny1() { return pipescale::load_pipeline_spec_text(kTiny1Json); }

inline pipescale::ClusterConfig tiny1_cluster() {
  pipescale::ClusterConfig cfg;
  cfg.worker_count = 4;
  cfg.slo_ms = 600.0;
  cfg.comm_latency_ms = 0.0;
  cfg.allowed_batches = {1, 4};
  return cfg;
}

}  // namespace fixtures
