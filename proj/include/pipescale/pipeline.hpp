#pragma once

#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pipescale {

using TaskIndex = int;
using VertexIndex = int;  // index into AugmentedGraph::profiles, one per (task, variant)
using PathIndex = int;

class PipelineError : public std::runtime_error {
 public:
  enum class Code {
    NotATree,
    UnknownTaskRef,
    BranchRatioOutOfRange,
    TaskWithoutVariants,
    VertexNotOnPath,
    MissingBatchChoice,
    BatchNotProfiled,
    BadProfile,
    MissingPathAccuracy,
    AccuracyNotMonotone,
    ParseError,
  };

  PipelineError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

struct PipelineEdge {
  TaskIndex parent = -1;
  TaskIndex child = -1;
  double branch_ratio = 1.0;
};

// Directed rooted tree of tasks. Task indices follow a fixed topological
// order (parents before children, ties by declaration order), so iterating
// 0..task_count() visits parents first.
struct PipelineGraph {
  std::vector<std::string> task_ids;
  std::vector<PipelineEdge> edges;             // in declaration order
  TaskIndex root = -1;
  std::vector<std::vector<int>> child_edges;   // per task: edge indices, declaration order
  std::vector<int> parent_edge;                // per task: incoming edge index, -1 for root

  int task_count() const { return static_cast<int>(task_ids.size()); }
  bool is_sink(TaskIndex t) const { return child_edges[t].empty(); }
  std::vector<TaskIndex> sinks() const;
  TaskIndex task_index(const std::string& id) const;  // -1 if unknown

  // Longest root-to-sink path length, in tasks, over paths through t.
  int max_hops_through(TaskIndex t) const;
  int depth(TaskIndex t) const;  // tasks on the root->t path, root = 1
};

struct TaskDecl {
  std::string id;
};
struct EdgeDecl {
  std::string from;
  std::string to;
  double branch_ratio = 1.0;
};

// Validates tree shape (single root, single parent, no cycles) and branch
// ratios, and fixes the canonical task order.
PipelineGraph build_pipeline(const std::vector<TaskDecl>& tasks, const std::vector<EdgeDecl>& edges);

struct VariantProfile {
  TaskIndex task = -1;
  std::string id;
  double accuracy = 0.0;
  std::map<int, double> throughput;  // batch size -> queries/second
  double mult_factor = 0.0;          // outgoing intermediate queries per incoming query

  double qps_at(int batch) const;                  // throws BatchNotProfiled
  double batch_latency_ms(int batch) const { return 1000.0 * batch / qps_at(batch); }
  double max_qps() const;                          // at the largest profiled batch
  void validate() const;                           // batching profile sanity
};

struct VariantPath {
  std::vector<VertexIndex> vertices;  // root-task variant first, sink-task variant last
  TaskIndex sink = -1;
  double profiled_accuracy = -1.0;    // end-to-end accuracy, set by attach_path_accuracy
};

// Variant-level expansion of the pipeline graph. Vertices are (task, variant)
// pairs identified by their index into `profiles`; root-to-sink paths are
// enumerated in a fixed lexicographic order (task order, then variant
// declaration order, earlier tasks most significant).
struct AugmentedGraph {
  PipelineGraph graph;
  std::vector<VariantProfile> profiles;          // grouped by task, declaration order within a task
  std::vector<std::vector<VertexIndex>> task_variants;  // per task
  std::vector<std::pair<VertexIndex, VertexIndex>> edges;
  std::vector<VariantPath> paths;
  std::vector<std::vector<PathIndex>> paths_through;    // per vertex

  int vertex_count() const { return static_cast<int>(profiles.size()); }
  int path_count() const { return static_cast<int>(paths.size()); }
  const VariantProfile& profile(VertexIndex v) const { return profiles[v]; }
  VertexIndex vertex_index(const std::string& variant_id) const;  // -1 if unknown

  // Product of branch ratios on the root->sink task path.
  double sink_share(TaskIndex sink) const;
  double total_sink_share() const;

  // Accuracy of the path matching this exact vertex sequence; -1 if none.
  PathIndex path_for(std::span<const VertexIndex> vertices) const;
};

AugmentedGraph build_augmented_graph(const PipelineGraph& graph, std::vector<VariantProfile> profiles);

struct PathAccuracyEntry {
  std::vector<std::string> variant_ids;  // root to sink
  double accuracy = 0.0;
};

// Every enumerated path must get a profiled accuracy; the table must be
// monotone in single-variant accuracy (replacing one variant with a more
// accurate one never lowers the end-to-end value).
void attach_path_accuracy(AugmentedGraph& ag, const std::vector<PathAccuracyEntry>& entries);
void validate_accuracy_monotone(const AugmentedGraph& ag);

// m(p, v): requests arriving at v per request entering the path, i.e. the
// product of mult_factor * branch_ratio over the strict predecessors of v on
// p. `mult_factors` overrides the profiled factors when non-empty (indexed by
// vertex).
double path_multiplier(const AugmentedGraph& ag, const VariantPath& path, VertexIndex target,
                       std::span<const double> mult_factors = {});

// Sum of batch latencies along the path for the given per-vertex batch choice.
double path_latency_ms(const AugmentedGraph& ag, const VariantPath& path,
                       const std::map<VertexIndex, int>& batch_choice);

// PipelineSpecFile loader (JSON, see README for the schema).
struct LoadedPipeline {
  AugmentedGraph aug;
};
LoadedPipeline load_pipeline_spec_file(const std::string& path);
LoadedPipeline load_pipeline_spec_text(const std::string& json_text);

}  // namespace pipescale
