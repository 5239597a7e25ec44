#include "pipescale/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace pipescale {

namespace {

[[noreturn]] void fail(PipelineError::Code code, const std::string& msg) {
  throw PipelineError(code, msg);
}

}  // namespace

std::vector<TaskIndex> PipelineGraph::sinks() const {
  std::vector<TaskIndex> out;
  for (TaskIndex t = 0; t < task_count(); ++t)
    if (is_sink(t)) out.push_back(t);
  return out;
}

TaskIndex PipelineGraph::task_index(const std::string& id) const {
  for (TaskIndex t = 0; t < task_count(); ++t)
    if (task_ids[t] == id) return t;
  return -1;
}

int PipelineGraph::depth(TaskIndex t) const {
  int d = 1;
  while (parent_edge[t] >= 0) {
    t = edges[parent_edge[t]].parent;
    ++d;
  }
  return d;
}

int PipelineGraph::max_hops_through(TaskIndex t) const {
  // depth of t plus the deepest subtree below it
  int below = 0;
  std::vector<std::pair<TaskIndex, int>> stack{{t, 0}};
  while (!stack.empty()) {
    auto [cur, d] = stack.back();
    stack.pop_back();
    below = std::max(below, d);
    for (int e : child_edges[cur]) stack.emplace_back(edges[e].child, d + 1);
  }
  return depth(t) + below;
}

PipelineGraph build_pipeline(const std::vector<TaskDecl>& tasks, const std::vector<EdgeDecl>& edges) {
  if (tasks.empty()) fail(PipelineError::Code::NotATree, "pipeline has no tasks");

  std::map<std::string, int> decl_index;
  for (int i = 0; i < static_cast<int>(tasks.size()); ++i) {
    if (!decl_index.emplace(tasks[i].id, i).second)
      fail(PipelineError::Code::UnknownTaskRef, "duplicate task id: " + tasks[i].id);
  }

  struct RawEdge {
    int from, to;
    double ratio;
  };
  std::vector<RawEdge> raw;
  std::vector<int> in_degree(tasks.size(), 0);
  for (const auto& e : edges) {
    auto fi = decl_index.find(e.from);
    auto ti = decl_index.find(e.to);
    if (fi == decl_index.end()) fail(PipelineError::Code::UnknownTaskRef, "edge references unknown task: " + e.from);
    if (ti == decl_index.end()) fail(PipelineError::Code::UnknownTaskRef, "edge references unknown task: " + e.to);
    if (!(e.branch_ratio > 0.0) || e.branch_ratio > 1.0)
      fail(PipelineError::Code::BranchRatioOutOfRange,
           "branch ratio for " + e.from + "->" + e.to + " must be in (0,1]");
    raw.push_back({fi->second, ti->second, e.branch_ratio});
    in_degree[ti->second]++;
  }

  int root = -1;
  for (int i = 0; i < static_cast<int>(tasks.size()); ++i) {
    if (in_degree[i] == 0) {
      if (root >= 0) fail(PipelineError::Code::NotATree, "multiple roots: " + tasks[root].id + ", " + tasks[i].id);
      root = i;
    } else if (in_degree[i] > 1) {
      // multi-parent nodes are unsupported by design
      fail(PipelineError::Code::NotATree, "task has multiple parents: " + tasks[i].id);
    }
  }
  if (root < 0) fail(PipelineError::Code::NotATree, "no root (cycle)");

  // Kahn order with declaration-order tie breaking fixes the task order.
  std::vector<std::vector<int>> raw_children(tasks.size());
  for (int e = 0; e < static_cast<int>(raw.size()); ++e) raw_children[raw[e].from].push_back(e);

  std::vector<int> order;
  std::vector<int> ready{root};
  std::vector<bool> seen(tasks.size(), false);
  seen[root] = true;
  while (!ready.empty()) {
    std::sort(ready.begin(), ready.end());
    int cur = ready.front();
    ready.erase(ready.begin());
    order.push_back(cur);
    for (int e : raw_children[cur]) {
      int child = raw[e].to;
      if (seen[child]) fail(PipelineError::Code::NotATree, "cycle through task: " + tasks[child].id);
      seen[child] = true;
      ready.push_back(child);
    }
  }
  if (order.size() != tasks.size()) fail(PipelineError::Code::NotATree, "cycle or disconnected tasks");

  std::vector<int> new_index(tasks.size());
  for (int pos = 0; pos < static_cast<int>(order.size()); ++pos) new_index[order[pos]] = pos;

  PipelineGraph g;
  g.task_ids.resize(tasks.size());
  for (int i = 0; i < static_cast<int>(tasks.size()); ++i) g.task_ids[new_index[i]] = tasks[i].id;
  g.root = new_index[root];
  g.child_edges.assign(tasks.size(), {});
  g.parent_edge.assign(tasks.size(), -1);
  for (const auto& e : raw) {
    PipelineEdge pe{new_index[e.from], new_index[e.to], e.ratio};
    int idx = static_cast<int>(g.edges.size());
    g.edges.push_back(pe);
    g.child_edges[pe.parent].push_back(idx);
    g.parent_edge[pe.child] = idx;
  }
  return g;
}

double VariantProfile::qps_at(int batch) const {
  auto it = throughput.find(batch);
  if (it == throughput.end())
    fail(PipelineError::Code::BatchNotProfiled, "variant " + id + " has no profile for batch " + std::to_string(batch));
  return it->second;
}

double VariantProfile::max_qps() const {
  double best = 0.0;
  for (const auto& [b, q] : throughput) best = std::max(best, q);
  return best;
}

void VariantProfile::validate() const {
  if (throughput.empty()) fail(PipelineError::Code::BadProfile, "variant " + id + " has no throughput profile");
  if (accuracy < 0.0 || accuracy > 1.0)
    fail(PipelineError::Code::BadProfile, "variant " + id + " accuracy outside [0,1]");
  if (mult_factor < 0.0) fail(PipelineError::Code::BadProfile, "variant " + id + " has negative mult_factor");
  double prev_q = 0.0, prev_lat = 0.0;
  int prev_b = 0;
  for (const auto& [b, q] : throughput) {
    if (b <= 0 || !(q > 0.0)) fail(PipelineError::Code::BadProfile, "variant " + id + " has nonpositive batch/qps");
    double lat = static_cast<double>(b) / q;
    if (prev_b > 0) {
      if (q + 1e-12 < prev_q)
        fail(PipelineError::Code::BadProfile, "variant " + id + ": throughput decreases with batch size");
      if (lat + 1e-12 < prev_lat)
        fail(PipelineError::Code::BadProfile, "variant " + id + ": batch latency decreases with batch size");
    }
    prev_q = q;
    prev_lat = lat;
    prev_b = b;
  }
}

VertexIndex AugmentedGraph::vertex_index(const std::string& variant_id) const {
  for (VertexIndex v = 0; v < vertex_count(); ++v)
    if (profiles[v].id == variant_id) return v;
  return -1;
}

double AugmentedGraph::sink_share(TaskIndex sink) const {
  double share = 1.0;
  TaskIndex t = sink;
  while (graph.parent_edge[t] >= 0) {
    const auto& e = graph.edges[graph.parent_edge[t]];
    share *= e.branch_ratio;
    t = e.parent;
  }
  return share;
}

double AugmentedGraph::total_sink_share() const {
  double total = 0.0;
  for (TaskIndex s : graph.sinks()) total += sink_share(s);
  return total;
}

PathIndex AugmentedGraph::path_for(std::span<const VertexIndex> vertices) const {
  for (PathIndex p = 0; p < path_count(); ++p) {
    const auto& vs = paths[p].vertices;
    if (vs.size() == vertices.size() && std::equal(vs.begin(), vs.end(), vertices.begin())) return p;
  }
  return -1;
}

AugmentedGraph build_augmented_graph(const PipelineGraph& graph, std::vector<VariantProfile> profiles) {
  AugmentedGraph ag;
  ag.graph = graph;

  // Group variants by task, keeping declaration order within each task.
  ag.task_variants.assign(graph.task_count(), {});
  for (const auto& p : profiles) {
    if (p.task < 0 || p.task >= graph.task_count())
      fail(PipelineError::Code::UnknownTaskRef, "profile " + p.id + " references unknown task");
    p.validate();
  }
  for (TaskIndex t = 0; t < graph.task_count(); ++t) {
    for (int i = 0; i < static_cast<int>(profiles.size()); ++i) {
      if (profiles[i].task == t) {
        ag.task_variants[t].push_back(static_cast<VertexIndex>(ag.profiles.size()));
        ag.profiles.push_back(profiles[i]);
      }
    }
    if (ag.task_variants[t].empty())
      fail(PipelineError::Code::TaskWithoutVariants, "task " + graph.task_ids[t] + " has no variants");
  }

  for (const auto& e : graph.edges)
    for (VertexIndex a : ag.task_variants[e.parent])
      for (VertexIndex b : ag.task_variants[e.child]) ag.edges.emplace_back(a, b);

  // Root-to-sink task paths in DFS order (children in declaration order),
  // then variant tuples odometer-style with the earliest task slowest.
  std::vector<std::vector<TaskIndex>> task_paths;
  {
    std::vector<TaskIndex> cur;
    auto dfs = [&](auto&& self, TaskIndex t) -> void {
      cur.push_back(t);
      if (graph.is_sink(t)) {
        task_paths.push_back(cur);
      } else {
        for (int e : graph.child_edges[t]) self(self, graph.edges[e].child);
      }
      cur.pop_back();
    };
    dfs(dfs, graph.root);
  }

  for (const auto& tp : task_paths) {
    std::vector<int> pick(tp.size(), 0);
    while (true) {
      VariantPath path;
      path.sink = tp.back();
      for (std::size_t i = 0; i < tp.size(); ++i) path.vertices.push_back(ag.task_variants[tp[i]][pick[i]]);
      ag.paths.push_back(std::move(path));

      int pos = static_cast<int>(tp.size()) - 1;
      while (pos >= 0) {
        if (++pick[pos] < static_cast<int>(ag.task_variants[tp[pos]].size())) break;
        pick[pos] = 0;
        --pos;
      }
      if (pos < 0) break;
    }
  }

  ag.paths_through.assign(ag.vertex_count(), {});
  for (PathIndex p = 0; p < ag.path_count(); ++p)
    for (VertexIndex v : ag.paths[p].vertices) ag.paths_through[v].push_back(p);
  return ag;
}

void attach_path_accuracy(AugmentedGraph& ag, const std::vector<PathAccuracyEntry>& entries) {
  for (const auto& entry : entries) {
    std::vector<VertexIndex> vs;
    for (const auto& id : entry.variant_ids) {
      VertexIndex v = ag.vertex_index(id);
      if (v < 0) fail(PipelineError::Code::UnknownTaskRef, "path accuracy references unknown variant: " + id);
      vs.push_back(v);
    }
    PathIndex p = ag.path_for(vs);
    if (p < 0) fail(PipelineError::Code::MissingPathAccuracy, "path accuracy entry matches no enumerated path");
    if (entry.accuracy < 0.0 || entry.accuracy > 1.0)
      fail(PipelineError::Code::BadProfile, "path accuracy outside [0,1]");
    ag.paths[p].profiled_accuracy = entry.accuracy;
  }
  for (PathIndex p = 0; p < ag.path_count(); ++p) {
    if (ag.paths[p].profiled_accuracy < 0.0) {
      std::string desc;
      for (VertexIndex v : ag.paths[p].vertices) desc += (desc.empty() ? "" : ",") + ag.profiles[v].id;
      fail(PipelineError::Code::MissingPathAccuracy, "no profiled accuracy for path [" + desc + "]");
    }
  }
  validate_accuracy_monotone(ag);
}

void validate_accuracy_monotone(const AugmentedGraph& ag) {
  // Pairwise check within same-task-sequence groups: paths differing in
  // exactly one position must order by that variant's single accuracy.
  for (PathIndex a = 0; a < ag.path_count(); ++a) {
    for (PathIndex b = a + 1; b < ag.path_count(); ++b) {
      const auto& pa = ag.paths[a];
      const auto& pb = ag.paths[b];
      if (pa.vertices.size() != pb.vertices.size() || pa.sink != pb.sink) continue;
      int diff = -1;
      bool single = true;
      for (std::size_t i = 0; i < pa.vertices.size(); ++i) {
        if (pa.vertices[i] != pb.vertices[i]) {
          if (diff >= 0) {
            single = false;
            break;
          }
          diff = static_cast<int>(i);
        }
      }
      if (!single || diff < 0) continue;
      double acc_a = ag.profiles[pa.vertices[diff]].accuracy;
      double acc_b = ag.profiles[pb.vertices[diff]].accuracy;
      if (acc_a > acc_b + 1e-12 && pa.profiled_accuracy + 1e-9 < pb.profiled_accuracy)
        fail(PipelineError::Code::AccuracyNotMonotone,
             "path accuracy not monotone at variants " + ag.profiles[pa.vertices[diff]].id + " vs " +
                 ag.profiles[pb.vertices[diff]].id);
      if (acc_b > acc_a + 1e-12 && pb.profiled_accuracy + 1e-9 < pa.profiled_accuracy)
        fail(PipelineError::Code::AccuracyNotMonotone,
             "path accuracy not monotone at variants " + ag.profiles[pb.vertices[diff]].id + " vs " +
                 ag.profiles[pa.vertices[diff]].id);
    }
  }
}

double path_multiplier(const AugmentedGraph& ag, const VariantPath& path, VertexIndex target,
                       std::span<const double> mult_factors) {
  double m = 1.0;
  for (std::size_t i = 0; i < path.vertices.size(); ++i) {
    VertexIndex v = path.vertices[i];
    if (v == target) return m;
    double r = mult_factors.empty() ? ag.profiles[v].mult_factor : mult_factors[v];
    // branch ratio of the edge into the next task on the path
    TaskIndex next_task = ag.profiles[path.vertices[i + 1]].task;
    double ratio = ag.graph.edges[ag.graph.parent_edge[next_task]].branch_ratio;
    m *= r * ratio;
  }
  fail(PipelineError::Code::VertexNotOnPath, "vertex " + std::to_string(target) + " is not on the path");
}

double path_latency_ms(const AugmentedGraph& ag, const VariantPath& path,
                       const std::map<VertexIndex, int>& batch_choice) {
  double total = 0.0;
  for (VertexIndex v : path.vertices) {
    auto it = batch_choice.find(v);
    if (it == batch_choice.end())
      fail(PipelineError::Code::MissingBatchChoice, "no batch choice for variant " + ag.profiles[v].id);
    total += ag.profiles[v].batch_latency_ms(it->second);
  }
  return total;
}

namespace {

LoadedPipeline load_pipeline_spec_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("tasks"))
    fail(PipelineError::Code::ParseError, "pipeline spec: missing 'tasks'");

  std::vector<TaskDecl> tasks;
  std::vector<std::pair<std::string, VariantProfile>> raw_profiles;  // (task id, profile)
  for (const auto& jt : j.at("tasks")) {
    TaskDecl t{jt.at("id").get<std::string>()};
    if (!jt.contains("variants") || jt.at("variants").empty())
      fail(PipelineError::Code::TaskWithoutVariants, "task " + t.id + " has no variants");
    for (const auto& jv : jt.at("variants")) {
      VariantProfile p;
      p.id = jv.at("id").get<std::string>();
      p.accuracy = jv.at("accuracy").get<double>();
      p.mult_factor = jv.value("mult_factor", 0.0);
      for (const auto& [key, val] : jv.at("throughput").items()) {
        int batch = 0;
        try {
          batch = std::stoi(key);
        } catch (const std::exception&) {
          fail(PipelineError::Code::ParseError, "bad batch size key: " + key);
        }
        p.throughput[batch] = val.get<double>();
      }
      raw_profiles.emplace_back(t.id, std::move(p));
    }
    tasks.push_back(std::move(t));
  }

  std::vector<EdgeDecl> edges;
  if (j.contains("edges")) {
    for (const auto& je : j.at("edges")) {
      edges.push_back({je.at("from").get<std::string>(), je.at("to").get<std::string>(),
                       je.value("branch_ratio", 1.0)});
    }
  }

  PipelineGraph graph = build_pipeline(tasks, edges);
  std::vector<VariantProfile> profiles;
  for (auto& [task_id, p] : raw_profiles) {
    p.task = graph.task_index(task_id);
    profiles.push_back(std::move(p));
  }

  LoadedPipeline out{build_augmented_graph(graph, std::move(profiles))};

  std::vector<PathAccuracyEntry> acc;
  if (j.contains("path_accuracy")) {
    for (const auto& ja : j.at("path_accuracy")) {
      PathAccuracyEntry e;
      for (const auto& id : ja.at("path")) e.variant_ids.push_back(id.get<std::string>());
      e.accuracy = ja.at("acc").get<double>();
      acc.push_back(std::move(e));
    }
  }
  attach_path_accuracy(out.aug, acc);
  return out;
}

}  // namespace

LoadedPipeline load_pipeline_spec_text(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text, nullptr, false);
  if (j.is_discarded()) fail(PipelineError::Code::ParseError, "pipeline spec: invalid JSON");
  return load_pipeline_spec_json(j);
}

LoadedPipeline load_pipeline_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(PipelineError::Code::ParseError, "cannot open pipeline spec: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return load_pipeline_spec_text(ss.str());
}

}  // namespace pipescale
