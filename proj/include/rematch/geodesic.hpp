#pragma once

#include <functional>
#include <limits>
#include <queue>
#include <span>
#include <utility>
#include <vector>

#include "rematch/errors.hpp"
#include "rematch/mesh.hpp"

namespace rematch {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Graph-geodesic distance to a source set plus the nearest source per vertex.
struct DistanceField {
  std::vector<double> dist; // +inf where unreached
  std::vector<int> source;  // vertex id of nearest source, -1 where unreached

  explicit DistanceField(int n = 0) : dist(n, kInfinity), source(n, -1) {}

  int size() const { return static_cast<int>(dist.size()); }
  bool reached(int v) const { return source[v] >= 0; }
};

/// Edge-graph view of a mesh: CSR neighbour lists with precomputed lengths.
class EdgeGraph {
public:
  explicit EdgeGraph(const TriMesh &mesh) : off_(mesh.num_vertices() + 1, 0) {
    const int n = mesh.num_vertices();
    for (int v = 0; v < n; ++v) off_[v + 1] = off_[v] + static_cast<int>(mesh.vertex_edges(v).size());
    nbr_.resize(off_[n]);
    len_.resize(off_[n]);
    for (int v = 0; v < n; ++v) {
      int k = off_[v];
      for (int e : mesh.vertex_edges(v)) {
        nbr_[k] = mesh.other_endpoint(e, v);
        len_[k] = mesh.edge_length(e);
        ++k;
      }
    }
  }

  int num_vertices() const { return static_cast<int>(off_.size()) - 1; }

  template <class F> void for_each_neighbor(int v, F &&f) const {
    for (int k = off_[v]; k < off_[v + 1]; ++k) f(nbr_[k], len_[k]);
  }

private:
  std::vector<int> off_;
  std::vector<int> nbr_;
  std::vector<double> len_;
};

/// Dijkstra front propagation with lazy deletion. Keeps scratch buffers so
/// repeated truncated propagations cost O(touched log touched).
class FrontPropagator {
public:
  explicit FrontPropagator(const TriMesh &mesh) : graph_(mesh), stamp_(mesh.num_vertices(), 0) {}

  const EdgeGraph &graph() const { return graph_; }

  DistanceField single_source(int source) {
    DistanceField field(graph_.num_vertices());
    propagate_update(source, field);
    return field;
  }

  /// One-shot multi-source propagation; equidistant vertices go to the source
  /// listed first.
  DistanceField multi_source(std::span<const int> sources) {
    DistanceField field(graph_.num_vertices());
    for (int s : sources) propagate_update(s, field);
    return field;
  }

  /// Adds `new_source` to the source set of `field`. Only vertices strictly
  /// closer to the new source change (ties stay with the incumbent). Returns
  /// the vertices whose distance or source changed.
  std::vector<int> propagate_update(int new_source, DistanceField &field) {
    if (new_source < 0 || new_source >= graph_.num_vertices()) throw UsageError("source out of range");
    if (field.source[new_source] == new_source) throw UsageError("vertex is already a source");
    ++epoch_;
    std::vector<int> touched;
    auto touch = [&](int v) {
      if (stamp_[v] != epoch_) {
        stamp_[v] = epoch_;
        touched.push_back(v);
      }
    };
    field.dist[new_source] = 0.0;
    field.source[new_source] = new_source;
    touch(new_source);
    heap_.push({0.0, new_source});
    while (!heap_.empty()) {
      auto [d, v] = heap_.top();
      heap_.pop();
      if (d > field.dist[v] || field.source[v] != new_source) continue;
      graph_.for_each_neighbor(v, [&](int w, double len) {
        const double nd = d + len;
        if (nd < field.dist[w]) {
          field.dist[w] = nd;
          field.source[w] = new_source;
          touch(w);
          heap_.push({nd, w});
        }
      });
    }
    return touched;
  }

private:
  using Entry = std::pair<double, int>;
  EdgeGraph graph_;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> heap_;
  std::vector<unsigned> stamp_;
  unsigned epoch_ = 0;
};

inline DistanceField single_source(const TriMesh &mesh, int source) {
  return FrontPropagator(mesh).single_source(source);
}

inline std::vector<int> propagate_update(const TriMesh &mesh, int new_source, DistanceField &field) {
  return FrontPropagator(mesh).propagate_update(new_source, field);
}

/// Shortest edge-path length between two vertices (A* with the Euclidean
/// chord as admissible heuristic). +inf when disconnected.
inline double geodesic_distance(const TriMesh &mesh, const EdgeGraph &graph, int from, int to,
                                std::vector<double> &scratch_dist, std::vector<int> &scratch_touched) {
  if (from == to) return 0.0;
  const Vec3 goal = mesh.position(to);
  auto h = [&](int v) { return (mesh.position(v) - goal).norm(); };
  using Entry = std::pair<double, int>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> open;
  if (scratch_dist.size() != static_cast<std::size_t>(mesh.num_vertices()))
    scratch_dist.assign(mesh.num_vertices(), kInfinity);
  scratch_touched.clear();
  scratch_dist[from] = 0.0;
  scratch_touched.push_back(from);
  open.push({h(from), from});
  double result = kInfinity;
  while (!open.empty()) {
    auto [f, v] = open.top();
    open.pop();
    if (v == to) {
      result = scratch_dist[to];
      break;
    }
    const double g = scratch_dist[v];
    if (f > g + h(v) * (1.0 + 1e-12) + 1e-300) continue;
    graph.for_each_neighbor(v, [&](int w, double len) {
      const double ng = g + len;
      if (ng < scratch_dist[w]) {
        if (scratch_dist[w] == kInfinity) scratch_touched.push_back(w);
        scratch_dist[w] = ng;
        open.push({ng + h(w), w});
      }
    });
  }
  for (int v : scratch_touched) scratch_dist[v] = kInfinity;
  return result;
}

} // namespace rematch
