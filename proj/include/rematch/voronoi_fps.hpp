#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <variant>
#include <vector>

#include "rematch/errors.hpp"
#include "rematch/geodesic.hpp"
#include "rematch/indexed_heap.hpp"
#include "rematch/mesh.hpp"

namespace rematch {

/// Seed for the first FPS sample: an explicit vertex, or a vertex drawn from
/// a deterministic RNG.
struct RandomSeed {
  std::uint64_t value = 0;
};
using FpsSeed = std::variant<int, RandomSeed>;

inline int resolve_seed(const FpsSeed &seed, int num_vertices) {
  if (const int *v = std::get_if<int>(&seed)) {
    if (*v < 0 || *v >= num_vertices) throw UsageError("seed vertex out of range");
    return *v;
  }
  std::mt19937_64 rng(std::get<RandomSeed>(seed).value);
  return static_cast<int>(rng() % static_cast<std::uint64_t>(num_vertices));
}

/// Live state of joint farthest-point sampling and Voronoi decomposition.
///
/// Texel ids are positions in `samples`. The heap mirrors field.dist, with
/// +inf keys on vertices no sample reaches yet (other components).
struct VoronoiState {
  std::vector<int> samples;
  DistanceField field;
  IndexedMaxHeap heap;
  std::vector<int> sample_id; // vertex -> texel id when the vertex is a sample, else -1
  FrontPropagator front;

  explicit VoronoiState(const TriMesh &mesh) : field(mesh.num_vertices()), sample_id(mesh.num_vertices(), -1), front(mesh) {}

  int num_texels() const { return static_cast<int>(samples.size()); }
  int num_vertices() const { return field.size(); }

  /// Texel of vertex v, or -1 when unreached.
  int texel(int v) const { return field.source[v] < 0 ? -1 : sample_id[field.source[v]]; }

  std::vector<int> texel_labels() const {
    std::vector<int> out(num_vertices());
    for (int v = 0; v < num_vertices(); ++v) out[v] = texel(v);
    return out;
  }
};

/// Marks p as a sample, propagates its front and refreshes the heap keys of
/// the touched vertices. Returns the touched vertices.
inline std::vector<int> add_sample(VoronoiState &state, int p) {
  if (p < 0 || p >= state.num_vertices()) throw UsageError("sample vertex out of range");
  if (state.sample_id[p] >= 0) throw UsageError("vertex " + std::to_string(p) + " is already a sample");
  state.sample_id[p] = state.num_texels();
  state.samples.push_back(p);
  std::vector<int> touched = state.front.propagate_update(p, state.field);
  for (int v : touched) state.heap.set_key(v, state.field.dist[v]);
  return touched;
}

inline VoronoiState init_voronoi(const TriMesh &mesh, const FpsSeed &seed) {
  if (mesh.num_vertices() == 0) throw UsageError("cannot sample an empty mesh");
  const int first = resolve_seed(seed, mesh.num_vertices());
  VoronoiState state(mesh);
  state.sample_id[first] = 0;
  state.samples.push_back(first);
  state.front.propagate_update(first, state.field);
  state.heap = IndexedMaxHeap(state.field.dist);
  return state;
}

/// Vertex the next FPS step picks: the maximal distance, lowest index on ties,
/// never an existing sample.
inline int farthest_vertex(const VoronoiState &state) {
  const int top = state.heap.top();
  if (state.sample_id[top] < 0) return top;
  // Only reachable when every maximal key is zero (coincident vertices).
  for (int v = 0; v < state.num_vertices(); ++v)
    if (state.sample_id[v] < 0 && state.field.dist[v] == state.heap.top_key()) return v;
  for (int v = 0; v < state.num_vertices(); ++v)
    if (state.sample_id[v] < 0) return v;
  return -1;
}

/// Stats collected by fps() for the work-bound checks.
struct FpsStats {
  long long touched_total = 0;
};

inline VoronoiState fps(const TriMesh &mesh, int s, const FpsSeed &seed, FpsStats *stats = nullptr) {
  if (s < 1) throw UsageError("sample count must be at least 1");
  if (s > mesh.num_vertices()) throw UsageError("sample count exceeds vertex count");
  VoronoiState state = init_voronoi(mesh, seed);
  while (state.num_texels() < s) {
    auto touched = add_sample(state, farthest_vertex(state));
    if (stats) stats->touched_total += static_cast<long long>(touched.size());
  }
  return state;
}

struct VoronoiAdjacency {
  std::vector<std::array<int, 2>> pairs;   // sorted texel pairs i < j
  std::vector<std::array<int, 3>> triples; // sorted texel triples i < j < k
};

inline VoronoiAdjacency voronoi_adjacency(const VoronoiState &state, const TriMesh &mesh) {
  VoronoiAdjacency adj;
  for (const Edge &e : mesh.edges()) {
    int a = state.texel(e[0]), b = state.texel(e[1]);
    if (a != b && a >= 0 && b >= 0) adj.pairs.push_back({std::min(a, b), std::max(a, b)});
  }
  for (const Tri &f : mesh.triangles()) {
    std::array<int, 3> t{state.texel(f[0]), state.texel(f[1]), state.texel(f[2])};
    std::sort(t.begin(), t.end());
    if (t[0] >= 0 && t[0] != t[1] && t[1] != t[2]) adj.triples.push_back(t);
  }
  std::sort(adj.pairs.begin(), adj.pairs.end());
  adj.pairs.erase(std::unique(adj.pairs.begin(), adj.pairs.end()), adj.pairs.end());
  std::sort(adj.triples.begin(), adj.triples.end());
  adj.triples.erase(std::unique(adj.triples.begin(), adj.triples.end()), adj.triples.end());
  return adj;
}

/// Debug dump: "vertex label" per line.
inline void write_texel_labels(const std::filesystem::path &path, const VoronoiState &state) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  for (int v = 0; v < state.num_vertices(); ++v) out << v << ' ' << state.texel(v) << '\n';
}

} // namespace rematch
