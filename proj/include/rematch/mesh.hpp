#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "rematch/errors.hpp"

namespace rematch {

using Vec3 = Eigen::Vector3d;
using Tri = std::array<int, 3>;
using Edge = std::array<int, 2>;

/// Indexed triangle mesh with derived edge and incidence tables.
///
/// Immutable after construction. Edge-manifoldness is not enforced here so
/// that validate_manifold() can report defects; every algorithm downstream
/// assumes a mesh that passed validation.
class TriMesh {
public:
  TriMesh() = default;

  TriMesh(std::vector<Vec3> vertices, std::vector<Tri> triangles)
      : vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
    const int n = num_vertices();
    for (std::size_t t = 0; t < triangles_.size(); ++t) {
      const Tri &f = triangles_[t];
      for (int c : f)
        if (c < 0 || c >= n)
          throw TopologyError("triangle " + std::to_string(t) + " has out-of-range vertex index " +
                              std::to_string(c));
      if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2])
        throw TopologyError("triangle " + std::to_string(t) + " repeats a vertex");
    }
    build_adjacency();
  }

  int num_vertices() const { return static_cast<int>(vertices_.size()); }
  int num_triangles() const { return static_cast<int>(triangles_.size()); }
  int num_edges() const { return static_cast<int>(edges_.size()); }
  bool empty() const { return vertices_.empty(); }

  const std::vector<Vec3> &vertices() const { return vertices_; }
  const std::vector<Tri> &triangles() const { return triangles_; }
  const std::vector<Edge> &edges() const { return edges_; }

  const Vec3 &position(int v) const { return vertices_[v]; }
  const Tri &triangle(int t) const { return triangles_[t]; }
  const Edge &edge(int e) const { return edges_[e]; }

  std::span<const int> vertex_triangles(int v) const {
    return {vt_idx_.data() + vt_off_[v], vt_idx_.data() + vt_off_[v + 1]};
  }
  std::span<const int> vertex_edges(int v) const {
    return {ve_idx_.data() + ve_off_[v], ve_idx_.data() + ve_off_[v + 1]};
  }
  std::span<const int> edge_triangles(int e) const {
    return {et_idx_.data() + et_off_[e], et_idx_.data() + et_off_[e + 1]};
  }
  /// Edge ids of (c0,c1), (c1,c2), (c2,c0).
  const std::array<int, 3> &triangle_edges(int t) const { return tri_edges_[t]; }

  int other_endpoint(int e, int v) const { return edges_[e][0] == v ? edges_[e][1] : edges_[e][0]; }

  /// Edge id joining a and b, or -1.
  int find_edge(int a, int b) const {
    for (int e : vertex_edges(a))
      if (other_endpoint(e, a) == b) return e;
    return -1;
  }

  bool is_boundary_edge(int e) const { return et_off_[e + 1] - et_off_[e] == 1; }
  /// Number of boundary edges incident to v (2 for a manifold boundary vertex).
  int boundary_degree(int v) const {
    int d = 0;
    for (int e : vertex_edges(v)) d += is_boundary_edge(e) ? 1 : 0;
    return d;
  }
  bool has_boundary() const {
    for (int e = 0; e < num_edges(); ++e)
      if (is_boundary_edge(e)) return true;
    return false;
  }

  double edge_length(int e) const { return (vertices_[edges_[e][0]] - vertices_[edges_[e][1]]).norm(); }

  Vec3 triangle_normal(int t) const {
    const Tri &f = triangles_[t];
    return (vertices_[f[1]] - vertices_[f[0]]).cross(vertices_[f[2]] - vertices_[f[0]]);
  }
  double triangle_area(int t) const { return 0.5 * triangle_normal(t).norm(); }

  double total_area() const {
    double a = 0.0;
    for (int t = 0; t < num_triangles(); ++t) a += triangle_area(t);
    return a;
  }

  double bounding_box_diagonal() const {
    if (vertices_.empty()) return 0.0;
    Vec3 lo = vertices_[0], hi = vertices_[0];
    for (const Vec3 &p : vertices_) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    return (hi - lo).norm();
  }

  /// |V| - |E| + |T| over the whole mesh.
  int euler_characteristic() const { return num_vertices() - num_edges() + num_triangles(); }

private:
  void build_adjacency() {
    const int n = num_vertices();
    const int nt = num_triangles();

    // Edges: sorted unique (lo, hi) pairs.
    std::vector<std::uint64_t> keys;
    keys.reserve(3 * static_cast<std::size_t>(nt));
    auto key_of = [](int a, int b) {
      if (a > b) std::swap(a, b);
      return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
    };
    for (const Tri &f : triangles_)
      for (int i = 0; i < 3; ++i) keys.push_back(key_of(f[i], f[(i + 1) % 3]));
    std::vector<std::uint64_t> uniq = keys;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    edges_.resize(uniq.size());
    for (std::size_t e = 0; e < uniq.size(); ++e)
      edges_[e] = {static_cast<int>(uniq[e] >> 32), static_cast<int>(uniq[e] & 0xffffffffu)};

    tri_edges_.resize(nt);
    for (int t = 0; t < nt; ++t)
      for (int i = 0; i < 3; ++i) {
        auto it = std::lower_bound(uniq.begin(), uniq.end(), keys[3 * t + i]);
        tri_edges_[t][i] = static_cast<int>(it - uniq.begin());
      }

    // CSR tables.
    auto fill = [](int rows, auto &&for_each_pair, std::vector<int> &off, std::vector<int> &idx) {
      off.assign(rows + 1, 0);
      for_each_pair([&](int r, int) { ++off[r + 1]; });
      for (int r = 0; r < rows; ++r) off[r + 1] += off[r];
      idx.resize(off[rows]);
      std::vector<int> cursor(off.begin(), off.end() - 1);
      for_each_pair([&](int r, int c) { idx[cursor[r]++] = c; });
    };
    fill(
        n,
        [&](auto &&emit) {
          for (int t = 0; t < nt; ++t)
            for (int c : triangles_[t]) emit(c, t);
        },
        vt_off_, vt_idx_);
    fill(
        n,
        [&](auto &&emit) {
          for (int e = 0; e < num_edges(); ++e) {
            emit(edges_[e][0], e);
            emit(edges_[e][1], e);
          }
        },
        ve_off_, ve_idx_);
    fill(
        num_edges(),
        [&](auto &&emit) {
          for (int t = 0; t < nt; ++t)
            for (int e : tri_edges_[t]) emit(e, t);
        },
        et_off_, et_idx_);
  }

  std::vector<Vec3> vertices_;
  std::vector<Tri> triangles_;
  std::vector<Edge> edges_;
  std::vector<std::array<int, 3>> tri_edges_;
  std::vector<int> vt_off_, vt_idx_;
  std::vector<int> ve_off_, ve_idx_;
  std::vector<int> et_off_, et_idx_;
};

// ---------------------------------------------------------------------------
// Topology validation

enum class DefectKind { non_manifold_edge, non_manifold_vertex };

struct Defect {
  DefectKind kind;
  int index; // edge id or vertex id

  std::string describe() const {
    return kind == DefectKind::non_manifold_edge
               ? "edge " + std::to_string(index) + " with more than 2 incident triangles"
               : "non-manifold vertex " + std::to_string(index);
  }
  bool operator==(const Defect &) const = default;
};

/// Empty result means the mesh is edge- and vertex-manifold. Isolated vertices
/// are not defects.
inline std::vector<Defect> validate_manifold(const TriMesh &mesh) {
  std::vector<Defect> defects;
  std::vector<char> bad_edge(mesh.num_edges(), 0);
  for (int e = 0; e < mesh.num_edges(); ++e)
    if (mesh.edge_triangles(e).size() > 2) {
      defects.push_back({DefectKind::non_manifold_edge, e});
      bad_edge[e] = 1;
    }

  // Vertex fans: incident triangles linked through incident edges must form one
  // connected strip.
  std::vector<int> parent;
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    auto tris = mesh.vertex_triangles(v);
    if (tris.size() <= 1) continue;
    bool touches_bad = false;
    for (int e : mesh.vertex_edges(v)) touches_bad |= bad_edge[e] != 0;
    if (touches_bad) {
      defects.push_back({DefectKind::non_manifold_vertex, v});
      continue;
    }
    parent.resize(tris.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    auto local = [&](int t) {
      return static_cast<int>(std::find(tris.begin(), tris.end(), t) - tris.begin());
    };
    int groups = static_cast<int>(tris.size());
    for (int e : mesh.vertex_edges(v)) {
      auto et = mesh.edge_triangles(e);
      if (et.size() != 2) continue;
      int a = find(local(et[0])), b = find(local(et[1]));
      if (a != b) {
        parent[a] = b;
        --groups;
      }
    }
    if (groups != 1) defects.push_back({DefectKind::non_manifold_vertex, v});
  }
  return defects;
}

/// Indices of triangles whose area is at most `rel_tol` times the mean area.
inline std::vector<int> degenerate_triangles(const TriMesh &mesh, double rel_tol = 1e-12) {
  std::vector<int> out;
  if (mesh.num_triangles() == 0) return out;
  const double thresh = rel_tol * mesh.total_area() / mesh.num_triangles();
  for (int t = 0; t < mesh.num_triangles(); ++t)
    if (mesh.triangle_area(t) <= thresh) out.push_back(t);
  return out;
}

/// Checks the simplicial-complex conditions: distinct corners, no duplicate
/// triangles, every edge in at most two triangles. Returns human-readable
/// problems (empty when proper).
inline std::vector<std::string> simplicial_complex_problems(const TriMesh &mesh) {
  std::vector<std::string> problems;
  std::vector<Tri> sorted(mesh.triangles());
  for (auto &f : sorted) std::sort(f.begin(), f.end());
  std::vector<int> order(sorted.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return sorted[a] < sorted[b]; });
  for (std::size_t i = 1; i < order.size(); ++i)
    if (sorted[order[i]] == sorted[order[i - 1]])
      problems.push_back("duplicate triangle " + std::to_string(order[i]));
  for (int e = 0; e < mesh.num_edges(); ++e)
    if (mesh.edge_triangles(e).size() > 2)
      problems.push_back("edge " + std::to_string(e) + " in " +
                         std::to_string(mesh.edge_triangles(e).size()) + " triangles");
  return problems;
}

// ---------------------------------------------------------------------------
// Connected components

struct ComponentInfo {
  int vertex_count = 0;
  int triangle_count = 0;
  double area = 0.0;
};

struct Components {
  std::vector<int> label; // per vertex, contiguous from 0 in order of first vertex
  std::vector<ComponentInfo> info;

  int count() const { return static_cast<int>(info.size()); }
};

inline Components connected_components(const TriMesh &mesh) {
  Components out;
  out.label.assign(mesh.num_vertices(), -1);
  std::vector<int> stack;
  for (int seed = 0; seed < mesh.num_vertices(); ++seed) {
    if (out.label[seed] >= 0) continue;
    const int id = out.count();
    out.info.emplace_back();
    out.label[seed] = id;
    stack.push_back(seed);
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      ++out.info[id].vertex_count;
      for (int e : mesh.vertex_edges(v)) {
        int w = mesh.other_endpoint(e, v);
        if (out.label[w] < 0) {
          out.label[w] = id;
          stack.push_back(w);
        }
      }
    }
  }
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    auto &c = out.info[out.label[mesh.triangle(t)[0]]];
    ++c.triangle_count;
    c.area += mesh.triangle_area(t);
  }
  return out;
}

/// Result of restricting a mesh to a subset of its vertices.
struct Submesh {
  TriMesh mesh;
  std::vector<int> removed;   // original indices of dropped vertices, ascending
  std::vector<int> new_index; // original -> new index, -1 when dropped
};

/// Keeps the vertices with keep[v] != 0 (order preserved) and the triangles
/// whose corners are all kept.
inline Submesh restrict_to_vertices(const TriMesh &mesh, const std::vector<char> &keep) {
  Submesh out;
  out.new_index.assign(mesh.num_vertices(), -1);
  std::vector<Vec3> verts;
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    if (keep[v]) {
      out.new_index[v] = static_cast<int>(verts.size());
      verts.push_back(mesh.position(v));
    } else {
      out.removed.push_back(v);
    }
  }
  std::vector<Tri> tris;
  for (const Tri &f : mesh.triangles()) {
    Tri g{out.new_index[f[0]], out.new_index[f[1]], out.new_index[f[2]]};
    if (g[0] >= 0 && g[1] >= 0 && g[2] >= 0) tris.push_back(g);
  }
  out.mesh = TriMesh(std::move(verts), std::move(tris));
  return out;
}

/// Drops every connected component whose area is below threshold * total area.
inline Submesh remove_small_components(const TriMesh &mesh, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw UsageError("component area threshold must lie in (0, 1)");
  const Components comps = connected_components(mesh);
  const double total = mesh.total_area();
  std::vector<char> keep_comp(comps.count());
  bool any = false;
  for (int c = 0; c < comps.count(); ++c) {
    keep_comp[c] = comps.info[c].area >= threshold * total;
    any |= keep_comp[c] != 0;
  }
  if (!any) throw TopologyError("every connected component is below the area threshold");
  std::vector<char> keep(mesh.num_vertices());
  for (int v = 0; v < mesh.num_vertices(); ++v) keep[v] = keep_comp[comps.label[v]];
  return restrict_to_vertices(mesh, keep);
}

// ---------------------------------------------------------------------------
// Dual-region Euler characteristic

/// Per-vertex boundary contribution to the dual cell count: a boundary vertex
/// adds itself as a dual vertex and one boundary arc per incident boundary
/// edge, i.e. 1 - boundary_degree(v). Zero for interior vertices.
inline int dual_boundary_weight(const TriMesh &mesh, int v) {
  const int d = mesh.boundary_degree(v);
  return d == 0 ? 0 : 1 - d;
}

/// Euler characteristic of the union of closed dual faces of `region`.
///
/// Dual cells: one vertex per primal triangle, one edge per primal edge; on the
/// boundary each boundary edge adds its midpoint as a dual vertex and each
/// boundary vertex closes its dual face with arcs through itself. The count
/// needs only which primal elements touch the region, so no dual mesh is built.
inline int region_euler_characteristic(const TriMesh &mesh, std::span<const int> region) {
  std::vector<char> in(mesh.num_vertices(), 0);
  int faces = 0;
  for (int v : region) {
    if (v < 0 || v >= mesh.num_vertices()) throw UsageError("region vertex out of range");
    if (!in[v]) {
      in[v] = 1;
      ++faces;
    }
  }
  int edges = 0, boundary_mid = 0, boundary_vertex_terms = 0;
  for (int e = 0; e < mesh.num_edges(); ++e) {
    const Edge &ed = mesh.edge(e);
    if (in[ed[0]] || in[ed[1]]) {
      ++edges;
      if (mesh.is_boundary_edge(e)) ++boundary_mid;
    }
  }
  int tris = 0;
  for (const Tri &f : mesh.triangles())
    if (in[f[0]] || in[f[1]] || in[f[2]]) ++tris;
  for (int v = 0; v < mesh.num_vertices(); ++v)
    if (in[v]) boundary_vertex_terms += dual_boundary_weight(mesh, v);
  return tris + boundary_mid - edges + faces + boundary_vertex_terms;
}

} // namespace rematch
