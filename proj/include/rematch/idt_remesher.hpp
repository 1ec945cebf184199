#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "rematch/errors.hpp"
#include "rematch/log.hpp"
#include "rematch/mesh.hpp"
#include "rematch/timing.hpp"
#include "rematch/voronoi_fps.hpp"

namespace rematch {

/// Low-resolution remesh together with its correspondence to the input.
struct RemeshOutput {
  TriMesh lowres;
  std::vector<int> generator_of; // lowres vertex -> input vertex
  std::vector<int> texel_of;     // input vertex -> lowres vertex (-1 if its texel was dropped)
  int repair_count = 0;          // samples added beyond the requested count
};

struct FupReport {
  std::vector<int> bad_texels;
  std::vector<std::array<int, 2>> bad_pairs;
  std::vector<std::array<int, 3>> bad_triples;

  bool ok() const { return bad_texels.empty() && bad_pairs.empty() && bad_triples.empty(); }
  std::string summary() const {
    return std::to_string(bad_texels.size()) + " texels, " + std::to_string(bad_pairs.size()) + " pairs, " +
           std::to_string(bad_triples.size()) + " triples";
  }
};

class FupRepairError : public NumericalError {
public:
  FupRepairError(const std::string &w, FupReport r) : NumericalError(w), report(std::move(r)) {}
  FupReport report;
};

namespace detail {

inline std::uint64_t pair_key(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

/// Euler characteristics of every texel, adjacent texel pair and meeting
/// triple, from one pass over vertices, edges and triangles.
struct RegionCounts {
  std::vector<int> texel_chi;
  std::vector<std::array<int, 2>> pairs;
  std::vector<int> pair_chi;
  std::vector<std::array<int, 3>> triples;
  std::vector<int> triple_chi;
};

inline RegionCounts count_regions(const VoronoiState &state, const TriMesh &mesh) {
  const int nt = state.num_texels();
  RegionCounts rc;
  rc.texel_chi.assign(nt, 0);

  for (int v = 0; v < mesh.num_vertices(); ++v) {
    const int t = state.texel(v);
    if (t < 0) continue;
    rc.texel_chi[t] += 1 + dual_boundary_weight(mesh, v);
  }

  // Cross-texel records: (E - T - Bm) per pair, T per triple.
  struct PairDelta {
    std::uint64_t key;
    int delta;
  };
  std::vector<PairDelta> pair_deltas;
  for (int e = 0; e < mesh.num_edges(); ++e) {
    const int a = state.texel(mesh.edge(e)[0]), b = state.texel(mesh.edge(e)[1]);
    if (a < 0 || b < 0) continue;
    const int bm = mesh.is_boundary_edge(e) ? 1 : 0;
    rc.texel_chi[a] -= 1 - bm;
    if (a != b) {
      rc.texel_chi[b] -= 1 - bm;
      pair_deltas.push_back({pair_key(std::min(a, b), std::max(a, b)), 1 - bm});
    }
  }
  std::vector<std::pair<std::array<int, 3>, int>> triple_hits;
  for (const Tri &f : mesh.triangles()) {
    std::array<int, 3> t{state.texel(f[0]), state.texel(f[1]), state.texel(f[2])};
    if (t[0] < 0 || t[1] < 0 || t[2] < 0) continue;
    std::sort(t.begin(), t.end());
    const int distinct = 1 + (t[1] != t[0]) + (t[2] != t[1]);
    rc.texel_chi[t[0]] += 1;
    if (t[1] != t[0]) rc.texel_chi[t[1]] += 1;
    if (t[2] != t[1]) rc.texel_chi[t[2]] += 1;
    if (distinct == 2) {
      const int lo = t[0], hi = t[2];
      pair_deltas.push_back({pair_key(lo, hi), -1});
    } else if (distinct == 3) {
      pair_deltas.push_back({pair_key(t[0], t[1]), -1});
      pair_deltas.push_back({pair_key(t[1], t[2]), -1});
      pair_deltas.push_back({pair_key(t[0], t[2]), -1});
      triple_hits.push_back({t, 1});
    }
  }

  std::sort(pair_deltas.begin(), pair_deltas.end(),
            [](const PairDelta &x, const PairDelta &y) { return x.key < y.key; });
  std::vector<std::uint64_t> pair_keys;
  std::vector<int> pair_sum;
  for (const PairDelta &d : pair_deltas) {
    if (pair_keys.empty() || pair_keys.back() != d.key) {
      pair_keys.push_back(d.key);
      pair_sum.push_back(0);
    }
    pair_sum.back() += d.delta;
  }
  for (std::size_t p = 0; p < pair_keys.size(); ++p) {
    const int a = static_cast<int>(pair_keys[p] >> 32), b = static_cast<int>(pair_keys[p] & 0xffffffffu);
    rc.pairs.push_back({a, b});
    rc.pair_chi.push_back(rc.texel_chi[a] + rc.texel_chi[b] + pair_sum[p]);
  }
  auto pair_term = [&](int a, int b) {
    auto it = std::lower_bound(pair_keys.begin(), pair_keys.end(), pair_key(a, b));
    return pair_sum[it - pair_keys.begin()];
  };

  std::sort(triple_hits.begin(), triple_hits.end());
  for (std::size_t i = 0; i < triple_hits.size();) {
    std::size_t j = i;
    int hits = 0;
    while (j < triple_hits.size() && triple_hits[j].first == triple_hits[i].first) hits += triple_hits[j++].second;
    const auto &t = triple_hits[i].first;
    rc.triples.push_back(t);
    rc.triple_chi.push_back(rc.texel_chi[t[0]] + rc.texel_chi[t[1]] + rc.texel_chi[t[2]] + pair_term(t[0], t[1]) +
                            pair_term(t[1], t[2]) + pair_term(t[0], t[2]) + hits);
    i = j;
  }
  return rc;
}

} // namespace detail

/// Flat Union Property check via Euler characteristics of dual regions.
/// Vertices not reached by any sample are ignored.
inline FupReport check_fup(const VoronoiState &state, const TriMesh &mesh) {
  const detail::RegionCounts rc = detail::count_regions(state, mesh);
  FupReport report;
  for (int t = 0; t < static_cast<int>(rc.texel_chi.size()); ++t)
    if (rc.texel_chi[t] != 1) report.bad_texels.push_back(t);
  for (std::size_t p = 0; p < rc.pairs.size(); ++p)
    if (rc.pair_chi[p] != 1) report.bad_pairs.push_back(rc.pairs[p]);
  for (std::size_t p = 0; p < rc.triples.size(); ++p)
    if (rc.triple_chi[p] != 1) report.bad_triples.push_back(rc.triples[p]);
  return report;
}

namespace detail {

inline std::vector<std::vector<int>> texel_members(const VoronoiState &state) {
  std::vector<std::vector<int>> members(state.num_texels());
  for (int v = 0; v < state.num_vertices(); ++v)
    if (int t = state.texel(v); t >= 0) members[t].push_back(v);
  return members;
}

/// Boundary vertex of the texel farthest from its generator; the farthest
/// vertex overall when the texel has no neighbours.
inline int texel_split_vertex(const VoronoiState &state, const std::vector<int> &members, int texel) {
  const EdgeGraph &g = state.front.graph();
  int best = -1, best_any = -1;
  for (int v : members) {
    if (state.sample_id[v] >= 0) continue;
    const double d = state.field.dist[v];
    if (best_any < 0 || d > state.field.dist[best_any]) best_any = v;
    bool on_boundary = false;
    g.for_each_neighbor(v, [&](int w, double) { on_boundary |= state.texel(w) != texel; });
    if (on_boundary && (best < 0 || d > state.field.dist[best])) best = v;
  }
  return best >= 0 ? best : best_any;
}

/// Vertex along the shared boundary of texels a and b maximising the smaller
/// of its distances to the two generators.
inline int pair_split_vertex(const VoronoiState &state, const std::vector<std::vector<int>> &members, int a,
                             int b) {
  const EdgeGraph &g = state.front.graph();
  int best = -1;
  double best_score = -1.0;
  for (int side = 0; side < 2; ++side) {
    const int own = side == 0 ? a : b, other = side == 0 ? b : a;
    for (int v : members[own]) {
      if (state.sample_id[v] >= 0) continue;
      double d_other = kInfinity;
      g.for_each_neighbor(v, [&](int w, double len) {
        if (state.texel(w) == other) d_other = std::min(d_other, state.field.dist[w] + len);
      });
      if (d_other == kInfinity) continue;
      const double score = std::min(state.field.dist[v], d_other);
      if (score > best_score || (score == best_score && v < best)) {
        best = v;
        best_score = score;
      }
    }
  }
  return best;
}

/// Corner with the largest distance among the triangles realising the triple.
inline int triple_split_vertex(const VoronoiState &state, const TriMesh &mesh, const std::array<int, 3> &triple) {
  int best = -1;
  for (const Tri &f : mesh.triangles()) {
    std::array<int, 3> t{state.texel(f[0]), state.texel(f[1]), state.texel(f[2])};
    std::sort(t.begin(), t.end());
    if (t != triple) continue;
    for (int c : f) {
      if (state.sample_id[c] >= 0) continue;
      if (best < 0 || state.field.dist[c] > state.field.dist[best] ||
          (state.field.dist[c] == state.field.dist[best] && c < best))
        best = c;
    }
  }
  return best;
}

/// Adds the given candidates as samples, skipping invalid and duplicate ones.
inline int add_candidates(VoronoiState &state, const std::vector<int> &candidates) {
  int added = 0;
  for (int v : candidates)
    if (v >= 0 && state.sample_id[v] < 0) {
      add_sample(state, v);
      ++added;
    }
  return added;
}

} // namespace detail

/// Inserts samples until the Flat Union Property holds. Each round fixes one
/// class of violation (texels, then pairs, then triples) with one sample per
/// violating region. Returns the number of rounds used.
inline int repair_fup(VoronoiState &state, const TriMesh &mesh, int max_rounds = 50) {
  if (max_rounds < 1) throw UsageError("max_rounds must be at least 1");
  for (int round = 0;; ++round) {
    FupReport report = check_fup(state, mesh);
    if (report.ok()) return round;
    if (round == max_rounds)
      throw FupRepairError("flat union repair did not converge in " + std::to_string(max_rounds) +
                               " rounds (" + report.summary() + ")",
                           std::move(report));
    const auto members = detail::texel_members(state);
    std::vector<int> candidates;
    if (!report.bad_texels.empty()) {
      for (int t : report.bad_texels) candidates.push_back(detail::texel_split_vertex(state, members[t], t));
    } else if (!report.bad_pairs.empty()) {
      for (auto [a, b] : report.bad_pairs) candidates.push_back(detail::pair_split_vertex(state, members, a, b));
    } else {
      for (const auto &t : report.bad_triples) candidates.push_back(detail::triple_split_vertex(state, mesh, t));
    }
    if (detail::add_candidates(state, candidates) == 0)
      throw FupRepairError("flat union repair found no vertex to insert (" + report.summary() + ")",
                           std::move(report));
  }
}

namespace detail {

/// Dual connectivity of the current state, without precondition checks.
inline RemeshOutput extract_dual(const VoronoiState &state, const TriMesh &mesh) {
  RemeshOutput out;
  out.generator_of = state.samples;
  out.texel_of = state.texel_labels();
  std::vector<Vec3> verts;
  verts.reserve(state.samples.size());
  for (int g : state.samples) verts.push_back(mesh.position(g));
  std::vector<Tri> tris;
  std::vector<std::array<int, 3>> seen;
  for (const Tri &f : mesh.triangles()) {
    Tri t{out.texel_of[f[0]], out.texel_of[f[1]], out.texel_of[f[2]]};
    if (t[0] < 0 || t[1] < 0 || t[2] < 0 || t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) continue;
    std::array<int, 3> key = t;
    std::sort(key.begin(), key.end());
    seen.push_back(key);
    tris.push_back(t);
  }
  // Keep the first primal triangle per texel triple.
  std::vector<int> order(tris.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return seen[a] < seen[b]; });
  std::vector<char> keep(tris.size(), 0);
  for (std::size_t i = 0; i < order.size(); ++i)
    if (i == 0 || seen[order[i]] != seen[order[i - 1]]) keep[order[i]] = 1;
  std::vector<Tri> unique_tris;
  for (std::size_t i = 0; i < tris.size(); ++i)
    if (keep[i]) unique_tris.push_back(tris[i]);
  out.lowres = TriMesh(std::move(verts), std::move(unique_tris));
  return out;
}

/// Lowres vertices where the dual fails to be a manifold triangulation:
/// non-manifold vertices, endpoints of over-full edges, isolated vertices.
inline std::vector<int> dual_problem_vertices(const TriMesh &lowres) {
  std::vector<int> bad;
  for (const Defect &d : validate_manifold(lowres)) {
    if (d.kind == DefectKind::non_manifold_vertex) bad.push_back(d.index);
    else {
      bad.push_back(lowres.edge(d.index)[0]);
      bad.push_back(lowres.edge(d.index)[1]);
    }
  }
  for (int v = 0; v < lowres.num_vertices(); ++v)
    if (lowres.vertex_triangles(v).empty()) bad.push_back(v);
  std::sort(bad.begin(), bad.end());
  bad.erase(std::unique(bad.begin(), bad.end()), bad.end());
  return bad;
}

} // namespace detail

/// Dual triangulation of a state satisfying the Flat Union Property.
inline RemeshOutput extract_idt(const VoronoiState &state, const TriMesh &mesh) {
  const FupReport report = check_fup(state, mesh);
  if (!report.ok()) throw TopologyError("flat union property violated (" + report.summary() + ")");
  RemeshOutput out = detail::extract_dual(state, mesh);
  auto problems = simplicial_complex_problems(out.lowres);
  if (!problems.empty()) throw TopologyError("extracted dual is not a simplicial complex: " + problems.front());
  return out;
}

// ---------------------------------------------------------------------------
// Large-triangle resampling

/// Target edge length for an s-vertex output: side of the equilateral
/// triangle with area A/(2s).
inline double resample_edge_threshold(const TriMesh &mesh, int s) {
  const double avg_area = mesh.total_area() / (2.0 * s);
  return std::sqrt(2.0 * avg_area / std::sqrt(3.0));
}

namespace detail {

inline double corner_angle(const Vec3 &at, const Vec3 &a, const Vec3 &b) {
  const Vec3 u = a - at, w = b - at;
  return std::atan2(u.cross(w).norm(), u.dot(w));
}

} // namespace detail

/// One pass of midpoint splitting of every edge longer than rho.
/// New vertices are appended; original indices are preserved.
inline TriMesh split_long_edges(const TriMesh &mesh, double rho, bool *changed = nullptr) {
  std::vector<int> mid(mesh.num_edges(), -1);
  std::vector<Vec3> verts = mesh.vertices();
  for (int e = 0; e < mesh.num_edges(); ++e)
    if (mesh.edge_length(e) > rho) {
      mid[e] = static_cast<int>(verts.size());
      verts.push_back(0.5 * (mesh.position(mesh.edge(e)[0]) + mesh.position(mesh.edge(e)[1])));
    }
  if (changed) *changed = verts.size() != mesh.vertices().size();
  if (verts.size() == mesh.vertices().size()) return mesh;

  std::vector<Tri> tris;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Tri &c = mesh.triangle(t);
    const auto &te = mesh.triangle_edges(t); // te[i] joins c[i], c[i+1]
    std::array<int, 3> m{mid[te[0]], mid[te[1]], mid[te[2]]};
    const int splits = (m[0] >= 0) + (m[1] >= 0) + (m[2] >= 0);
    if (splits == 0) {
      tris.push_back(c);
    } else if (splits == 1) {
      const int a = m[0] >= 0 ? 0 : (m[1] >= 0 ? 1 : 2);
      const int ca = c[a], cb = c[(a + 1) % 3], cc = c[(a + 2) % 3];
      tris.push_back({ca, m[a], cc});
      tris.push_back({m[a], cb, cc});
    } else if (splits == 2) {
      const int a = m[0] < 0 ? 0 : (m[1] < 0 ? 1 : 2); // the unsplit edge c[a]-c[a+1]
      const int ca = c[a], cb = c[(a + 1) % 3], cc = c[(a + 2) % 3];
      const int mb = m[(a + 1) % 3], mc = m[(a + 2) % 3]; // on cb-cc and cc-ca
      tris.push_back({mc, mb, cc});
      // Quad ca, cb, mb, mc: split along the diagonal whose endpoints carry
      // the larger angle sum.
      const Vec3 &pa = verts[ca], &pb = verts[cb], &pmb = verts[mb], &pmc = verts[mc];
      const double sum_a_mb = detail::corner_angle(pa, pb, pmc) + detail::corner_angle(pmb, pb, pmc);
      const double sum_b_mc = detail::corner_angle(pb, pa, pmb) + detail::corner_angle(pmc, pa, pmb);
      bool use_a_mb;
      if (sum_a_mb != sum_b_mc) {
        use_a_mb = sum_a_mb > sum_b_mc;
      } else {
        std::array<int, 2> d1{std::min(ca, mb), std::max(ca, mb)}, d2{std::min(cb, mc), std::max(cb, mc)};
        use_a_mb = d1 < d2;
      }
      if (use_a_mb) {
        tris.push_back({ca, cb, mb});
        tris.push_back({ca, mb, mc});
      } else {
        tris.push_back({ca, cb, mc});
        tris.push_back({cb, mb, mc});
      }
    } else {
      tris.push_back({c[0], m[0], m[2]});
      tris.push_back({m[0], c[1], m[1]});
      tris.push_back({m[2], m[1], c[2]});
      tris.push_back({m[0], m[1], m[2]});
    }
  }
  return TriMesh(std::move(verts), std::move(tris));
}

/// Splits oversized edges until every edge is at most rho long, where rho is
/// derived from the target sample count.
inline TriMesh resample_large_triangles(const TriMesh &mesh, int s) {
  if (s < 1) throw UsageError("sample count must be at least 1");
  const double rho = resample_edge_threshold(mesh, s);
  TriMesh cur = mesh;
  for (bool changed = true; changed;) cur = split_long_edges(cur, rho, &changed);
  return cur;
}

// ---------------------------------------------------------------------------
// Pipeline

struct RemeshOptions {
  int samples = 3000;
  FpsSeed seed = RandomSeed{0};
  bool resample = false;
  int max_rounds = 50;
  double component_area_threshold = 0.0; // 0 disables small-component removal
};

struct RemeshResult {
  TriMesh sampled;     // the mesh the samples live on (input, or its resampling)
  RemeshOutput output; // relative to `sampled`
  int requested_samples = 0;
  int rounds = 0;
};

/// Drops small lowres components and renumbers the correspondence.
inline void remove_small_lowres_components(RemeshOutput &out, double threshold) {
  Submesh sub = remove_small_components(out.lowres, threshold);
  if (sub.removed.empty()) return;
  std::vector<int> gens;
  for (int v = 0; v < out.lowres.num_vertices(); ++v)
    if (sub.new_index[v] >= 0) gens.push_back(out.generator_of[v]);
  for (int &t : out.texel_of) t = t < 0 ? -1 : sub.new_index[t];
  out.generator_of = std::move(gens);
  out.lowres = std::move(sub.mesh);
}

/// Resample (optional) -> FPS -> flat-union repair -> dual extraction, with
/// extra samples wherever the extracted dual is not a manifold triangulation
/// (possible near surface boundaries).
inline RemeshResult remesh(const TriMesh &input, const RemeshOptions &opt, JobLog *log = nullptr,
                           const std::string &job = "remesh") {
  if (input.num_vertices() == 0) throw UsageError("cannot remesh an empty mesh");
  if (const auto defects = validate_manifold(input); !defects.empty())
    throw TopologyError("input is not a manifold: " + defects.front().describe() + " (" +
                        std::to_string(defects.size()) + " defects)");
  RemeshResult res;
  {
    ScopedStage st(log, job, "resample");
    res.sampled = opt.resample ? resample_large_triangles(input, std::max(1, opt.samples)) : input;
  }
  const TriMesh &mesh = res.sampled;
  int s = opt.samples;
  if (s > mesh.num_vertices()) {
    log::warn("requested " + std::to_string(s) + " samples but the mesh has " +
              std::to_string(mesh.num_vertices()) + " vertices; clamping");
    s = mesh.num_vertices();
  }
  const int comps = connected_components(mesh).count();
  if (s < comps) {
    log::warn("raising sample count to the component count (" + std::to_string(comps) + ")");
    s = comps;
  }
  res.requested_samples = s;

  VoronoiState state = [&] {
    ScopedStage st(log, job, "fps");
    return fps(mesh, s, opt.seed);
  }();

  RemeshOutput out;
  {
    ScopedStage st(log, job, "repair");
    int rounds_left = opt.max_rounds;
    for (;;) {
      res.rounds += repair_fup(state, mesh, rounds_left);
      out = detail::extract_dual(state, mesh);
      const auto bad = detail::dual_problem_vertices(out.lowres);
      if (bad.empty()) break;
      if (++res.rounds > opt.max_rounds)
        throw FupRepairError("dual triangulation still invalid after " + std::to_string(opt.max_rounds) +
                                 " repair rounds",
                             check_fup(state, mesh));
      rounds_left = std::max(1, opt.max_rounds - res.rounds);
      const auto members = detail::texel_members(state);
      std::vector<int> candidates;
      for (int t : bad) candidates.push_back(detail::texel_split_vertex(state, members[t], t));
      if (detail::add_candidates(state, candidates) == 0)
        throw FupRepairError("cannot refine invalid dual triangulation", check_fup(state, mesh));
    }
  }
  {
    ScopedStage st(log, job, "extract");
    out = extract_idt(state, mesh);
    out.repair_count = state.num_texels() - s;
    if (opt.component_area_threshold > 0.0) remove_small_lowres_components(out, opt.component_area_threshold);
  }
  res.output = std::move(out);
  return res;
}

/// Sidecar: one line per input vertex, "texel is_generator".
inline void write_remesh_sidecar(const std::filesystem::path &path, const RemeshOutput &out) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  std::vector<char> is_gen(out.texel_of.size(), 0);
  for (int g : out.generator_of) is_gen[g] = 1;
  for (std::size_t v = 0; v < out.texel_of.size(); ++v) f << out.texel_of[v] << ' ' << int(is_gen[v]) << '\n';
}

/// Inverse of write_remesh_sidecar; the lowres mesh supplies the vertex count.
inline RemeshOutput read_remesh_sidecar(const std::filesystem::path &path, TriMesh lowres) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  RemeshOutput out;
  out.generator_of.assign(lowres.num_vertices(), -1);
  int texel, gen;
  int v = 0;
  while (f >> texel >> gen) {
    out.texel_of.push_back(texel);
    if (gen) {
      if (texel < 0 || texel >= lowres.num_vertices()) throw IoError(path.string() + ": bad texel id");
      out.generator_of[texel] = v;
    }
    ++v;
  }
  for (int g : out.generator_of)
    if (g < 0) throw IoError(path.string() + ": missing generator");
  out.lowres = std::move(lowres);
  return out;
}

} // namespace rematch
