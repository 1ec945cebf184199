#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "rematch/errors.hpp"
#include "rematch/fmap.hpp"
#include "rematch/geodesic.hpp"
#include "rematch/kdtree.hpp"
#include "rematch/parallel.hpp"
#include "rematch/prolongation.hpp"
#include "rematch/timing.hpp"
#include "rematch/voronoi_fps.hpp"

namespace rematch {

/// Ground-truth target per source vertex; -1 marks vertices without one.
struct GroundTruthMap {
  std::vector<int> target_of;

  int num_valid() const {
    return static_cast<int>(std::count_if(target_of.begin(), target_of.end(), [](int t) { return t >= 0; }));
  }
};

struct AccuracyCurve {
  std::vector<double> thresholds; // fractions of the diameter
  std::vector<double> fractions;
  double age = 0.0;
  double auc = 0.0;
};

struct GeodesicErrors {
  std::vector<double> error; // normalized; NaN where the ground truth is missing
  double diameter = 0.0;
  AccuracyCurve curve;
};

/// Double sweep: farthest vertex from vertex 0, then the largest distance
/// from there. Only the component of vertex 0 is measured.
inline double geodesic_diameter(const TriMesh &mesh) {
  if (mesh.num_vertices() == 0) return 0.0;
  FrontPropagator fp(mesh);
  auto farthest = [](const DistanceField &f) {
    int arg = 0;
    for (int v = 1; v < f.size(); ++v)
      if (f.dist[v] != kInfinity && (f.dist[arg] == kInfinity || f.dist[v] > f.dist[arg])) arg = v;
    return arg;
  };
  const DistanceField a = fp.single_source(0);
  const DistanceField b = fp.single_source(farthest(a));
  return b.dist[farthest(b)];
}

/// Fraction of errors at or below each threshold, mean error and the area
/// under the curve (trapezoid rule) normalised to [0, 1].
inline AccuracyCurve accuracy_curve(const std::vector<double> &errors, int samples = 256, double cap = 0.25) {
  if (samples < 2 || !(cap > 0)) throw UsageError("accuracy curve needs at least 2 samples and a positive cap");
  std::vector<double> e;
  for (double x : errors)
    if (!std::isnan(x)) e.push_back(x);
  if (e.empty()) throw UsageError("no valid ground-truth entries");
  std::sort(e.begin(), e.end());
  AccuracyCurve c;
  c.thresholds.resize(samples);
  c.fractions.resize(samples);
  for (int i = 0; i < samples; ++i) {
    c.thresholds[i] = cap * i / (samples - 1);
    const auto n = std::upper_bound(e.begin(), e.end(), c.thresholds[i]) - e.begin();
    c.fractions[i] = static_cast<double>(n) / static_cast<double>(e.size());
  }
  double sum = 0;
  for (double x : e) sum += x;
  c.age = sum / static_cast<double>(e.size());
  double area = 0;
  for (int i = 1; i < samples; ++i)
    area += 0.5 * (c.fractions[i] + c.fractions[i - 1]) * (c.thresholds[i] - c.thresholds[i - 1]);
  c.auc = area / cap;
  return c;
}

/// Graph-geodesic distance on the target between predicted and true images,
/// over the target diameter. Pairs in different components count as 1.
inline GeodesicErrors geodesic_error(const PointMap &pred, const GroundTruthMap &gt, const TriMesh &target,
                                     int threads = 1, int samples = 256, double cap = 0.25) {
  if (pred.num_source() != static_cast<int>(gt.target_of.size()))
    throw UsageError("prediction and ground truth cover different source meshes");
  if (gt.num_valid() == 0) throw UsageError("ground truth has no valid entries");
  for (int t : gt.target_of)
    if (t >= target.num_vertices()) throw UsageError("ground-truth entry out of range");
  for (int t : pred.target_of)
    if (t < 0 || t >= target.num_vertices()) throw UsageError("predicted entry out of range");
  GeodesicErrors out;
  out.diameter = geodesic_diameter(target);
  if (!(out.diameter > 0)) throw UsageError("target mesh has zero diameter");
  out.error.assign(pred.num_source(), std::nan(""));
  const EdgeGraph graph(target);
  parallel_for(pred.num_source(), threads, [&](int b, int e) {
    std::vector<double> scratch;
    std::vector<int> touched;
    for (int v = b; v < e; ++v) {
      if (gt.target_of[v] < 0) continue;
      const double d = geodesic_distance(target, graph, pred.target_of[v], gt.target_of[v], scratch, touched);
      out.error[v] = d == kInfinity ? 1.0 : d / out.diameter;
    }
  });
  out.curve = accuracy_curve(out.error, samples, cap);
  return out;
}

// ---------------------------------------------------------------------------
// Perturbed copies

struct Perturbation {
  TriMesh mesh;
  RowSparse u; // perturbed positions = u * original positions
};

namespace detail {

/// Uniform double in [0, 1) from the top 53 bits, identical on every platform.
inline double unit_double(std::mt19937_64 &rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

} // namespace detail

/// Moves every vertex to a uniformly random point of a uniformly random
/// incident triangle. Connectivity is kept.
inline Perturbation badtosca_perturb(const TriMesh &mesh, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int n = mesh.num_vertices();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(3 * static_cast<std::size_t>(n));
  std::vector<Vec3> pos(n);
  for (int v = 0; v < n; ++v) {
    const auto &tris = mesh.vertex_triangles(v);
    if (tris.empty()) throw TopologyError("vertex " + std::to_string(v) + " has no incident triangle");
    const Tri &f = mesh.triangle(tris[rng() % tris.size()]);
    const double r1 = std::sqrt(detail::unit_double(rng)), r2 = detail::unit_double(rng);
    const double w[3] = {1.0 - r1, r1 * (1.0 - r2), r1 * r2};
    pos[v] = Vec3::Zero();
    // Corners are summed per distinct vertex so each row has <= 3 entries.
    std::map<int, double> row;
    for (int c = 0; c < 3; ++c) {
      row[f[c]] += w[c];
      pos[v] += w[c] * mesh.position(f[c]);
    }
    for (const auto &[col, x] : row)
      if (x != 0.0) trip.emplace_back(v, col, x);
  }
  Perturbation p{TriMesh(std::move(pos), mesh.triangles()), {}};
  p.u.resize(n, n);
  p.u.setFromTriplets(trip.begin(), trip.end());
  p.u.makeCompressed();
  return p;
}

/// Ground truth between two perturbed copies of shapes sharing mesh_i's
/// connectivity: nearest neighbour between U_i V_i and U_j V_i.
inline GroundTruthMap badtosca_groundtruth(const TriMesh &mesh_i, const RowSparse &u_i, const RowSparse &u_j,
                                           int threads = 1) {
  const int n = mesh_i.num_vertices();
  if (u_i.rows() != n || u_i.cols() != n || u_j.rows() != n || u_j.cols() != n)
    throw UsageError("perturbation matrices do not match the mesh connectivity");
  Eigen::MatrixXd v(n, 3);
  for (int i = 0; i < n; ++i) v.row(i) = mesh_i.position(i).transpose();
  const Eigen::MatrixXd a = u_i * v, b = u_j * v;
  return {KdTree(b).nearest_all(a, threads)};
}

inline GroundTruthMap badtosca_groundtruth(const TriMesh &mesh_i, const TriMesh &mesh_j, const RowSparse &u_i,
                                           const RowSparse &u_j, int threads = 1) {
  if (mesh_i.num_vertices() != mesh_j.num_vertices() || mesh_i.triangles() != mesh_j.triangles())
    throw TopologyError("shapes do not share connectivity");
  return badtosca_groundtruth(mesh_i, u_i, u_j, threads);
}

// ---------------------------------------------------------------------------
// Geodesic transfer through the prolongation

struct TransferStudy {
  std::vector<int> sources;
  std::vector<double> error; // per source
  double min_dist_error = 0.0;
};

namespace detail {

/// RMS over the surface: sqrt(sum A f^2 / sum A).
inline double area_rms(const Eigen::VectorXd &mass, const std::vector<double> &f) {
  double num = 0;
  for (std::size_t i = 0; i < f.size(); ++i) num += mass[i] * f[i] * f[i];
  return std::sqrt(num / mass.sum());
}

} // namespace detail

/// For FPS sources on the dense mesh, compares the dense graph geodesic with
/// the lowres one (from the nearest lowres vertex) carried back through U.
/// Differences are divided by the largest true distance and measured by
/// area-weighted RMS. The last value does the same for the distance to the
/// nearest of all sources.
inline TransferStudy transfer_error_study(const TriMesh &dense, const RemeshOutput &remesh, const ProlongationMap &u,
                                          int n_sources, std::uint64_t seed, int threads = 1) {
  if (u.num_dense() != dense.num_vertices() || u.num_lowres() != remesh.lowres.num_vertices())
    throw UsageError("prolongation does not match the meshes");
  if (n_sources < 1) throw UsageError("need at least one source");
  const TriMesh &low = remesh.lowres;
  const Eigen::VectorXd mass = build_laplacian(dense).mass;
  TransferStudy out;
  out.sources = fps(dense, std::min(n_sources, dense.num_vertices()), RandomSeed{seed}).samples;

  Eigen::MatrixXd low_pos(low.num_vertices(), 3);
  for (int v = 0; v < low.num_vertices(); ++v) low_pos.row(v) = low.position(v).transpose();
  const KdTree low_tree(low_pos);
  auto low_vertex = [&](int v) { return low_tree.nearest(dense.position(v).data()); };

  auto compare = [&](const DistanceField &gt, const DistanceField &lf) {
    Eigen::VectorXd ld(low.num_vertices());
    for (int v = 0; v < low.num_vertices(); ++v) ld[v] = lf.dist[v];
    const Eigen::VectorXd ext = u.u * ld;
    double dmax = 0;
    for (double d : gt.dist)
      if (d != kInfinity) dmax = std::max(dmax, d);
    std::vector<double> diff(dense.num_vertices(), 0.0);
    for (int v = 0; v < dense.num_vertices(); ++v)
      if (gt.dist[v] != kInfinity && std::isfinite(ext[v])) diff[v] = (ext[v] - gt.dist[v]) / dmax;
    return detail::area_rms(mass, diff);
  };

  out.error.resize(out.sources.size());
  parallel_for(static_cast<int>(out.sources.size()), threads, [&](int b, int e) {
    FrontPropagator fd(dense), fl(low);
    for (int i = b; i < e; ++i)
      out.error[i] = compare(fd.single_source(out.sources[i]), fl.single_source(low_vertex(out.sources[i])));
  });
  std::vector<int> low_sources;
  for (int s : out.sources) {
    const int q = low_vertex(s);
    if (std::find(low_sources.begin(), low_sources.end(), q) == low_sources.end()) low_sources.push_back(q);
  }
  out.min_dist_error =
      compare(FrontPropagator(dense).multi_source(out.sources), FrontPropagator(low).multi_source(low_sources));
  return out;
}

// ---------------------------------------------------------------------------
// Reports and files

inline const std::vector<std::string> &timing_stages() {
  static const std::vector<std::string> s{"resample", "fps",      "repair",  "extract",      "laplacian",
                                          "eigens",   "fmap_init", "zoomout", "prolongation", "nn_recovery"};
  return s;
}

/// "pair,stage,seconds" rows in log order.
inline std::string timing_csv(const JobLog &log) {
  std::string out = "pair,stage,seconds\n";
  char buf[64];
  for (const auto &e : log.entries) {
    std::snprintf(buf, sizeof buf, ",%.9f\n", e.seconds);
    out += e.job + "," + e.stage + buf;
  }
  return out;
}

/// Per-job totals sorted ascending, with the cumulative fraction of jobs
/// finished within each total.
inline std::vector<std::pair<double, double>> timing_cumulative(const JobLog &log) {
  std::map<std::string, double> total;
  for (const auto &e : log.entries) total[e.job] += e.seconds;
  std::vector<double> t;
  for (const auto &[job, s] : total) t.push_back(s);
  std::sort(t.begin(), t.end());
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i < t.size(); ++i) out.emplace_back(t[i], static_cast<double>(i + 1) / t.size());
  return out;
}

inline std::string curve_csv(const AccuracyCurve &c) {
  std::string out = "threshold,fraction\n";
  char buf[64];
  for (std::size_t i = 0; i < c.thresholds.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g\n", c.thresholds[i], c.fractions[i]);
    out += buf;
  }
  return out;
}

inline void write_text_file(const std::filesystem::path &path, const std::string &text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

/// One 0-based index per line, -1 for a missing entry.
inline GroundTruthMap load_groundtruth(const std::filesystem::path &path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  GroundTruthMap gt;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    std::istringstream ss(line);
    long long v;
    if (!(ss >> v)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected an index");
    }
    if (v < -1 || v > 2147483647LL) throw IoError(path.string() + ":" + std::to_string(lineno) + ": bad index");
    gt.target_of.push_back(static_cast<int>(v));
  }
  return gt;
}

inline void save_groundtruth(const std::filesystem::path &path, const GroundTruthMap &gt) {
  std::string s;
  for (int t : gt.target_of) s += std::to_string(t) + "\n";
  write_text_file(path, s);
}

/// One evaluation pair. `prediction` is optional; without it the pair is
/// matched by the pipeline.
struct ManifestEntry {
  std::filesystem::path source, target, groundtruth, prediction;
};

/// Lines "source target groundtruth [prediction]"; '#' starts a comment.
/// Relative paths resolve against the manifest's directory.
inline std::vector<ManifestEntry> load_manifest(const std::filesystem::path &path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  const std::filesystem::path base = path.parent_path();
  auto resolve = [&](const std::string &p) {
    std::filesystem::path q(p);
    return q.is_absolute() ? q : base / q;
  };
  std::vector<ManifestEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream ss(line);
    std::vector<std::string> tok;
    for (std::string t; ss >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (tok.size() != 3 && tok.size() != 4)
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected 3 or 4 fields");
    ManifestEntry e{resolve(tok[0]), resolve(tok[1]), resolve(tok[2]), {}};
    if (tok.size() == 4) e.prediction = resolve(tok[3]);
    out.push_back(std::move(e));
  }
  return out;
}

} // namespace rematch
