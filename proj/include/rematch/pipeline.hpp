#pragma once

#include <cstdint>
#include <filesystem>
#include <future>
#include <string>

#include "rematch/bench.hpp"
#include "rematch/fmap.hpp"
#include "rematch/idt_remesher.hpp"
#include "rematch/mesh_io.hpp"
#include "rematch/prolongation.hpp"
#include "rematch/spectral.hpp"
#include "rematch/timing.hpp"

namespace rematch {

struct PipelineConfig {
  int samples = 3000;
  std::uint64_t seed = 0;
  bool resample = false;
  double component_area_threshold = 0.01;
  int k0 = 20;
  int step = 5;
  int k_final = 100;
  DescriptorKind descriptor = DescriptorKind::wks;
  int descriptor_count = 100;
  int threads = 1;

  /// Checks the fields remeshing uses.
  void validate_remesh() const {
    if (samples < 1) throw UsageError("samples must be positive");
    if (threads < 1) throw UsageError("threads must be positive");
    if (!(component_area_threshold >= 0.0 && component_area_threshold < 1.0))
      throw UsageError("component area threshold must lie in [0, 1)");
  }

  void validate() const {
    validate_remesh();
    if (k0 < 1 || step < 1 || k_final < 1 || descriptor_count < 1 || threads < 1)
      throw UsageError("k0, step, k_final, descriptor count and threads must be positive");
    if (k0 > k_final) throw UsageError("k0 exceeds k_final");
    if (k_final > samples) throw UsageError("k_final exceeds the sample count");
  }

  RemeshOptions remesh_options(std::uint64_t shape_seed) const {
    RemeshOptions o;
    o.samples = samples;
    o.seed = RandomSeed{shape_seed};
    o.resample = resample;
    o.component_area_threshold = component_area_threshold;
    return o;
  }
};

/// Everything computed for one side of a pair.
struct ShapeArtifacts {
  RemeshResult remesh;
  LaplacianPair laplacian;
  SpectralBasis basis;
  DescriptorSet descriptors;
  ProlongationMap prolongation; // input vertices -> lowres
};

struct MatchResult {
  ShapeArtifacts source, target;
  FunctionalMap c_init, c;
  PointMap lowres_map;
  PointMap dense_map;
};

/// Remesh, Laplacian, eigenbasis, descriptors and prolongation of one shape.
/// With resampling on, the input vertices are not generators of the lowres
/// mesh and the prolongation is pure projection.
inline ShapeArtifacts prepare_shape(const TriMesh &mesh, const PipelineConfig &cfg, std::uint64_t shape_seed,
                                    int threads, JobLog *log, const std::string &job) {
  ShapeArtifacts a;
  a.remesh = remesh(mesh, cfg.remesh_options(shape_seed), log, job);
  const TriMesh &low = a.remesh.output.lowres;
  if (low.num_vertices() < cfg.k_final)
    throw UsageError("lowres mesh has " + std::to_string(low.num_vertices()) + " vertices, fewer than k_final");
  {
    ScopedStage st(log, job, "laplacian");
    a.laplacian = build_laplacian(low);
  }
  {
    ScopedStage st(log, job, "eigens");
    a.basis = eigenbasis(a.laplacian, cfg.k_final);
    a.descriptors = descriptors(a.basis, a.laplacian.mass, cfg.descriptor, cfg.descriptor_count);
  }
  {
    ScopedStage st(log, job, "prolongation");
    a.prolongation = cfg.resample ? build_prolongation(mesh, low, {}, threads)
                                  : build_prolongation(mesh, a.remesh.output, threads);
  }
  return a;
}

/// Second remesh seed of a pair, so the two shapes are sampled independently.
inline std::uint64_t target_seed(std::uint64_t seed) { return seed ^ 0x9e3779b97f4a7c15ULL; }

/// Full pair: both shapes prepared (concurrently when threads > 1), then
/// descriptor map, ZoomOut and dense recovery. Stages are logged under `job`.
inline MatchResult match_shapes(const TriMesh &source, const TriMesh &target, const PipelineConfig &cfg,
                                JobLog *log = nullptr, const std::string &job = "pair") {
  cfg.validate();
  MatchResult r;
  if (cfg.threads > 1) {
    const int inner = std::max(1, cfg.threads / 2);
    JobLog tlog;
    auto fut = std::async(std::launch::async, [&] {
      return prepare_shape(target, cfg, target_seed(cfg.seed), inner, log ? &tlog : nullptr, job);
    });
    try {
      r.source = prepare_shape(source, cfg, cfg.seed, inner, log, job);
    } catch (...) {
      fut.wait();
      throw;
    }
    r.target = fut.get();
    if (log) log->append(tlog);
  } else {
    r.source = prepare_shape(source, cfg, cfg.seed, 1, log, job);
    r.target = prepare_shape(target, cfg, target_seed(cfg.seed), 1, log, job);
  }
  {
    ScopedStage st(log, job, "fmap_init");
    r.c_init = fmap_init(r.source.descriptors, r.target.descriptors, r.source.basis, r.source.laplacian.mass,
                         r.target.basis, r.target.laplacian.mass, cfg.k0);
  }
  {
    ScopedStage st(log, job, "zoomout");
    r.c = zoomout(r.c_init, r.source.basis, r.source.laplacian.mass, r.target.basis, cfg.step, cfg.k_final,
                  cfg.threads, &r.lowres_map);
  }
  {
    ScopedStage st(log, job, "nn_recovery");
    r.dense_map = recover_dense_pointmap(r.c, r.source.prolongation, r.target.prolongation, r.source.basis,
                                         r.target.basis, cfg.threads);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Function transfer

/// Least-squares coefficients of f (rows = vertices) in the columns of
/// `basis`, weighted by `mass`.
inline Eigen::MatrixXd project_onto(const Eigen::MatrixXd &basis, const Eigen::VectorXd &mass,
                                    const Eigen::MatrixXd &f) {
  if (basis.rows() != f.rows() || mass.size() != f.rows()) throw UsageError("function size does not match the shape");
  const Eigen::MatrixXd g = basis.transpose() * mass.asDiagonal() * basis;
  const Eigen::MatrixXd rhs = basis.transpose() * mass.asDiagonal() * f;
  return g.ldlt().solve(rhs);
}

/// Carries a function on the target's input vertices to the source's input
/// vertices through C: project onto the extended target basis, multiply by C,
/// reconstruct in the extended source basis.
inline Eigen::MatrixXd transfer_function(const FunctionalMap &c, const ProlongationMap &u_src,
                                         const ProlongationMap &u_tgt, const SpectralBasis &low_src,
                                         const SpectralBasis &low_tgt, const Eigen::VectorXd &dense_mass_tgt,
                                         const Eigen::MatrixXd &f_tgt) {
  if (c.k_source() > low_src.k() || c.k_target() > low_tgt.k())
    throw UsageError("functional map is larger than the lowres bases");
  const Eigen::MatrixXd psi = extend_basis(u_tgt, low_tgt.phi.leftCols(c.k_target()));
  const Eigen::MatrixXd phi = extend_basis(u_src, low_src.phi.leftCols(c.k_source()));
  return phi * (c.c * project_onto(psi, dense_mass_tgt, f_tgt));
}

/// Whitespace-separated matrix, one row per line; every row the same width.
inline Eigen::MatrixXd load_matrix(const std::filesystem::path &path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  std::vector<double> vals;
  long long cols = -1, rows = 0;
  std::string line;
  while (std::getline(f, line)) {
    std::istringstream ss(line);
    long long n = 0;
    std::string tok;
    while (ss >> tok) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception &) {
        throw IoError(path.string() + ":" + std::to_string(rows + 1) + ": bad number '" + tok + "'");
      }
      ++n;
    }
    if (n == 0) continue;
    if (cols >= 0 && n != cols) throw IoError(path.string() + ": rows have different widths");
    cols = n;
    ++rows;
  }
  Eigen::MatrixXd m(rows, std::max(0LL, cols));
  for (long long i = 0; i < rows; ++i)
    for (long long j = 0; j < cols; ++j) m(i, j) = vals[i * cols + j];
  return m;
}

inline void save_matrix(const std::filesystem::path &path, const Eigen::MatrixXd &m) {
  std::string out;
  char buf[32];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, j ? " %.17g" : "%.17g", m(i, j));
      out += buf;
    }
    out += '\n';
  }
  write_text_file(path, out);
}

// ---------------------------------------------------------------------------
// Artifacts on disk

/// File names inside a match output directory.
namespace artifact {
inline constexpr const char *source_lowres = "source_lowres.off";
inline constexpr const char *target_lowres = "target_lowres.off";
inline constexpr const char *source_sidecar = "source_texels.txt";
inline constexpr const char *target_sidecar = "target_texels.txt";
inline constexpr const char *source_basis = "source.basis";
inline constexpr const char *target_basis = "target.basis";
inline constexpr const char *source_prolongation = "source_prolongation.txt";
inline constexpr const char *target_prolongation = "target_prolongation.txt";
inline constexpr const char *target_mass = "target_mass.txt";
inline constexpr const char *fmap_init = "fmap_init.txt";
inline constexpr const char *fmap = "fmap.txt";
inline constexpr const char *lowres_map = "lowres_map.txt";
inline constexpr const char *dense_map = "map.txt";
inline constexpr const char *timing = "timing.csv";
} // namespace artifact

/// Writes every artifact except timing. The target's dense lumped mass is
/// kept so that functions can later be projected without the input mesh.
inline void save_match(const std::filesystem::path &dir, const MatchResult &r, const TriMesh &target) {
  std::filesystem::create_directories(dir);
  save_mesh(dir / artifact::source_lowres, r.source.remesh.output.lowres);
  save_mesh(dir / artifact::target_lowres, r.target.remesh.output.lowres);
  write_remesh_sidecar(dir / artifact::source_sidecar, r.source.remesh.output);
  write_remesh_sidecar(dir / artifact::target_sidecar, r.target.remesh.output);
  save_basis(dir / artifact::source_basis, r.source.basis);
  save_basis(dir / artifact::target_basis, r.target.basis);
  save_prolongation(dir / artifact::source_prolongation, r.source.prolongation);
  save_prolongation(dir / artifact::target_prolongation, r.target.prolongation);
  save_matrix(dir / artifact::target_mass, build_laplacian(target).mass);
  save_fmap(dir / artifact::fmap_init, r.c_init);
  save_fmap(dir / artifact::fmap, r.c);
  save_pointmap(dir / artifact::lowres_map, r.lowres_map);
  save_pointmap(dir / artifact::dense_map, r.dense_map);
}

/// Transfer using the artifacts of a match directory.
inline Eigen::MatrixXd transfer_from_artifacts(const std::filesystem::path &dir, const Eigen::MatrixXd &f_tgt) {
  const FunctionalMap c = load_fmap(dir / artifact::fmap);
  const ProlongationMap us = load_prolongation(dir / artifact::source_prolongation);
  const ProlongationMap ut = load_prolongation(dir / artifact::target_prolongation);
  const SpectralBasis bs = load_basis(dir / artifact::source_basis);
  const SpectralBasis bt = load_basis(dir / artifact::target_basis);
  const Eigen::MatrixXd mass = load_matrix(dir / artifact::target_mass);
  if (mass.cols() != 1 || mass.rows() != ut.num_dense()) throw IoError("target mass does not match the artifacts");
  if (bs.num_vertices() != us.num_lowres() || bt.num_vertices() != ut.num_lowres())
    throw IoError("bases do not match the prolongation maps");
  if (f_tgt.rows() != ut.num_dense())
    throw UsageError("function has " + std::to_string(f_tgt.rows()) + " rows but the target has " +
                     std::to_string(ut.num_dense()) + " vertices");
  return transfer_function(c, us, ut, bs, bt, mass.col(0), f_tgt);
}

} // namespace rematch
