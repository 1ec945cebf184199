#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "rematch/aabb_tree.hpp"
#include "rematch/errors.hpp"
#include "rematch/fmap.hpp"
#include "rematch/idt_remesher.hpp"
#include "rematch/parallel.hpp"
#include "rematch/spectral.hpp"

namespace rematch {

using RowSparse = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// m x s row-stochastic matrix taking lowres vertex values to dense vertices.
struct ProlongationMap {
  RowSparse u;

  int num_dense() const { return static_cast<int>(u.rows()); }
  int num_lowres() const { return static_cast<int>(u.cols()); }
};

inline SurfacePoint closest_surface_point(const AabbTree &tree, const Vec3 &q) { return tree.closest(q); }

/// Row i holds the barycentric weights of the closest lowres surface point to
/// dense vertex i. `generator_of` (lowres vertex -> dense vertex, may be
/// empty) marks dense vertices that get exact unit rows.
inline ProlongationMap build_prolongation(const TriMesh &dense, const TriMesh &low,
                                          const std::vector<int> &generator_of, int threads = 1) {
  if (!generator_of.empty() && static_cast<int>(generator_of.size()) != low.num_vertices())
    throw UsageError("remesh output has inconsistent generator table");
  const int m = dense.num_vertices();
  std::vector<int> generator_row(m, -1);
  for (int v = 0; v < static_cast<int>(generator_of.size()); ++v) {
    const int g = generator_of[v];
    if (g < 0 || g >= m) throw UsageError("remesh generator outside the dense mesh");
    generator_row[g] = v;
  }
  const AabbTree tree(low);
  std::vector<std::array<std::pair<int, double>, 3>> rows(m);
  parallel_for(m, threads, [&](int b, int e) {
    for (int i = b; i < e; ++i) {
      auto &r = rows[i];
      r.fill({-1, 0.0});
      if (generator_row[i] >= 0) {
        r[0] = {generator_row[i], 1.0};
        continue;
      }
      const SurfacePoint sp = tree.closest(dense.position(i));
      const Tri &f = low.triangle(sp.triangle);
      for (int c = 0; c < 3; ++c)
        if (sp.bary[c] > 0.0) r[c] = {f[c], sp.bary[c]};
    }
  });
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(3 * static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i)
    for (const auto &[col, w] : rows[i])
      if (col >= 0) trip.emplace_back(i, col, w);
  ProlongationMap out;
  out.u.resize(m, low.num_vertices());
  out.u.setFromTriplets(trip.begin(), trip.end());
  out.u.makeCompressed();
  return out;
}

/// Prolongation against a remesh of `dense` itself. Vertices whose texel was
/// dropped are projected onto what remains.
inline ProlongationMap build_prolongation(const TriMesh &dense, const RemeshOutput &remesh, int threads = 1) {
  if (remesh.generator_of.size() != static_cast<std::size_t>(remesh.lowres.num_vertices()))
    throw UsageError("remesh output has inconsistent generator table");
  return build_prolongation(dense, remesh.lowres, remesh.generator_of, threads);
}

/// U * Phi, without re-orthonormalisation.
inline Eigen::MatrixXd extend_basis(const ProlongationMap &u, const Eigen::MatrixXd &low_phi) {
  if (low_phi.rows() != u.num_lowres()) throw UsageError("basis size does not match the prolongation map");
  return u.u * low_phi;
}

inline Eigen::MatrixXd extend_basis(const ProlongationMap &u, const SpectralBasis &low) {
  return extend_basis(u, low.phi);
}

/// Dense point map from a lowres functional map: nearest rows of U_N Psi for
/// the rows of (U_M Phi) C.
inline PointMap recover_dense_pointmap(const FunctionalMap &c, const ProlongationMap &u_src,
                                       const ProlongationMap &u_tgt, const SpectralBasis &low_src,
                                       const SpectralBasis &low_tgt, int threads = 1) {
  if (c.k_source() > low_src.k() || c.k_target() > low_tgt.k())
    throw UsageError("functional map is larger than the lowres bases");
  const Eigen::MatrixXd src = extend_basis(u_src, low_src.phi.leftCols(c.k_source()));
  const Eigen::MatrixXd tgt = extend_basis(u_tgt, low_tgt.phi.leftCols(c.k_target()));
  return pointmap_from_fmap(c, src, tgt, threads);
}

// ---------------------------------------------------------------------------
// Files

/// Text: "m s nnz", then "row col weight" sorted by (row, col).
inline void save_prolongation(const std::filesystem::path &path, const ProlongationMap &p) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f << p.num_dense() << ' ' << p.num_lowres() << ' ' << p.u.nonZeros() << '\n';
  char buf[64];
  for (int r = 0; r < p.u.outerSize(); ++r)
    for (RowSparse::InnerIterator it(p.u, r); it; ++it) {
      std::snprintf(buf, sizeof buf, "%d %d %.17g\n", r, static_cast<int>(it.col()), it.value());
      f << buf;
    }
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

inline ProlongationMap load_prolongation(const std::filesystem::path &path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  long long m, s, nnz;
  if (!(f >> m >> s >> nnz) || m < 0 || s < 0 || nnz < 0 || nnz > 3 * m)
    throw IoError(path.string() + ": bad prolongation header");
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(nnz);
  long long pr = -1, pc = -1;
  for (long long k = 0; k < nnz; ++k) {
    long long r, c;
    double w;
    if (!(f >> r >> c >> w)) throw IoError(path.string() + ": truncated prolongation file");
    if (r < 0 || r >= m || c < 0 || c >= s) throw IoError(path.string() + ": entry out of range");
    if (r < pr || (r == pr && c <= pc)) throw IoError(path.string() + ": entries not sorted by (row, col)");
    pr = r;
    pc = c;
    trip.emplace_back(static_cast<int>(r), static_cast<int>(c), w);
  }
  ProlongationMap p;
  p.u.resize(m, s);
  p.u.setFromTriplets(trip.begin(), trip.end());
  p.u.makeCompressed();
  return p;
}

} // namespace rematch
