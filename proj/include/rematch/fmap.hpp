#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rematch/errors.hpp"
#include "rematch/kdtree.hpp"
#include "rematch/log.hpp"
#include "rematch/spectral.hpp"

// Orientation used everywhere in this header. A point map Pi : M -> N sends
// each vertex of M (the source) to a vertex of N (the target). It pulls
// functions back from N to M, and so does the functional map
//
//     C = Phi^T A_M Pi Psi        (k_M x k_N)
//
// which takes target-basis coefficients to source-basis coefficients:
// Pi Psi ~ Phi C. Point maps are recovered by matching rows of Phi C against
// rows of Psi.

namespace rematch {

struct PointMap {
  std::vector<int> target_of; // one target vertex per source vertex
  int num_target = 0;

  int num_source() const { return static_cast<int>(target_of.size()); }
};

struct FunctionalMap {
  Eigen::MatrixXd c; // k_source x k_target

  int k_source() const { return static_cast<int>(c.rows()); }
  int k_target() const { return static_cast<int>(c.cols()); }
};

/// C = Phi_k^T A Pi Psi_k with Pi realised as a row gather of Psi.
inline FunctionalMap fmap_from_pointmap(const PointMap &pi, const Eigen::MatrixXd &phi_src,
                                        const Eigen::VectorXd &mass_src, const Eigen::MatrixXd &psi_tgt, int k_src,
                                        int k_tgt) {
  if (pi.num_source() != phi_src.rows() || mass_src.size() != phi_src.rows())
    throw UsageError("point map and source basis disagree on the vertex count");
  if (pi.num_target != psi_tgt.rows()) throw UsageError("point map and target basis disagree on the vertex count");
  if (k_src < 1 || k_src > phi_src.cols() || k_tgt < 1 || k_tgt > psi_tgt.cols())
    throw UsageError("functional map size exceeds the basis");
  Eigen::MatrixXd gathered(pi.num_source(), k_tgt);
  for (int i = 0; i < pi.num_source(); ++i) {
    const int j = pi.target_of[i];
    if (j < 0 || j >= pi.num_target) throw UsageError("point map entry out of range");
    gathered.row(i) = psi_tgt.row(j).head(k_tgt);
  }
  return {phi_src.leftCols(k_src).transpose() * mass_src.asDiagonal() * gathered};
}

inline FunctionalMap fmap_from_pointmap(const PointMap &pi, const SpectralBasis &src, const Eigen::VectorXd &mass_src,
                                        const SpectralBasis &tgt, int k) {
  return fmap_from_pointmap(pi, src.phi, mass_src, tgt.phi, k, k);
}

/// Nearest row of emb_tgt for every row of emb_src * C.
inline PointMap pointmap_from_fmap(const FunctionalMap &fm, const Eigen::MatrixXd &emb_src,
                                   const Eigen::MatrixXd &emb_tgt, int threads = 1) {
  if (emb_src.rows() == 0 || emb_tgt.rows() == 0) throw UsageError("empty embedding");
  if (emb_src.cols() < fm.k_source() || emb_tgt.cols() < fm.k_target())
    throw UsageError("embedding has fewer columns than the functional map");
  const Eigen::MatrixXd query = emb_src.leftCols(fm.k_source()) * fm.c;
  const KdTree tree(emb_tgt.leftCols(fm.k_target()));
  return {tree.nearest_all(query, threads), static_cast<int>(emb_tgt.rows())};
}

struct FmapInitOptions {
  double mu_prod = 1e-1;
  double mu_lap = 1e-3;
};

namespace detail {

/// Phi^T A diag(f) Phi, the multiplication-by-f operator in the basis.
inline Eigen::MatrixXd multiplication_operator(const Eigen::MatrixXd &phi, const Eigen::VectorXd &mass,
                                               const Eigen::VectorXd &f) {
  return phi.transpose() * (mass.cwiseProduct(f)).asDiagonal() * phi;
}

/// Adds w * kron(a, b) into n (column-major vec convention).
inline void add_kron(Eigen::MatrixXd &n, const Eigen::MatrixXd &a, const Eigen::MatrixXd &b, double w) {
  const Eigen::Index p = b.rows(), q = b.cols();
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      if (a(i, j) != 0.0) n.block(i * p, j * q, p, q) += (w * a(i, j)) * b;
}

} // namespace detail

/// Descriptor-preserving initial map of size k0 x k0: least squares over
/// vec(C) of
///
///   |C B - A|^2 + mu_prod sum_j |C D_N^j - D_M^j C|^2 + mu_lap |C L_N - L_M C|^2
///
/// with A, B the source/target descriptor coefficients, D^j the
/// multiplication operators of descriptor j and the Laplacian term weighted
/// by (lambda_N_j - lambda_M_i)^2 scaled to unit Frobenius norm. A
/// rank-deficient system gets a warning and a small ridge.
inline FunctionalMap fmap_init(const DescriptorSet &desc_src, const DescriptorSet &desc_tgt,
                               const SpectralBasis &basis_src, const Eigen::VectorXd &mass_src,
                               const SpectralBasis &basis_tgt, const Eigen::VectorXd &mass_tgt, int k0,
                               const FmapInitOptions &opt = {}) {
  if (desc_src.kind != desc_tgt.kind || desc_src.values.cols() != desc_tgt.values.cols())
    throw UsageError("source and target descriptors differ in kind or count");
  if (k0 < 1 || k0 > basis_src.k() || k0 > basis_tgt.k()) throw UsageError("initial map size exceeds the basis");
  if (desc_src.values.rows() != basis_src.num_vertices() || desc_tgt.values.rows() != basis_tgt.num_vertices())
    throw UsageError("descriptor rows do not match the basis");
  const int k = k0;
  const Eigen::MatrixXd phi = basis_src.phi.leftCols(k), psi = basis_tgt.phi.leftCols(k);
  const Eigen::MatrixXd a = phi.transpose() * mass_src.asDiagonal() * desc_src.values;
  const Eigen::MatrixXd b = psi.transpose() * mass_tgt.asDiagonal() * desc_tgt.values;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(k, k);

  // Normal equations n vec(C) = rhs.
  Eigen::MatrixXd n = Eigen::MatrixXd::Zero(k * k, k * k);
  detail::add_kron(n, b * b.transpose(), eye, 1.0);
  const Eigen::MatrixXd ab = a * b.transpose();
  Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(ab.data(), k * k);

  if (opt.mu_prod > 0) {
    for (int j = 0; j < desc_src.values.cols(); ++j) {
      const Eigen::MatrixXd dm = detail::multiplication_operator(phi, mass_src, desc_src.values.col(j));
      const Eigen::MatrixXd dn = detail::multiplication_operator(psi, mass_tgt, desc_tgt.values.col(j));
      // (dn^T (x) I - I (x) dm)^T (dn^T (x) I - I (x) dm)
      detail::add_kron(n, dn * dn.transpose(), eye, opt.mu_prod);
      detail::add_kron(n, dn, dm, -opt.mu_prod);
      detail::add_kron(n, dn.transpose(), dm.transpose(), -opt.mu_prod);
      detail::add_kron(n, eye, dm.transpose() * dm, opt.mu_prod);
    }
  }
  if (opt.mu_lap > 0) {
    Eigen::MatrixXd sq(k, k);
    for (int j = 0; j < k; ++j)
      for (int i = 0; i < k; ++i) sq(i, j) = std::pow(basis_tgt.lambda[j] - basis_src.lambda[i], 2);
    const double nrm = sq.norm();
    if (nrm > 0) sq /= nrm;
    for (int j = 0; j < k; ++j)
      for (int i = 0; i < k; ++i) n(j * k + i, j * k + i) += opt.mu_lap * sq(i, j);
  }

  n = 0.5 * (n + n.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(n, Eigen::EigenvaluesOnly);
  const double top = std::max(es.eigenvalues().maxCoeff(), 0.0);
  if (es.eigenvalues().minCoeff() <= 1e-12 * top || top == 0.0) {
    log::warn("descriptor system is rank deficient; adding a ridge");
    const double ridge = top > 0 ? 1e-8 * top : 1e-8;
    n.diagonal().array() += ridge;
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(n);
  if (ldlt.info() != Eigen::Success) throw NumericalError("descriptor least squares failed");
  const Eigen::VectorXd x = ldlt.solve(rhs);
  if (!x.allFinite()) throw NumericalError("descriptor least squares produced non-finite values");
  return {Eigen::Map<const Eigen::MatrixXd>(x.data(), k, k)};
}

/// Alternates point-map extraction and re-projection, growing the map by
/// `step` until it reaches k_final. With k_final equal to the input size a
/// single projection round is run. `final_map`, when given, receives the
/// point map that produced the returned C.
inline FunctionalMap zoomout(const FunctionalMap &c0, const SpectralBasis &src, const Eigen::VectorXd &mass_src,
                             const SpectralBasis &tgt, int step, int k_final, int threads = 1,
                             PointMap *final_map = nullptr) {
  if (c0.k_source() != c0.k_target()) throw UsageError("zoomout needs a square initial map");
  const int k0 = c0.k_source();
  if (step < 1) throw UsageError("zoomout step must be positive");
  if (k_final < k0) throw UsageError("zoomout target size is below the initial size");
  if (k_final > src.k() || k_final > tgt.k()) throw UsageError("zoomout target size exceeds the basis");
  FunctionalMap c = c0;
  int k = k0;
  do {
    const int next = std::min(k + step, k_final);
    const int size = k == k_final ? k : next;
    PointMap pi = pointmap_from_fmap(c, src.phi, tgt.phi, threads);
    c = fmap_from_pointmap(pi, src.phi, mass_src, tgt.phi, size, size);
    if (final_map) *final_map = std::move(pi);
    k = size;
  } while (k < k_final);
  return c;
}

// ---------------------------------------------------------------------------
// Files

/// Text: "rows cols" then row-major values, one row per line.
inline void save_fmap(const std::filesystem::path &path, const FunctionalMap &fm) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f << fm.k_source() << ' ' << fm.k_target() << '\n';
  char buf[32];
  for (int i = 0; i < fm.k_source(); ++i) {
    for (int j = 0; j < fm.k_target(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", fm.c(i, j));
      f << (j ? " " : "") << buf;
    }
    f << '\n';
  }
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

inline FunctionalMap load_fmap(const std::filesystem::path &path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  long long r = -1, c = -1;
  if (!(f >> r >> c) || r < 1 || c < 1 || r > 100000 || c > 100000)
    throw IoError(path.string() + ": bad functional map header");
  FunctionalMap fm{Eigen::MatrixXd(r, c)};
  for (long long i = 0; i < r; ++i)
    for (long long j = 0; j < c; ++j)
      if (!(f >> fm.c(i, j))) throw IoError(path.string() + ": truncated functional map");
  if (!fm.c.allFinite()) throw IoError(path.string() + ": non-finite functional map entry");
  return fm;
}

/// One 0-based target index per line.
inline void save_pointmap(const std::filesystem::path &path, const PointMap &pm) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  for (int t : pm.target_of) f << t << '\n';
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

/// Reads indices; num_target, when positive, bounds them.
inline PointMap load_pointmap(const std::filesystem::path &path, int num_target = 0) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  PointMap pm;
  std::string line;
  int lineno = 0, hi = -1;
  while (std::getline(f, line)) {
    ++lineno;
    std::istringstream ss(line);
    long long v;
    if (!(ss >> v)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected an index");
    }
    if (v < 0 || (num_target > 0 && v >= num_target))
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": index out of range");
    pm.target_of.push_back(static_cast<int>(v));
    hi = std::max(hi, static_cast<int>(v));
  }
  pm.num_target = num_target > 0 ? num_target : hi + 1;
  return pm;
}

} // namespace rematch
