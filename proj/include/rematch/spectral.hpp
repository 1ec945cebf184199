#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "rematch/errors.hpp"
#include "rematch/log.hpp"
#include "rematch/mesh.hpp"

namespace rematch {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Cotangent stiffness S and lumped (diagonal) mass A.
struct LaplacianPair {
  SparseMatrix stiffness;
  Eigen::VectorXd mass;
};

/// Generalized eigenpairs S phi = lambda A phi, ascending, A-orthonormal.
struct SpectralBasis {
  Eigen::MatrixXd phi;
  Eigen::VectorXd lambda;

  int k() const { return static_cast<int>(lambda.size()); }
  int num_vertices() const { return static_cast<int>(phi.rows()); }

  /// The first `k` pairs.
  SpectralBasis truncated(int k) const {
    if (k < 1 || k > this->k()) throw UsageError("basis truncation out of range");
    return {phi.leftCols(k), lambda.head(k)};
  }
};

inline constexpr double kCotClamp = 1e6;

inline LaplacianPair build_laplacian(const TriMesh &mesh) {
  const int n = mesh.num_vertices();
  const double total = mesh.total_area();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(12 * static_cast<std::size_t>(mesh.num_triangles()));
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(n);
  int degenerate = 0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Tri &f = mesh.triangle(t);
    const double area = mesh.triangle_area(t);
    double longest2 = 0;
    for (int i = 0; i < 3; ++i)
      longest2 = std::max(longest2, (mesh.position(f[i]) - mesh.position(f[(i + 1) % 3])).squaredNorm());
    if (!(area > 1e-14 * longest2)) {
      ++degenerate;
      for (int c : f) mass[c] += 1e-12 * total / 3.0;
      continue;
    }
    for (int c : f) mass[c] += area / 3.0;
    for (int i = 0; i < 3; ++i) {
      // Angle at corner i is opposite edge (i+1, i+2).
      const int a = f[(i + 1) % 3], b = f[(i + 2) % 3];
      const Vec3 u = mesh.position(a) - mesh.position(f[i]), w = mesh.position(b) - mesh.position(f[i]);
      const double cot = std::clamp(u.dot(w) / (2.0 * area), -kCotClamp, kCotClamp);
      const double wgt = 0.5 * cot;
      trip.emplace_back(a, b, -wgt);
      trip.emplace_back(b, a, -wgt);
      trip.emplace_back(a, a, wgt);
      trip.emplace_back(b, b, wgt);
    }
  }
  if (degenerate > 0)
    log::warn(std::to_string(degenerate) + " degenerate triangles contribute no stiffness");
  LaplacianPair lap;
  lap.stiffness.resize(n, n);
  lap.stiffness.setFromTriplets(trip.begin(), trip.end());
  lap.stiffness.makeCompressed();
  lap.mass = std::move(mass);
  return lap;
}

// ---------------------------------------------------------------------------
// Eigensolver

struct EigenOptions {
  double tol = 1e-10;           // Ritz residual relative to the Ritz value
  int block = 8;                // block size; must cover eigenvalue multiplicities
  int dense_threshold = 400;    // below this vertex count use a dense solver
  std::uint64_t seed = 0x5eed;  // start block
};

/// Dense generalized solve through the symmetric reduction
/// A^{-1/2} S A^{-1/2}.
inline SpectralBasis dense_eigenbasis(const LaplacianPair &lap, int k) {
  const int n = static_cast<int>(lap.mass.size());
  const Eigen::VectorXd d = lap.mass.cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd b = d.asDiagonal() * Eigen::MatrixXd(lap.stiffness) * d.asDiagonal();
  b = 0.5 * (b + b.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b);
  if (es.info() != Eigen::Success) throw NumericalError("dense eigensolver failed");
  SpectralBasis out;
  out.lambda = es.eigenvalues().head(std::min(k, n));
  out.phi = d.asDiagonal() * es.eigenvectors().leftCols(std::min(k, n));
  return out;
}

namespace detail {

/// Orthonormalizes the columns of w against v and among themselves (two
/// Gram-Schmidt passes); columns losing more than `drop` of their norm are
/// discarded.
inline Eigen::MatrixXd orthonormalize_against(const Eigen::MatrixXd &v, const Eigen::MatrixXd &w, int max_cols,
                                              double drop = 1e-10) {
  Eigen::MatrixXd q(w.rows(), 0);
  for (int j = 0; j < w.cols() && q.cols() < max_cols; ++j) {
    Eigen::VectorXd x = w.col(j);
    const double n0 = x.norm();
    if (n0 == 0.0) continue;
    for (int pass = 0; pass < 2; ++pass) {
      if (v.cols()) x -= v * (v.transpose() * x);
      if (q.cols()) x -= q * (q.transpose() * x);
    }
    const double n1 = x.norm();
    if (n1 <= drop * n0) continue;
    q.conservativeResize(Eigen::NoChange, q.cols() + 1);
    q.col(q.cols() - 1) = x / n1;
  }
  return q;
}

inline Eigen::MatrixXd gaussian_block(int n, int b, std::mt19937_64 &rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd r(n, b);
  for (int j = 0; j < b; ++j)
    for (int i = 0; i < n; ++i) r(i, j) = g(rng);
  return r;
}

/// Makes the first entry of significant magnitude of every column positive.
inline void fix_signs(Eigen::MatrixXd &phi) {
  for (int j = 0; j < phi.cols(); ++j) {
    const double big = phi.col(j).cwiseAbs().maxCoeff();
    for (int i = 0; i < phi.rows(); ++i)
      if (std::abs(phi(i, j)) > 1e-8 * big) {
        if (phi(i, j) < 0) phi.col(j) *= -1.0;
        break;
      }
  }
}

} // namespace detail

namespace detail {

/// Connected components of the sparsity graph of S; their A^{1/2}-weighted
/// indicators span the kernel of the symmetric operator exactly.
inline std::vector<int> stiffness_components(const SparseMatrix &s, int &count) {
  const int n = static_cast<int>(s.rows());
  std::vector<int> label(n, -1), stack;
  count = 0;
  for (int seed = 0; seed < n; ++seed) {
    if (label[seed] >= 0) continue;
    label[seed] = count;
    stack.push_back(seed);
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (SparseMatrix::InnerIterator it(s, v); it; ++it)
        if (label[it.row()] < 0) {
          label[it.row()] = count;
          stack.push_back(static_cast<int>(it.row()));
        }
    }
    ++count;
  }
  return label;
}

} // namespace detail

/// k smallest generalized eigenpairs. The kernel (one constant per connected
/// component) is written down directly; the remaining pairs come from a
/// shift-invert block Krylov iteration with thick restarts and full
/// reorthogonalization on the symmetric operator A^{1/2} (S - sigma A)^{-1}
/// A^{1/2}, restricted to the complement of the kernel.
inline SpectralBasis eigenbasis(const LaplacianPair &lap, int k, const EigenOptions &opt = {}) {
  const int n = static_cast<int>(lap.mass.size());
  if (k < 1 || k >= n) throw UsageError("eigenbasis size must satisfy 1 <= k < |V|");
  const int b = std::clamp(opt.block, 1, n);
  int ncomp = 0;
  const std::vector<int> comp = detail::stiffness_components(lap.stiffness, ncomp);
  const int kz = std::min(k, ncomp);
  const int kr = k - kz;
  const int m_max = std::min(n - ncomp, std::max(2 * kr + 2 * b, kr + 6 * b));
  if (n <= opt.dense_threshold || m_max >= n - ncomp) {
    SpectralBasis out = dense_eigenbasis(lap, k);
    detail::fix_signs(out.phi);
    return out;
  }

  const Eigen::VectorXd sqrt_a = lap.mass.cwiseSqrt();
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(n, ncomp);
  for (int i = 0; i < n; ++i) z(i, comp[i]) = sqrt_a[i];
  for (int c = 0; c < ncomp; ++c) z.col(c).normalize();
  auto deflate = [&](Eigen::MatrixXd x) -> Eigen::MatrixXd {
    x -= z * (z.transpose() * x);
    return x;
  };

  SpectralBasis out;
  out.lambda = Eigen::VectorXd::Zero(k);
  out.phi.resize(n, k);
  out.phi.leftCols(kz) = sqrt_a.cwiseInverse().asDiagonal() * z.leftCols(kz);
  if (kr == 0) return out;

  const double mean_s = lap.stiffness.diagonal().mean();
  const double mean_a = lap.mass.mean();
  const double sigma = -1e-8 * mean_s / mean_a;
  SparseMatrix shifted = lap.stiffness;
  for (int i = 0; i < n; ++i) shifted.coeffRef(i, i) -= sigma * lap.mass[i];
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(shifted);
  if (ldlt.info() != Eigen::Success) throw NumericalError("factorization of the shifted Laplacian failed");
  auto op = [&](const Eigen::MatrixXd &x) -> Eigen::MatrixXd {
    Eigen::MatrixXd y = ldlt.solve(sqrt_a.asDiagonal() * deflate(x));
    return deflate(sqrt_a.asDiagonal() * y);
  };

  std::mt19937_64 rng(opt.seed);
  auto random_block = [&](const Eigen::MatrixXd &against) {
    return detail::orthonormalize_against(against, deflate(detail::gaussian_block(n, b, rng)), b);
  };
  Eigen::MatrixXd v(n, 0), ov(n, 0);
  Eigen::MatrixXd q = random_block(v);
  const long long cap = 30LL * k;
  long long expansions = 0;
  for (;;) {
    while (v.cols() < m_max) {
      if (q.cols() == 0) q = random_block(v);
      if (q.cols() > m_max - v.cols()) q = q.leftCols(m_max - v.cols()).eval();
      Eigen::MatrixXd w = op(q);
      ++expansions;
      const int c = static_cast<int>(v.cols());
      v.conservativeResize(Eigen::NoChange, c + q.cols());
      ov.conservativeResize(Eigen::NoChange, c + q.cols());
      v.rightCols(q.cols()) = q;
      ov.rightCols(q.cols()) = w;
      q = detail::orthonormalize_against(v, deflate(w), b);
      if (q.cols() < b) {
        Eigen::MatrixXd both(n, v.cols() + q.cols());
        both << v, q;
        Eigen::MatrixXd pad = random_block(both);
        Eigen::MatrixXd joined(n, q.cols() + pad.cols());
        joined << q, pad;
        q = joined.leftCols(std::min<Eigen::Index>(b, joined.cols()));
      }
    }
    Eigen::MatrixXd h = v.transpose() * ov;
    h = 0.5 * (h + h.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
    const int m = static_cast<int>(h.rows());
    // Descending Ritz values of the inverted operator = ascending eigenvalues.
    Eigen::MatrixXd u = es.eigenvectors().rowwise().reverse();
    Eigen::VectorXd theta = es.eigenvalues().reverse();
    Eigen::MatrixXd y = v * u.leftCols(kr);
    Eigen::MatrixXd r = ov * u.leftCols(kr) - y * theta.head(kr).asDiagonal();
    std::vector<int> open;
    for (int i = 0; i < kr; ++i)
      if (r.col(i).norm() > opt.tol * std::abs(theta[i])) open.push_back(i);
    if (open.empty()) {
      for (int i = 0; i < kr; ++i) out.lambda[kz + i] = sigma + 1.0 / theta[i];
      out.phi.rightCols(kr) = sqrt_a.cwiseInverse().asDiagonal() * y;
      detail::fix_signs(out.phi);
      return out;
    }
    if (expansions >= cap)
      throw NumericalError("eigensolver did not converge (" + std::to_string(open.size()) + " of " +
                           std::to_string(k) + " pairs open after " + std::to_string(expansions) + " steps)");
    const int keep = std::min(m - b, std::max(kr, kr + (m_max - kr) / 2));
    // Next block: residuals of the open pairs, topped up with those of the
    // Ritz vectors just past the wanted set so the block stays full width.
    std::vector<int> order(open);
    for (int i = kr; i < std::min(m, kr + b); ++i) order.push_back(i);
    Eigen::MatrixXd ue(m, static_cast<Eigen::Index>(order.size()));
    Eigen::VectorXd te(ue.cols());
    for (std::size_t j = 0; j < order.size(); ++j) {
      ue.col(j) = u.col(order[j]);
      te[j] = theta[order[j]];
    }
    Eigen::MatrixXd res = deflate(ov * ue - (v * ue) * te.asDiagonal());
    v = (v * u.leftCols(keep)).eval();
    ov = (ov * u.leftCols(keep)).eval();
    q = detail::orthonormalize_against(v, res, b);
  }
}

/// max_ij |(Phi^T A Phi - I)_ij|
inline double a_orthonormality_error(const SpectralBasis &basis, const Eigen::VectorXd &mass) {
  Eigen::MatrixXd g = basis.phi.transpose() * mass.asDiagonal() * basis.phi;
  return (g - Eigen::MatrixXd::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
}

/// max_j ||S phi_j - lambda_j A phi_j|| / ||S||_F
inline double eigen_residual(const SpectralBasis &basis, const LaplacianPair &lap) {
  Eigen::MatrixXd r = lap.stiffness * basis.phi - lap.mass.asDiagonal() * basis.phi * basis.lambda.asDiagonal();
  return r.colwise().norm().maxCoeff() / lap.stiffness.norm();
}

// ---------------------------------------------------------------------------
// Descriptors

enum class DescriptorKind { wks, hks };

inline std::string to_string(DescriptorKind k) { return k == DescriptorKind::wks ? "wks" : "hks"; }
inline DescriptorKind descriptor_kind_from_string(const std::string &s) {
  if (s == "wks") return DescriptorKind::wks;
  if (s == "hks") return DescriptorKind::hks;
  throw UsageError("unknown descriptor kind '" + s + "'");
}

struct DescriptorSet {
  Eigen::MatrixXd values; // |V| x d
  DescriptorKind kind = DescriptorKind::wks;
  Eigen::VectorXd samples; // log-energies (wks) or times (hks)
  double sigma = 0.0;      // wks band width
};

/// Wave or heat kernel signatures from a spectral basis. Eigenvalues at the
/// kernel (per-component constants) are skipped. Each column is scaled to
/// unit A-norm.
inline DescriptorSet descriptors(const SpectralBasis &basis, const Eigen::VectorXd &mass, DescriptorKind kind,
                                 int d) {
  if (basis.k() < 2) throw UsageError("descriptors need at least 2 eigenpairs");
  if (d < 1) throw UsageError("descriptor count must be positive");
  const double lmax = basis.lambda[basis.k() - 1];
  int first = 0;
  while (first < basis.k() && basis.lambda[first] <= 1e-9 * std::abs(lmax)) ++first;
  if (first >= basis.k() - 1) throw UsageError("descriptors need at least 2 nonzero eigenvalues");
  const int kk = basis.k() - first;
  const Eigen::VectorXd lam = basis.lambda.tail(kk);
  const Eigen::MatrixXd phi2 = basis.phi.rightCols(kk).array().square();

  DescriptorSet out;
  out.kind = kind;
  out.samples.resize(d);
  Eigen::MatrixXd coef(kk, d);
  if (kind == DescriptorKind::wks) {
    const double emin0 = std::log(lam[0]), emax0 = std::log(lam[kk - 1]);
    out.sigma = 7.0 * (emax0 - emin0) / d;
    const double emin = emin0 + 2 * out.sigma, emax = emax0 - 2 * out.sigma;
    for (int i = 0; i < d; ++i) out.samples[i] = d == 1 ? 0.5 * (emin + emax) : emin + (emax - emin) * i / (d - 1);
    for (int i = 0; i < d; ++i) {
      double norm = 0;
      for (int j = 0; j < kk; ++j) {
        const double z = (out.samples[i] - std::log(lam[j])) / out.sigma;
        coef(j, i) = std::exp(-0.5 * z * z);
        norm += coef(j, i);
      }
      if (norm > 0) coef.col(i) /= norm;
    }
  } else {
    const double tmin = 4.0 * std::log(10.0) / lam[kk - 1], tmax = 4.0 * std::log(10.0) / lam[0];
    for (int i = 0; i < d; ++i) {
      out.samples[i] = d == 1 ? tmin : std::exp(std::log(tmin) + (std::log(tmax) - std::log(tmin)) * i / (d - 1));
      for (int j = 0; j < kk; ++j) coef(j, i) = std::exp(-out.samples[i] * lam[j]);
    }
  }
  out.values = phi2 * coef;
  for (int i = 0; i < d; ++i) {
    const double nrm = std::sqrt(out.values.col(i).dot(mass.asDiagonal() * out.values.col(i)));
    if (nrm > 0) out.values.col(i) /= nrm;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Basis cache

/// FNV-1a over vertex coordinates, triangle indices and k.
inline std::uint64_t basis_cache_key(const TriMesh &mesh, int k) {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&](const void *p, std::size_t len) {
    const auto *c = static_cast<const unsigned char *>(p);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= c[i];
      h *= 1099511628211ULL;
    }
  };
  for (const Vec3 &v : mesh.vertices()) feed(v.data(), 3 * sizeof(double));
  for (const Tri &f : mesh.triangles()) feed(f.data(), sizeof f);
  feed(&k, sizeof k);
  return h;
}

inline std::filesystem::path basis_cache_path(const std::filesystem::path &dir, const TriMesh &mesh, int k) {
  char name[32];
  std::snprintf(name, sizeof name, "%016llx.basis", static_cast<unsigned long long>(basis_cache_key(mesh, k)));
  return dir / name;
}

/// Binary: int64 |V|, int64 k, row-major Phi, then Lambda.
inline void save_basis(const std::filesystem::path &path, const SpectralBasis &basis) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  const std::int64_t hdr[2] = {basis.num_vertices(), basis.k()};
  f.write(reinterpret_cast<const char *>(hdr), sizeof hdr);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = basis.phi;
  f.write(reinterpret_cast<const char *>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
  f.write(reinterpret_cast<const char *>(basis.lambda.data()),
          static_cast<std::streamsize>(basis.lambda.size() * sizeof(double)));
}

inline SpectralBasis load_basis(const std::filesystem::path &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  std::int64_t hdr[2];
  if (!f.read(reinterpret_cast<char *>(hdr), sizeof hdr) || hdr[0] < 0 || hdr[1] < 0)
    throw IoError(path.string() + ": bad basis header");
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(hdr[0], hdr[1]);
  SpectralBasis b;
  b.lambda.resize(hdr[1]);
  f.read(reinterpret_cast<char *>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
  f.read(reinterpret_cast<char *>(b.lambda.data()), static_cast<std::streamsize>(b.lambda.size() * sizeof(double)));
  if (!f) throw IoError(path.string() + ": truncated basis file");
  b.phi = rm;
  return b;
}

/// Laplacian + eigenbasis, through the on-disk cache when `cache_dir` is set.
inline SpectralBasis cached_eigenbasis(const TriMesh &mesh, const LaplacianPair &lap, int k,
                                       const std::optional<std::filesystem::path> &cache_dir,
                                       const EigenOptions &opt = {}) {
  if (cache_dir) {
    const auto p = basis_cache_path(*cache_dir, mesh, k);
    if (std::filesystem::exists(p)) {
      SpectralBasis b = load_basis(p);
      if (b.num_vertices() == mesh.num_vertices() && b.k() == k) return b;
    }
    SpectralBasis b = eigenbasis(lap, k, opt);
    std::filesystem::create_directories(*cache_dir);
    save_basis(p, b);
    return b;
  }
  return eigenbasis(lap, k, opt);
}

} // namespace rematch
