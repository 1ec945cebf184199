#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <numeric>
#include <vector>

#include "rematch/errors.hpp"
#include "rematch/mesh.hpp"

namespace rematch {

/// A point on a triangle: bary[i] weights corner i of `triangle`.
struct SurfacePoint {
  int triangle = -1;
  std::array<double, 3> bary{1.0, 0.0, 0.0};
  double dist2 = std::numeric_limits<double>::infinity();
};

/// Closest point of triangle (a, b, c) to p, by Voronoi region of the
/// triangle: vertex and edge regions return exact zeros in the unused
/// coordinates.
inline std::array<double, 3> closest_on_triangle(const Vec3 &p, const Vec3 &a, const Vec3 &b, const Vec3 &c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return {1, 0, 0};
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return {0, 1, 0};
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) {
    const double t = d1 / (d1 - d3);
    return {1 - t, t, 0};
  }
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return {0, 0, 1};
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) {
    const double t = d2 / (d2 - d6);
    return {1 - t, 0, t};
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    const double t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {0, 1 - t, t};
  }
  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return {std::max(0.0, 1.0 - v - w), v, w};
}

/// Bounding-volume hierarchy over the triangles of a mesh for exact
/// closest-point queries. Equidistant triangles (up to a relative 1e-12)
/// resolve to the lowest triangle index.
class AabbTree {
public:
  explicit AabbTree(const TriMesh &mesh, int leaf_size = 4) : mesh_(&mesh), leaf_(std::max(1, leaf_size)) {
    if (mesh.num_triangles() == 0) throw UsageError("closest-point search on a mesh without triangles");
    const int n = mesh.num_triangles();
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), 0);
    centroid_.resize(n);
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
    for (int t = 0; t < n; ++t) {
      const Tri &f = mesh.triangle(t);
      centroid_[t] = (mesh.position(f[0]) + mesh.position(f[1]) + mesh.position(f[2])) / 3.0;
      for (int i = 0; i < 3; ++i) {
        lo = lo.cwiseMin(mesh.position(f[i]));
        hi = hi.cwiseMax(mesh.position(f[i]));
      }
    }
    const double diag = (hi - lo).norm();
    abs_tie_ = 1e-24 * diag * diag;
    build(0, n);
  }

  /// Point of the mesh surface nearest to q.
  SurfacePoint closest(const Vec3 &q) const {
    SurfacePoint best;
    search(0, q, best);
    return best;
  }

  /// Brute-force scan with the same tie rule, for verification.
  SurfacePoint closest_brute(const Vec3 &q) const {
    SurfacePoint best;
    for (int t = 0; t < mesh_->num_triangles(); ++t) consider(t, q, best);
    return best;
  }

private:
  struct Node {
    Vec3 lo, hi;
    int begin, end;
    int left = -1, right = -1;
  };

  int build(int begin, int end) {
    const int id = static_cast<int>(nodes_.size());
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
    Vec3 clo = lo, chi = hi;
    for (int i = begin; i < end; ++i) {
      const Tri &f = mesh_->triangle(order_[i]);
      for (int c = 0; c < 3; ++c) {
        lo = lo.cwiseMin(mesh_->position(f[c]));
        hi = hi.cwiseMax(mesh_->position(f[c]));
      }
      clo = clo.cwiseMin(centroid_[order_[i]]);
      chi = chi.cwiseMax(centroid_[order_[i]]);
    }
    nodes_.push_back({lo, hi, begin, end});
    if (end - begin <= leaf_) return id;
    int axis;
    (chi - clo).maxCoeff(&axis);
    const int mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int a, int b) {
      const double ca = centroid_[a][axis], cb = centroid_[b][axis];
      return ca < cb || (ca == cb && a < b);
    });
    const int l = build(begin, mid);
    const int r = build(mid, end);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  static double box_dist2(const Node &n, const Vec3 &q) {
    const Vec3 d = (n.lo - q).cwiseMax(q - n.hi).cwiseMax(0.0);
    return d.squaredNorm();
  }

  bool tie(double a, double b) const { return std::abs(a - b) <= 1e-12 * std::max(a, b) + abs_tie_; }

  void consider(int t, const Vec3 &q, SurfacePoint &best) const {
    const Tri &f = mesh_->triangle(t);
    const auto w = closest_on_triangle(q, mesh_->position(f[0]), mesh_->position(f[1]), mesh_->position(f[2]));
    const Vec3 p = w[0] * mesh_->position(f[0]) + w[1] * mesh_->position(f[1]) + w[2] * mesh_->position(f[2]);
    const double d = (p - q).squaredNorm();
    if (best.triangle < 0 || (tie(d, best.dist2) ? t < best.triangle : d < best.dist2)) {
      best.triangle = t;
      best.bary = w;
      best.dist2 = d;
    }
  }

  void search(int id, const Vec3 &q, SurfacePoint &best) const {
    const Node &n = nodes_[id];
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) consider(order_[i], q, best);
      return;
    }
    const double dl = box_dist2(nodes_[n.left], q), dr = box_dist2(nodes_[n.right], q);
    const int first = dl <= dr ? n.left : n.right, second = dl <= dr ? n.right : n.left;
    const double d_first = std::min(dl, dr), d_second = std::max(dl, dr);
    auto open = [&](double d) { return best.triangle < 0 || d <= best.dist2 || tie(d, best.dist2); };
    if (open(d_first)) search(first, q, best);
    if (open(d_second)) search(second, q, best);
  }

  const TriMesh *mesh_;
  int leaf_;
  double abs_tie_ = 0.0;
  std::vector<int> order_;
  std::vector<Vec3> centroid_;
  std::vector<Node> nodes_;
};

} // namespace rematch
