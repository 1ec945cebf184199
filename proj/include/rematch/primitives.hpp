#pragma once

// Procedural meshes used by tests, benchmarks and the CLI's self-checks.

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <tuple>
#include <vector>

#include "rematch/mesh.hpp"

namespace rematch::primitives {

inline TriMesh octahedron(double radius = 1.0) {
  std::vector<Vec3> v = {{radius, 0, 0}, {-radius, 0, 0}, {0, radius, 0},
                         {0, -radius, 0}, {0, 0, radius}, {0, 0, -radius}};
  std::vector<Tri> f = {{0, 2, 4}, {2, 1, 4}, {1, 3, 4}, {3, 0, 4},
                        {2, 0, 5}, {1, 2, 5}, {3, 1, 5}, {0, 3, 5}};
  return TriMesh(std::move(v), std::move(f));
}

inline TriMesh icosahedron() {
  const double p = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, p, 0}, {1, p, 0}, {-1, -p, 0}, {1, -p, 0}, {0, -1, p}, {0, 1, p},
                         {0, -1, -p}, {0, 1, -p}, {p, 0, -1}, {p, 0, 1}, {-p, 0, -1}, {-p, 0, 1}};
  for (auto &x : v) x.normalize();
  std::vector<Tri> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                        {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                        {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                        {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  return TriMesh(std::move(v), std::move(f));
}

/// Geodesic sphere: each icosahedron face split into freq^2 triangles and
/// projected to the sphere. 10*freq^2 + 2 vertices.
inline TriMesh geodesic_sphere(int freq, double radius = 1.0) {
  const TriMesh ico = icosahedron();
  std::vector<Vec3> verts;
  std::vector<Tri> tris;
  // Shared vertices identified by (sorted corner ids, lattice weights).
  std::map<std::array<int, 6>, int> ids;
  for (const Tri &f : ico.triangles()) {
    std::vector<std::vector<int>> local(freq + 1);
    for (int i = 0; i <= freq; ++i) {
      for (int j = 0; i + j <= freq; ++j) {
        const int k = freq - i - j; // weights: corner0 k, corner1 i, corner2 j
        std::array<std::pair<int, int>, 3> w = {{{f[0], k}, {f[1], i}, {f[2], j}}};
        for (auto &c : w)
          if (c.second == 0) c.first = std::numeric_limits<int>::max();
        std::sort(w.begin(), w.end());
        std::array<int, 6> key{};
        for (int q = 0; q < 3; ++q) {
          key[2 * q] = w[q].first;
          key[2 * q + 1] = w[q].second;
        }
        auto [it, fresh] = ids.try_emplace(key, static_cast<int>(verts.size()));
        if (fresh) {
          Vec3 p = (k * ico.position(f[0]) + i * ico.position(f[1]) + j * ico.position(f[2])) / freq;
          verts.push_back(radius * p.normalized());
        }
        local[i].push_back(it->second);
      }
    }
    for (int i = 0; i < freq; ++i)
      for (int j = 0; i + j < freq; ++j) {
        tris.push_back({local[i][j], local[i + 1][j], local[i][j + 1]});
        if (i + j + 1 < freq) tris.push_back({local[i + 1][j], local[i + 1][j + 1], local[i][j + 1]});
      }
  }
  return TriMesh(std::move(verts), std::move(tris));
}

/// Icosphere at subdivision level L (10*4^L + 2 vertices).
inline TriMesh icosphere(int level, double radius = 1.0) { return geodesic_sphere(1 << level, radius); }

inline TriMesh torus(int n_major, int n_minor, double major_radius = 1.0, double minor_radius = 0.35) {
  std::vector<Vec3> v;
  std::vector<Tri> f;
  for (int i = 0; i < n_major; ++i) {
    const double u = 2.0 * std::numbers::pi * i / n_major;
    for (int j = 0; j < n_minor; ++j) {
      const double w = 2.0 * std::numbers::pi * j / n_minor;
      const double r = major_radius + minor_radius * std::cos(w);
      v.emplace_back(r * std::cos(u), r * std::sin(u), minor_radius * std::sin(w));
    }
  }
  auto id = [&](int i, int j) { return (i % n_major) * n_minor + (j % n_minor); };
  for (int i = 0; i < n_major; ++i)
    for (int j = 0; j < n_minor; ++j) {
      f.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      f.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  return TriMesh(std::move(v), std::move(f));
}

/// Flat rectangular grid in the z = 0 plane with alternating diagonals.
inline TriMesh grid_patch(int nx, int ny, double width = 1.0, double height = 1.0) {
  std::vector<Vec3> v;
  std::vector<Tri> f;
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i) v.emplace_back(width * i / nx, height * j / ny, 0.0);
  auto id = [&](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      if ((i + j) % 2 == 0) {
        f.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
        f.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
      } else {
        f.push_back({id(i, j), id(i + 1, j), id(i, j + 1)});
        f.push_back({id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)});
      }
    }
  return TriMesh(std::move(v), std::move(f));
}

/// Open tube sampled on an (around x along) grid. `frame(t, theta)` returns the
/// 3D position for axial parameter t in [0,1] and angle theta.
inline TriMesh tube(int n_around, int n_along, const std::function<Vec3(double, double)> &frame) {
  std::vector<Vec3> v;
  std::vector<Tri> f;
  for (int j = 0; j <= n_along; ++j)
    for (int i = 0; i < n_around; ++i)
      v.push_back(frame(static_cast<double>(j) / n_along, 2.0 * std::numbers::pi * i / n_around));
  auto id = [&](int i, int j) { return j * n_around + (i % n_around); };
  for (int j = 0; j < n_along; ++j)
    for (int i = 0; i < n_around; ++i) {
      f.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      f.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  return TriMesh(std::move(v), std::move(f));
}

/// Radius profile of the synthetic tube used for near-isometric tests: tapered
/// along the axis with one off-axis bump, so the intrinsic geometry has no
/// rotational or end-swap symmetry.
inline double tube_radius(double t, double theta, double base_radius) {
  const double taper = 1.0 + 0.5 * t;
  const double d1 = std::remainder(theta - 1.0, 2.0 * std::numbers::pi);
  const double d2 = std::remainder(theta - 2.8, 2.0 * std::numbers::pi);
  const double d3 = std::remainder(theta - 4.6, 2.0 * std::numbers::pi);
  // Bumps at different angles and heights leave no intrinsic symmetry.
  const double bump = 0.45 * std::exp(-(d1 * d1) / 0.35 - (t - 0.3) * (t - 0.3) / 0.01) +
                      0.3 * std::exp(-(d2 * d2) / 0.25 - (t - 0.65) * (t - 0.65) / 0.008) +
                      0.35 * std::exp(-(d3 * d3) / 0.3 - (t - 0.85) * (t - 0.85) / 0.006);
  return base_radius * taper * (1.0 + bump);
}

/// Tube whose axis is bent along a circular arc of `bend_angle` radians
/// (0 = straight). The cross-section is unchanged, so for a slender tube the
/// pair (straight, bent) is near-isometric with identity correspondence.
inline TriMesh bent_cylinder(double bend_angle, int n_around = 48, int n_along = 120, double length = 4.0,
                             double base_radius = 0.35) {
  auto frame = [=](double t, double theta) -> Vec3 {
    const double r = tube_radius(t, theta, base_radius);
    const double s = t * length;
    Vec3 centre, tangent_normal, binormal(0, 1, 0);
    if (std::abs(bend_angle) < 1e-12) {
      centre = Vec3(0, 0, s);
      tangent_normal = Vec3(1, 0, 0);
    } else {
      const double R = length / bend_angle;
      const double a = s / R;
      centre = Vec3(R * (1.0 - std::cos(a)), 0, R * std::sin(a));
      tangent_normal = Vec3(std::cos(a), 0, -std::sin(a));
    }
    return centre + r * (std::cos(theta) * tangent_normal + std::sin(theta) * binormal);
  };
  return tube(n_around, n_along, frame);
}

/// Boundary surface of a voxel set, each exposed voxel face split into
/// sub x sub quads. Occupancy must not contain diagonal-only contacts.
inline TriMesh voxel_surface(int nx, int ny, int nz, const std::function<bool(int, int, int)> &occupied,
                             int sub = 1, double voxel_size = 1.0) {
  auto occ = [&](int x, int y, int z) {
    return x >= 0 && y >= 0 && z >= 0 && x < nx && y < ny && z < nz && occupied(x, y, z);
  };
  std::map<std::array<int, 3>, int> ids;
  std::vector<Vec3> verts;
  std::vector<Tri> tris;
  auto vid = [&](const std::array<int, 3> &lat) {
    auto [it, fresh] = ids.try_emplace(lat, static_cast<int>(verts.size()));
    if (fresh) verts.emplace_back(lat[0] * voxel_size / sub, lat[1] * voxel_size / sub, lat[2] * voxel_size / sub);
    return it->second;
  };
  for (int x = 0; x < nx; ++x)
    for (int y = 0; y < ny; ++y)
      for (int z = 0; z < nz; ++z) {
        if (!occ(x, y, z)) continue;
        for (int axis = 0; axis < 3; ++axis)
          for (int dir = -1; dir <= 1; dir += 2) {
            std::array<int, 3> nb{x, y, z};
            nb[axis] += dir;
            if (occ(nb[0], nb[1], nb[2])) continue;
            const int u = (axis + 1) % 3, w = (axis + 2) % 3;
            std::array<int, 3> base{x * sub, y * sub, z * sub};
            if (dir > 0) base[axis] += sub;
            for (int a = 0; a < sub; ++a)
              for (int b = 0; b < sub; ++b) {
                auto corner = [&](int da, int db) {
                  std::array<int, 3> p = base;
                  p[u] += a + da;
                  p[w] += b + db;
                  return vid(p);
                };
                int c00 = corner(0, 0), c10 = corner(1, 0), c11 = corner(1, 1), c01 = corner(0, 1);
                if (dir > 0) {
                  tris.push_back({c00, c10, c11});
                  tris.push_back({c00, c11, c01});
                } else {
                  tris.push_back({c00, c11, c10});
                  tris.push_back({c00, c01, c11});
                }
              }
          }
      }
  return TriMesh(std::move(verts), std::move(tris));
}

/// Closed slab with `holes` square through-holes: a genus-`holes` surface.
inline TriMesh holed_slab(int holes, int sub = 3) {
  const int nx = 4 * holes + 3, ny = 5, nz = 1;
  return voxel_surface(
      nx, ny, nz,
      [&](int x, int y, int) {
        for (int h = 0; h < holes; ++h)
          if (x == 3 + 4 * h && y == 2) return false;
        return true;
      },
      sub);
}

/// Disjoint union; vertex indices of later meshes are offset.
inline TriMesh merge(const std::vector<TriMesh> &parts) {
  std::vector<Vec3> v;
  std::vector<Tri> f;
  for (const TriMesh &m : parts) {
    const int off = static_cast<int>(v.size());
    v.insert(v.end(), m.vertices().begin(), m.vertices().end());
    for (Tri t : m.triangles()) f.push_back({t[0] + off, t[1] + off, t[2] + off});
  }
  return TriMesh(std::move(v), std::move(f));
}

inline TriMesh transformed(const TriMesh &m, const Eigen::Matrix3d &rot, const Vec3 &shift = Vec3::Zero(),
                           double scale = 1.0) {
  std::vector<Vec3> v;
  v.reserve(m.num_vertices());
  for (const Vec3 &p : m.vertices()) v.push_back(scale * (rot * p) + shift);
  return TriMesh(std::move(v), m.triangles());
}

/// Every `stride`-th triangle is split 1-to-3 at a point very close to one of
/// its edges, producing two sliver triangles.
inline TriMesh with_slivers(const TriMesh &m, int stride = 3, double eps = 1e-3) {
  std::vector<Vec3> v = m.vertices();
  std::vector<Tri> f;
  for (int t = 0; t < m.num_triangles(); ++t) {
    const Tri &c = m.triangle(t);
    if (t % stride != 0) {
      f.push_back(c);
      continue;
    }
    const int n = static_cast<int>(v.size());
    v.push_back((0.5 - eps / 2) * m.position(c[0]) + (0.5 - eps / 2) * m.position(c[1]) + eps * m.position(c[2]));
    f.push_back({c[0], c[1], n});
    f.push_back({c[1], c[2], n});
    f.push_back({c[2], c[0], n});
  }
  return TriMesh(std::move(v), std::move(f));
}

/// Two tetrahedra sharing a single apex: a non-manifold (pinched) vertex.
inline TriMesh glued_tetrahedra() {
  std::vector<Vec3> v = {{0, 0, 0},  {1, 0, 0},  {0, 1, 0},  {0, 0, 1},
                         {-1, 0, 0}, {0, -1, 0}, {0, 0, -1}};
  std::vector<Tri> f = {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3},
                        {0, 4, 5}, {0, 6, 4}, {0, 5, 6}, {4, 6, 5}};
  return TriMesh(std::move(v), std::move(f));
}

/// Uniformly random rotation (deterministic given the seed).
inline Eigen::Matrix3d random_rotation(unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
  return q.normalized().toRotationMatrix();
}

/// Copy of `m` with vertices reordered: new vertex i is old vertex perm[i].
inline TriMesh permuted(const TriMesh &m, const std::vector<int> &perm) {
  std::vector<int> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = static_cast<int>(i);
  std::vector<Vec3> v(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) v[i] = m.position(perm[i]);
  std::vector<Tri> f;
  for (Tri t : m.triangles()) f.push_back({inv[t[0]], inv[t[1]], inv[t[2]]});
  return TriMesh(std::move(v), std::move(f));
}

} // namespace rematch::primitives
