#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include "rematch/geodesic.hpp"
#include "rematch/idt_remesher.hpp"
#include "rematch/primitives.hpp"
#include "rematch/spectral.hpp"

using namespace rematch;
namespace prim = rematch::primitives;

namespace {

// Reference: dense generalized solver straight from Eigen.
Eigen::VectorXd reference_eigenvalues(const LaplacianPair &lap, int k) {
  Eigen::MatrixXd s(lap.stiffness);
  Eigen::MatrixXd a = lap.mass.asDiagonal();
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(s, a);
  return es.eigenvalues().head(k);
}

} // namespace

TEST(Laplacian, RhombusCotWeights) {
  const double h = std::sqrt(3.0) / 2;
  TriMesh m({{0, 0, 0}, {1, 0, 0}, {0.5, h, 0}, {0.5, -h, 0}}, {{0, 1, 2}, {1, 0, 3}});
  LaplacianPair lap = build_laplacian(m);
  EXPECT_NEAR(lap.stiffness.coeff(0, 1), -1.0 / std::sqrt(3.0), 1e-12);
  // Boundary edge 0-2: one opposite angle of 60 degrees.
  EXPECT_NEAR(lap.stiffness.coeff(0, 2), -0.5 / std::sqrt(3.0), 1e-12);
  EXPECT_NEAR(lap.mass.sum(), 2 * std::sqrt(3.0) / 4, 1e-12);
}

TEST(Laplacian, StructuralInvariants) {
  for (const TriMesh &m : {prim::octahedron(), prim::torus(20, 9), prim::grid_patch(7, 5), prim::bent_cylinder(1.0, 16, 20)}) {
    LaplacianPair lap = build_laplacian(m);
    SparseMatrix st = lap.stiffness.transpose();
    EXPECT_NEAR((lap.stiffness - st).norm(), 0.0, 1e-12);
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(m.num_vertices());
    EXPECT_LE((lap.stiffness * ones).cwiseAbs().maxCoeff(), 1e-9 * lap.stiffness.norm());
    EXPECT_GT(lap.mass.minCoeff(), 0.0);
    EXPECT_NEAR(lap.mass.sum(), m.total_area(), 1e-9 * m.total_area());
  }
  EXPECT_NEAR(build_laplacian(prim::octahedron()).mass.sum(), 8 * std::sqrt(3.0) / 4 * 2, 1e-12);
}

TEST(Laplacian, DegenerateTrianglesClamped) {
  TriMesh m({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {1, 1, 0}}, {{0, 1, 3}, {1, 2, 3}, {0, 2, 1}});
  int warnings = 0;
  log::ScopedSink sink([&](const std::string &) { ++warnings; });
  LaplacianPair lap = build_laplacian(m);
  EXPECT_EQ(warnings, 1);
  EXPECT_TRUE(lap.stiffness.toDense().allFinite());
  EXPECT_GT(lap.mass.minCoeff(), 0.0);
}

TEST(Eigen, ConstantKernel) {
  TriMesh m = prim::icosphere(2);
  LaplacianPair lap = build_laplacian(m);
  SpectralBasis b = eigenbasis(lap, 1);
  EXPECT_NEAR(b.lambda[0], 0.0, 1e-8);
  const double c = 1.0 / std::sqrt(m.total_area());
  for (int v = 0; v < m.num_vertices(); ++v) EXPECT_NEAR(b.phi(v, 0), c, 1e-8);
}

TEST(Eigen, TwoComponentKernel) {
  TriMesh m = prim::merge({prim::icosphere(3), prim::transformed(prim::icosphere(3), Eigen::Matrix3d::Identity(), Vec3(4, 0, 0))});
  LaplacianPair lap = build_laplacian(m);
  SpectralBasis b = eigenbasis(lap, 3);
  EXPECT_NEAR(b.lambda[0], 0.0, 1e-8);
  EXPECT_NEAR(b.lambda[1], 0.0, 1e-8);
  EXPECT_GT(b.lambda[2], 0.5);
  // Both kernel vectors are constant on each component.
  const int half = m.num_vertices() / 2;
  for (int j = 0; j < 2; ++j) {
    EXPECT_NEAR(b.phi.col(j).head(half).maxCoeff() - b.phi.col(j).head(half).minCoeff(), 0.0, 1e-7);
    EXPECT_NEAR(b.phi.col(j).tail(half).maxCoeff() - b.phi.col(j).tail(half).minCoeff(), 0.0, 1e-7);
  }
}

TEST(Eigen, IterativeMatchesDenseReference) {
  for (const TriMesh &m : {prim::torus(40, 16), prim::bent_cylinder(1.2, 24, 30), prim::icosphere(3)}) {
    LaplacianPair lap = build_laplacian(m);
    EigenOptions opt;
    opt.dense_threshold = 0;
    const int k = 30;
    SpectralBasis b = eigenbasis(lap, k, opt);
    Eigen::VectorXd ref = reference_eigenvalues(lap, k);
    for (int i = 0; i < k; ++i) EXPECT_NEAR(b.lambda[i], ref[i], 1e-8 * (1 + ref[i])) << i;
    EXPECT_LE(a_orthonormality_error(b, lap.mass), 1e-6);
    EXPECT_LE(eigen_residual(b, lap), 1e-6);
    for (int i = 1; i < k; ++i) EXPECT_GE(b.lambda[i], b.lambda[i - 1]);
  }
}

TEST(Eigen, SphereSpectrum) {
  TriMesh m = prim::icosphere(4);
  LaplacianPair lap = build_laplacian(m);
  SpectralBasis b = eigenbasis(lap, 16);
  int idx = 0;
  for (int l = 0; l <= 3; ++l)
    for (int j = 0; j < 2 * l + 1; ++j, ++idx) {
      const double want = l * (l + 1);
      if (l == 0) EXPECT_NEAR(b.lambda[idx], 0.0, 1e-8);
      else EXPECT_NEAR(b.lambda[idx], want, 0.05 * want) << "index " << idx;
    }
  EXPECT_LE(a_orthonormality_error(b, lap.mass), 1e-6);
}

TEST(Eigen, SignConvention) {
  TriMesh m = prim::torus(30, 12);
  SpectralBasis b = eigenbasis(build_laplacian(m), 10);
  for (int j = 0; j < b.k(); ++j) {
    const double big = b.phi.col(j).cwiseAbs().maxCoeff();
    for (int i = 0; i < b.num_vertices(); ++i)
      if (std::abs(b.phi(i, j)) > 1e-8 * big) {
        EXPECT_GT(b.phi(i, j), 0.0);
        break;
      }
  }
}

TEST(Eigen, Errors) {
  LaplacianPair lap = build_laplacian(prim::octahedron());
  EXPECT_THROW(eigenbasis(lap, 0), UsageError);
  EXPECT_THROW(eigenbasis(lap, 6), UsageError);
}

TEST(Eigen, ScaleCovariance) {
  TriMesh m = prim::bent_cylinder(0.8, 24, 40);
  const double c = 3.0;
  TriMesh big = prim::transformed(m, Eigen::Matrix3d::Identity(), Vec3::Zero(), c);
  SpectralBasis a = eigenbasis(build_laplacian(m), 12), b = eigenbasis(build_laplacian(big), 12);
  for (int i = 1; i < 12; ++i) EXPECT_NEAR(b.lambda[i], a.lambda[i] / (c * c), 1e-9 * a.lambda[i]);
}

TEST(Eigen, RefinementStability) {
  TriMesh m = prim::icosphere(3);
  TriMesh fine = resample_large_triangles(m, 4 * m.num_vertices());
  ASSERT_GT(fine.num_vertices(), m.num_vertices());
  SpectralBasis a = eigenbasis(build_laplacian(m), 10), b = eigenbasis(build_laplacian(fine), 10);
  for (int i = 1; i < 10; ++i) EXPECT_NEAR(b.lambda[i], a.lambda[i], 0.05 * a.lambda[i]);
}

TEST(Descriptors, RigidInvariance) {
  TriMesh m = prim::bent_cylinder(1.0, 24, 40);
  TriMesh r = prim::transformed(m, prim::random_rotation(9), Vec3(1, 2, 3));
  LaplacianPair la = build_laplacian(m), lb = build_laplacian(r);
  SpectralBasis ba = eigenbasis(la, 30), bb = eigenbasis(lb, 30);
  for (DescriptorKind kind : {DescriptorKind::wks, DescriptorKind::hks}) {
    DescriptorSet da = descriptors(ba, la.mass, kind, 50), db = descriptors(bb, lb.mass, kind, 50);
    EXPECT_TRUE(da.values.allFinite());
    EXPECT_LE((da.values - db.values).cwiseAbs().maxCoeff(), 1e-6 * da.values.cwiseAbs().maxCoeff());
    DescriptorSet again = descriptors(ba, la.mass, kind, 50);
    EXPECT_EQ(again.values, da.values);
    for (int i = 0; i < 50; ++i)
      EXPECT_NEAR(da.values.col(i).dot(la.mass.asDiagonal() * da.values.col(i)), 1.0, 1e-9);
  }
}

TEST(Descriptors, NearIsometricPairDiscriminates) {
  TriMesh straight = prim::bent_cylinder(0.0, 32, 60), bent = prim::bent_cylinder(1.5, 32, 60);
  LaplacianPair la = build_laplacian(straight), lb = build_laplacian(bent);
  DescriptorSet da = descriptors(eigenbasis(la, 50), la.mass, DescriptorKind::wks, 100);
  DescriptorSet db = descriptors(eigenbasis(lb, 50), lb.mass, DescriptorKind::wks, 100);
  std::mt19937 rng(1);
  std::vector<double> ratio;
  for (int t = 0; t < 400; ++t) {
    int v = static_cast<int>(rng() % straight.num_vertices()), w = static_cast<int>(rng() % straight.num_vertices());
    if (v == w) continue;
    double same = (da.values.row(v) - db.values.row(v)).norm();
    double other = (da.values.row(v) - db.values.row(w)).norm();
    ratio.push_back(same / other);
  }
  std::nth_element(ratio.begin(), ratio.begin() + ratio.size() / 2, ratio.end());
  EXPECT_LT(ratio[ratio.size() / 2], 0.3);
}

TEST(Descriptors, Errors) {
  LaplacianPair lap = build_laplacian(prim::icosphere(1));
  SpectralBasis b = eigenbasis(lap, 1);
  EXPECT_THROW(descriptors(b, lap.mass, DescriptorKind::wks, 10), UsageError);
}

TEST(BasisCache, RoundTrip) {
  TriMesh m = prim::torus(20, 8);
  LaplacianPair lap = build_laplacian(m);
  auto dir = std::filesystem::temp_directory_path() / "rematch_basis_cache";
  std::filesystem::remove_all(dir);
  SpectralBasis a = cached_eigenbasis(m, lap, 12, dir);
  EXPECT_TRUE(std::filesystem::exists(basis_cache_path(dir, m, 12)));
  SpectralBasis b = cached_eigenbasis(m, lap, 12, dir);
  EXPECT_EQ(a.phi, b.phi);
  EXPECT_EQ(a.lambda, b.lambda);
  EXPECT_NE(basis_cache_key(m, 12), basis_cache_key(m, 13));
}
