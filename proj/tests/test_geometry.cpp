#include <cmath>
#include <numbers>

#include "nfps/geometry.hpp"
#include "nfps/pipeline.hpp"
#include "nfps/scenes.hpp"
#include "support.hpp"

using namespace nfps;

namespace {

CameraIntrinsics camera(double f) {
  CameraIntrinsics k;
  k.focal_px = f;
  return k;
}

// Analytic sphere of radius r centered on the optical axis, sampled at
// resolution n x n with focal length scaled so the field of view is fixed.
SyntheticScene sphere_at(int n) {
  SceneSpec spec;
  spec.intrinsics = CameraIntrinsics::centered(n, n, 160.0 * n / 128.0);
  return make_scene(spec);
}

}  // namespace

TEST_CASE("backproject examples") {
  const CameraIntrinsics k = camera(800.0);
  const Vec3 a = backproject({k.u0, k.v0}, 0.15, k);
  CHECK(a.isApprox(Vec3(0.0, 0.0, 0.15)));
  const Vec3 b = backproject({k.u0 + 80.0, k.v0}, 0.15, k);
  CHECK(b.x() == doctest::Approx(0.015));
  CHECK(b.y() == 0.0);
  CHECK(b.z() == 0.15);
  const Vec3 c = backproject({k.u0, k.v0 - 80.0}, 0.10, k);
  CHECK(c.y() == doctest::Approx(-0.010));
  CHECK(c.z() == 0.10);
  CHECK_THROWS_KIND(backproject({1.0, 1.0}, 0.0, k), ErrorKind::invalid_depth);
  CHECK_THROWS_KIND(backproject({1.0, 1.0}, -0.1, k), ErrorKind::invalid_depth);
}

TEST_CASE("backproject and reproject round-trip") {
  const CameraIntrinsics k;
  Rng rng = make_rng(1, 0);
  for (int i = 0; i < 1000; ++i) {
    const Pixel p{uniform(rng, 0.0, 128.0), uniform(rng, 0.0, 128.0)};
    const double z = uniform(rng, 0.05, 0.5);
    const Pixel q = reproject(backproject(p, z, k), k);
    CHECK(std::abs(q.u - p.u) < 1e-9);
    CHECK(std::abs(q.v - p.v) < 1e-9);
  }
}

TEST_CASE("backproject scales with depth") {
  const CameraIntrinsics k;
  const Pixel p{12.0, 99.0};
  const Vec3 x = backproject(p, 0.1, k);
  CHECK(backproject(p, 0.3, k).isApprox(3.0 * x, 1e-14));
}

TEST_CASE("viewing direction") {
  CHECK(viewing_direction(Vec3(0, 0, 0.1)).isApprox(Vec3(0, 0, -1)));
  const Vec3 v = viewing_direction(Vec3(0.1, 0, 0.1));
  CHECK(v.x() == doctest::Approx(-std::sqrt(0.5)));
  CHECK(v.z() == doctest::Approx(-std::sqrt(0.5)));
  CHECK(std::abs(v.norm() - 1.0) < 1e-12);
  CHECK_THROWS_KIND(viewing_direction(Vec3::Zero()), ErrorKind::degenerate_point);
}

TEST_CASE("intrinsics validation") {
  CameraIntrinsics k;
  k.focal_px = 0.0;
  CHECK_THROWS_KIND(k.validate(), ErrorKind::invalid_config);
  k = CameraIntrinsics{};
  k.u0 = 128.0;
  CHECK_THROWS_KIND(k.validate(), ErrorKind::invalid_config);
  k = CameraIntrinsics::centered(64, 32, 100.0);
  CHECK(k.u0 == 31.5);
  CHECK(k.v0 == 15.5);
}

TEST_CASE("frustum sampling") {
  const CameraIntrinsics k;
  Rng rng = make_rng(7, 0);
  for (int i = 0; i < 2000; ++i) {
    const FrustumSample s = sample_frustum(k, {0.10, 0.20}, rng);
    CHECK(s.z >= 0.10);
    CHECK(s.z <= 0.20);
    CHECK(s.pixel.u >= 0.0);
    CHECK(s.pixel.u < 128.0);
    CHECK(s.pixel.v < 128.0);
    CHECK(s.point.isApprox(backproject(s.pixel, s.z, k)));
  }
  const FrustumSample s = sample_frustum(k, {0.15, 0.15 + 1e-9}, rng);
  CHECK(s.z == doctest::Approx(0.15));
  CHECK_THROWS_KIND(sample_frustum(k, {0.2, 0.1}, rng), ErrorKind::invalid_config);
  CHECK_THROWS_KIND(sample_frustum(k, {0.0, 0.1}, rng), ErrorKind::invalid_config);
}

TEST_CASE("frustum depth is uniform (Kolmogorov-Smirnov)") {
  const CameraIntrinsics k;
  Rng rng = make_rng(11, 0);
  const int n = 100000;
  std::vector<double> z(n);
  for (double& v : z) v = (sample_frustum(k, {0.10, 0.20}, rng).z - 0.10) / 0.10;
  std::sort(z.begin(), z.end());
  double d = 0.0;
  for (int i = 0; i < n; ++i) {
    d = std::max({d, std::abs((i + 1.0) / n - z[i]), std::abs(z[i] - double(i) / n)});
  }
  // p = 0.01 critical value of the one-sample KS statistic.
  CHECK(d < 1.628 / std::sqrt(double(n)));
}

TEST_CASE("depth_to_normals on a fronto-parallel plane") {
  const CameraIntrinsics k;
  const DepthMap plane = DepthMap::constant(Mask(k.width, k.height, 1), 0.15);
  const NormalMap n = depth_to_normals(plane, k);
  CHECK(count(n.mask) == count(plane.mask));
  for (std::size_t i = 0; i < n.mask.size(); ++i) {
    REQUIRE(n.mask[i]);
    CHECK((n.vectors[i] - Vec3(0, 0, -1)).norm() < 1e-12);
  }
  DepthMap scaled = plane;
  for (std::size_t i = 0; i < scaled.values.size(); ++i) scaled.values[i] *= 2.5;
  CHECK(mae_degrees(depth_to_normals(scaled, k), n) < 1e-9);
}

TEST_CASE("depth_to_normals matches the analytic sphere") {
  const SyntheticScene s = sphere_at(128);
  const NormalMap n = depth_to_normals(s.depth, s.intrinsics);
  const Mask interior = erode(s.depth.mask, 3);
  CHECK(mae_degrees(n, s.normals, &interior) < 0.5);
  for (std::size_t i = 0; i < n.mask.size(); ++i) {
    if (!n.mask[i]) continue;
    CHECK(std::abs(n.vectors[i].norm() - 1.0) < 1e-9);
    const int row = static_cast<int>(i) / 128, col = static_cast<int>(i) % 128;
    CHECK(n.vectors[i].dot(backproject({double(col), double(row)}, s.depth.values[i], s.intrinsics)) < 0.0);
  }
}

TEST_CASE("depth_to_normals error shrinks with resolution") {
  // Compare on the same angular region: the sphere disc eroded by a fixed
  // fraction of its radius.
  auto error_at = [](int n) {
    const SyntheticScene s = sphere_at(n);
    const Mask interior = erode(s.depth.mask, n / 16);
    return mae_degrees(depth_to_normals(s.depth, s.intrinsics), s.normals, &interior);
  };
  const double e64 = error_at(64), e128 = error_at(128), e256 = error_at(256);
  CHECK(e128 < 0.75 * e64);
  CHECK(e256 < 0.75 * e128);
}

TEST_CASE("depth_to_normals drops isolated pixels and rejects empty masks") {
  const CameraIntrinsics k = CameraIntrinsics::centered(8, 8, 10.0);
  Mask m(8, 8, 0);
  m(2, 2) = 1;
  m(5, 5) = m(5, 6) = m(6, 5) = m(6, 6) = 1;
  const NormalMap n = depth_to_normals(DepthMap::constant(m, 0.1), k);
  CHECK(!n.mask(2, 2));
  CHECK(n.mask(5, 5));
  CHECK(count(n.mask) == 4);
  CHECK_THROWS_KIND(depth_to_normals(DepthMap::constant(Mask(8, 8, 0), 0.1), k),
                    ErrorKind::empty_mask);
}

TEST_CASE("depth_to_normals: parallel equals serial reference") {
  SceneSpec spec;
  spec.shape = SceneShape::bumps;
  spec.seed = 3;
  const SyntheticScene s = make_scene(spec);
  const NormalMap a = depth_to_normals(s.depth, s.intrinsics);
  const NormalMap b = reference::depth_to_normals(s.depth, s.intrinsics);
  CHECK(a.mask == b.mask);
  CHECK(a.vectors == b.vectors);
}

TEST_CASE("face_camera") {
  const Vec3 x(0, 0, 0.1);
  CHECK(face_camera(Vec3(0, 0, 1), x) == Vec3(0, 0, -1));
  CHECK(face_camera(Vec3(0, 0, -1), x) == Vec3(0, 0, -1));
}

TEST_CASE("mask helpers") {
  Mask m(5, 5, 1);
  CHECK(count(m) == 25);
  CHECK(count(erode(m, 1)) == 9);
  CHECK(count(erode(m, 2)) == 1);
  Mask a(5, 5, 0);
  a(0, 0) = 1;
  CHECK(count(mask_and(m, a)) == 1);
  CHECK_THROWS_KIND(mask_and(m, Mask(4, 5, 1)), ErrorKind::dimension);
}
