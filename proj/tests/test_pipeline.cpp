#include <cmath>
#include <memory>

#include "nfps/pipeline.hpp"
#include "nfps/scenes.hpp"
#include "support.hpp"

using namespace nfps;

namespace {

struct Fixture {
  RenderedScene rendered;
  GroundTruth truth;
  LightRig rig = default_rig();
  double mean_depth = 0.0;
};

Fixture fixture(SceneShape shape, const char* material) {
  SceneSpec spec;
  spec.shape = shape;
  spec.intrinsics = CameraIntrinsics::centered(64, 64, 80.0);
  spec.material = material_preset(material);
  Fixture f;
  f.rendered = render_synthetic(spec, f.rig);
  f.truth.depth = f.rendered.scene.depth;
  f.truth.normals = f.rendered.scene.normals;
  f.truth.region = erode(f.truth.depth.mask, 3);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < f.truth.depth.values.size(); ++i) {
    if (!f.truth.depth.mask[i]) continue;
    sum += f.truth.depth.values[i];
    ++n;
  }
  f.mean_depth = sum / static_cast<double>(n);
  return f;
}

ReconstructionConfig lambertian_config(double init_depth, int iterations = 2) {
  ReconstructionConfig c;
  c.predictor = std::make_shared<LambertianPredictor>();
  c.init_depth = init_depth;
  c.iterations = iterations;
  return c;
}

ReconstructionReport run(const Fixture& f, const ReconstructionConfig& c) {
  return reconstruct(f.rendered.images, f.rig, f.rendered.scene.intrinsics, f.truth.depth.mask, c,
                     &f.truth);
}

ReconstructionReport run_naive(const Fixture& f, const ReconstructionConfig& c) {
  return naive_farfield_reconstruct(f.rendered.images, f.rig, f.rendered.scene.intrinsics,
                                    f.truth.depth.mask, c, &f.truth);
}

NormalMap uniform_normals(int w, int h, const Vec3& n) {
  NormalMap out(w, h);
  for (std::size_t i = 0; i < out.vectors.size(); ++i) {
    out.vectors[i] = n.normalized();
    out.mask[i] = 1;
  }
  return out;
}

}  // namespace

TEST_CASE("mean angular error examples") {
  const NormalMap a = uniform_normals(4, 3, Vec3(0, 0, -1));
  CHECK(mae_degrees(a, a) == 0.0);
  CHECK(mae_degrees(a, uniform_normals(4, 3, Vec3(1, 0, 0))) == doctest::Approx(90.0));
  const double t = 15.0 * std::numbers::pi / 180.0;
  CHECK(mae_degrees(a, uniform_normals(4, 3, Vec3(std::sin(t), 0, -std::cos(t)))) ==
        doctest::Approx(15.0).epsilon(1e-9));

  NormalMap half = uniform_normals(4, 3, Vec3(1, 0, 0));
  for (int col = 0; col < 2; ++col) {
    for (int row = 0; row < 3; ++row) half.mask(row, col) = 0;
  }
  CHECK(mae_degrees(half, a) == doctest::Approx(90.0));
  Mask region(4, 3, 0);
  CHECK_THROWS_KIND(mae_degrees(half, a, &region), ErrorKind::empty_mask);
}

TEST_CASE("mean depth error examples") {
  const Mask all(4, 4, 1);
  const DepthMap a = DepthMap::constant(all, 0.1);
  CHECK(mean_depth_error_mm(a, a) == 0.0);
  CHECK(mean_depth_error_mm(DepthMap::constant(all, 0.102), a) == doctest::Approx(2.0));
  DepthMap ramp = a;
  // Offsets of +-1 mm and +-3 mm alternate: mean absolute error 2 mm.
  for (int row = 0; row < 4; ++row) {
    for (int col = 0; col < 4; ++col) {
      const double mm = (col % 2 == 0 ? 1.0 : 3.0) * (row % 2 == 0 ? 1.0 : -1.0);
      ramp.values(row, col) += mm / 1000.0;
    }
  }
  CHECK(mean_depth_error_mm(ramp, a) == doctest::Approx(2.0));
}

TEST_CASE("lambertian sphere is reconstructed and iterations do not hurt") {
  const Fixture f = fixture(SceneShape::sphere, "lambertian");
  const ReconstructionReport r = run(f, lambertian_config(f.mean_depth, 3));
  REQUIRE(r.iterations.size() == 3);
  const IterationMetrics& last = *r.final().metrics;
  CHECK(last.mae_nfcnn < 1.0);
  CHECK(last.mae_nfs < 2.0);
  CHECK(last.depth_error_mm < 1.0);
  for (std::size_t t = 1; t < r.iterations.size(); ++t) {
    CHECK(r.iterations[t].metrics->mae_nfcnn <= r.iterations[t - 1].metrics->mae_nfcnn + 0.1);
    // Later iterations never widen the mask.
    const Mask& prev = r.iterations[t - 1].depth.mask;
    const Mask& cur = r.iterations[t].depth.mask;
    for (std::size_t i = 0; i < cur.size(); ++i) CHECK(!(cur[i] && !prev[i]));
  }
}

TEST_CASE("a biased initial depth degrades gracefully") {
  // The prior term pins the mean depth to the initial plane, so a 1 cm bias
  // leaves a floor of about 2 degrees with the least-squares predictor.
  const Fixture f = fixture(SceneShape::sphere, "lambertian");
  const ReconstructionReport good = run(f, lambertian_config(f.mean_depth, 2));
  const ReconstructionReport r = run(f, lambertian_config(f.mean_depth + 0.01, 2));
  const double first = r.iterations.front().metrics->mae_nfcnn;
  CHECK(first < 5.0);
  CHECK(r.final().metrics->mae_nfcnn <= first + 0.1);
  CHECK(r.final().metrics->mae_nfcnn < good.final().metrics->mae_nfcnn + 3.0);
}

TEST_CASE("far-field ablation is worse than the near-field pipeline") {
  const Fixture f = fixture(SceneShape::sphere, "lambertian");
  const ReconstructionConfig c = lambertian_config(f.mean_depth);
  const double adapted = run(f, c).final().metrics->mae_nfcnn;
  const ReconstructionReport naive = run_naive(f, c);
  REQUIRE(naive.iterations.size() == 1);
  CHECK(naive.final().metrics->mae_nfcnn > adapted + 3.0);

  const Fixture plane = fixture(SceneShape::plane, "lambertian");
  const ReconstructionConfig pc = lambertian_config(0.15);
  CHECK(run_naive(plane, pc).final().metrics->mae_nfcnn > 2.0);
  CHECK(run(plane, pc).final().metrics->mae_nfcnn < 1.0);
}

TEST_CASE("oracle normals isolate the integration error") {
  const Fixture f = fixture(SceneShape::paraboloid, "dielectric");
  ReconstructionConfig c = lambertian_config(f.mean_depth, 1);
  c.predictor = std::make_shared<LookupPredictor>(f.truth.normals);
  const ReconstructionReport r = run(f, c);
  CHECK(r.final().metrics->mae_nfcnn < 1e-5);
  CHECK(r.final().metrics->depth_error_mm < 0.5);
  CHECK(r.final().metrics->mae_nfs < 1.5);
}

TEST_CASE("reconstruction is deterministic") {
  const Fixture f = fixture(SceneShape::bumps, "intermediate");
  const ReconstructionConfig c = lambertian_config(f.mean_depth);
  const ReconstructionReport a = run(f, c);
  const ReconstructionReport b = run(f, c);
  CHECK(a.final().depth.values == b.final().depth.values);
  CHECK(a.final().depth.mask == b.final().depth.mask);
  CHECK(a.final().predicted.vectors == b.final().predicted.vectors);
}

TEST_CASE("early stop ends once the depth settles") {
  const Fixture f = fixture(SceneShape::sphere, "lambertian");
  ReconstructionConfig c = lambertian_config(f.mean_depth, 10);
  c.stop_below_mm = 0.5;
  const ReconstructionReport r = run(f, c);
  CHECK(r.iterations.size() < 10);
}

TEST_CASE("reconstruction input validation") {
  const Fixture f = fixture(SceneShape::sphere, "lambertian");
  const CameraIntrinsics& k = f.rendered.scene.intrinsics;
  ReconstructionConfig c = lambertian_config(0.15);
  CHECK_THROWS_KIND(reconstruct(f.rendered.images, f.rig, k, Mask(64, 64, 0), c),
                    ErrorKind::empty_mask);
  CHECK_THROWS_KIND(reconstruct(f.rendered.images, f.rig, k, Mask(32, 64, 1), c),
                    ErrorKind::dimension);
  std::vector<Image> fewer(f.rendered.images.begin(), f.rendered.images.end() - 1);
  CHECK_THROWS_KIND(reconstruct(fewer, f.rig, k, f.truth.depth.mask, c), ErrorKind::dimension);
  std::vector<Image> bad = f.rendered.images;
  bad[0].at(10, 10) = -1.0f;
  CHECK_THROWS_KIND(reconstruct(bad, f.rig, k, f.truth.depth.mask, c), ErrorKind::invalid_config);
  c.predictor = nullptr;
  CHECK_THROWS_KIND(reconstruct(f.rendered.images, f.rig, k, f.truth.depth.mask, c),
                    ErrorKind::invalid_config);
  c = lambertian_config(0.15, 0);
  CHECK_THROWS_KIND(c.validate(), ErrorKind::invalid_config);
}
