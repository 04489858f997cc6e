#include <algorithm>
#include <cmath>

#include "nfps/obsmap.hpp"
#include "nfps/scenes.hpp"
#include "support.hpp"

using namespace nfps;

namespace {

std::vector<Spectrum> gray_samples(std::initializer_list<double> values) {
  std::vector<Spectrum> out;
  for (double v : values) out.push_back(spectrum(1, v));
  return out;
}

}  // namespace

TEST_CASE("compensate_attenuation") {
  CHECK((*compensate_attenuation(spectrum(1, 1.0), 2.0, 1e-8))[0] == 0.5);
  CHECK((*compensate_attenuation(spectrum(1, 0.0), 3.0, 1e-8))[0] == 0.0);
  CHECK(!compensate_attenuation(spectrum(1, 1.0), 1e-9, 1e-8));
  CHECK(!compensate_attenuation(spectrum(1, 1.0), 0.0, 0.0));
}

TEST_CASE("grid_index") {
  CHECK(grid_index(Vec3(0, 0, -1), 32) == GridCell{16, 16});
  CHECK(grid_index(Vec3(1, 0, 0), 32).col == 31);
  CHECK(grid_index(Vec3(-1, 0, 0), 32).col == 0);
  CHECK(grid_index(Vec3(0, 1, 0), 32).row == 31);
  CHECK(grid_index(Vec3(0, -1, 0), 32) == GridCell{0, 16});
  CHECK(grid_index(Vec3(0.5, -0.5, -std::sqrt(0.5)), 8) == GridCell{2, 6});
}

TEST_CASE("build_observation_map examples") {
  const Vec3 v(0, 0, -1);
  // Three samples sharing one cell average to 0.8.
  const std::vector<Vec3> same(3, Vec3(0, 0, -1));
  const ObservationMap a = build_observation_map(gray_samples({0.8, 0.8, 0.8}), same, v, 32);
  REQUIRE(a.valid);
  CHECK(a.scale == doctest::Approx(0.8));
  CHECK(a.at(16, 16) == 1.0f);
  CHECK(std::count_if(a.grid.begin(), a.grid.end(), [](float x) { return x != 0.0f; }) == 1);

  // Collision of 0.4 and 0.8 next to a 0.3 sample: the cell holds 0.6 / 0.6.
  const std::vector<Vec3> dirs = {Vec3(0, 0, -1), Vec3(0, 0, -1), Vec3(0.9, 0, -0.43589)};
  const ObservationMap b = build_observation_map(gray_samples({0.4, 0.8, 0.3}), dirs, v, 32);
  CHECK(b.at(16, 16) == 1.0f);
  CHECK(b.scale == doctest::Approx(0.6));
  CHECK(b.at(16, 30) == doctest::Approx(0.5f));

  // Too few or all-zero samples.
  CHECK(!build_observation_map(gray_samples({0.5, 0.5}), std::vector<Vec3>(2, v), v, 32).valid);
  CHECK(!build_observation_map(gray_samples({0, 0, 0}), same, v, 32).valid);
  CHECK_THROWS_KIND(build_observation_map(gray_samples({1, 1}), same, v, 32), ErrorKind::dimension);
}

TEST_CASE("build_observation_map invariants") {
  Rng rng = make_rng(9, 0);
  const LightRig rig = default_rig();
  for (int trial = 0; trial < 50; ++trial) {
    const Vec3 x(uniform(rng, -0.03, 0.03), uniform(rng, -0.03, 0.03), uniform(rng, 0.1, 0.2));
    std::vector<Spectrum> s;
    std::vector<Vec3> dirs;
    for (const PointLight& l : rig.lights) {
      s.push_back(spectrum(1, uniform(rng, 0.0, 2.0)));
      dirs.push_back(light_vector(l, x).direction);
    }
    const Vec3 v = viewing_direction(x);
    const ObservationMap m = build_observation_map(s, dirs, v, 32);
    REQUIRE(m.valid);
    CHECK(*std::max_element(m.grid.begin(), m.grid.end()) == 1.0f);
    CHECK(m.view_x == float(v.x()));
    CHECK(m.view_y == float(v.y()));

    std::vector<Spectrum> scaled = s;
    for (Spectrum& x : scaled) x *= 3.7;
    CHECK(build_observation_map(scaled, dirs, v, 32).grid == m.grid);

    std::vector<std::size_t> order(s.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<Spectrum> ps;
    std::vector<Vec3> pd;
    for (std::size_t i : order) {
      ps.push_back(s[i]);
      pd.push_back(dirs[i]);
    }
    CHECK(build_observation_map(ps, pd, v, 32).grid == m.grid);
  }
}

TEST_CASE("near-field conversion inverts the renderer") {
  Rng rng = make_rng(10, 0);
  const LightRig rig = default_rig();
  for (int trial = 0; trial < 200; ++trial) {
    const Vec3 x(uniform(rng, -0.04, 0.04), uniform(rng, -0.04, 0.04), uniform(rng, 0.1, 0.2));
    const Vec3 n = face_camera(Vec3(gaussian(rng, 0, 1), gaussian(rng, 0, 1), gaussian(rng, 0, 1)).normalized(), x);
    const Material mat = Material::blinn_phong(uniform(rng, 0.2, 1), uniform(rng, 0, 1), 30);
    const auto i = render_pixel({x, n, mat}, rig);
    const PixelObservation obs = observe_near_field(i, x, rig, 32, false);
    for (std::size_t m = 0; m < rig.size(); ++m) {
      REQUIRE(obs.sample_valid[m]);
      const double b = brdf_eval(n, obs.light_dirs[m], viewing_direction(x), mat)[0];
      CHECK(std::abs(obs.samples[m][0] - b) <= 1e-12 * std::max(1.0, b));
    }
  }
}

TEST_CASE("near-field conversion flags lights that cannot reach the point") {
  LightRig rig = make_ring_rig(4, 0.05, 1.0, 4.0);
  const Vec3 x(0.0, 0.0, -0.1);  // behind every lobe
  const std::vector<Spectrum> i(4, spectrum(1, 0.0));
  const PixelObservation obs = observe_near_field(i, x, rig, 32, true);
  CHECK(!obs.valid);
  CHECK(!obs.map.valid);
}

TEST_CASE("batch_build with ground-truth depth") {
  SceneSpec spec;
  spec.material = Material::lambertian(0.8);
  const SyntheticScene s = make_scene(spec);
  const LightRig rig = default_rig();
  const RenderedImages r = render_scene(s.depth, s.normals, s.materials, rig, s.intrinsics);
  const ObservationBatch batch = batch_build(r.images, s.depth, rig, s.intrinsics, {});
  int checked = 0;
  for (int row = 0; row < 128; row += 7) {
    for (int col = 0; col < 128; col += 7) {
      if (!batch.valid(row, col)) continue;
      const PixelObservation& obs = batch.at(row, col);
      const Vec3 x = backproject({double(col), double(row)}, s.depth.values(row, col), s.intrinsics);
      const Vec3 n = s.normals.vectors(row, col);
      std::vector<double> expected;
      for (std::size_t m = 0; m < rig.size(); ++m) {
        expected.push_back(0.8 * std::max(0.0, n.dot(light_vector(rig[m], x).direction)));
      }
      // Per-cell averages of the analytic Lambertian values, up to the map scale.
      std::vector<double> sum(32 * 32, 0.0);
      std::vector<int> hits(32 * 32, 0);
      for (std::size_t m = 0; m < rig.size(); ++m) {
        const GridCell c = grid_index(light_vector(rig[m], x).direction, 32);
        sum[c.row * 32 + c.col] += expected[m];
        ++hits[c.row * 32 + c.col];
      }
      double peak = 0.0;
      for (int c = 0; c < 32 * 32; ++c) {
        if (hits[c]) peak = std::max(peak, sum[c] / hits[c]);
      }
      for (int c = 0; c < 32 * 32; ++c) {
        const double want = hits[c] ? sum[c] / hits[c] / peak : 0.0;
        CHECK(std::abs(obs.map.grid[c] - want) < 1e-5);
      }
      ++checked;
    }
  }
  CHECK(checked > 50);
}

TEST_CASE("batch_build under a depth offset") {
  SceneSpec spec;
  const SyntheticScene s = make_scene(spec);
  const LightRig rig = default_rig();
  const RenderedImages r = render_scene(s.depth, s.normals, s.materials, rig, s.intrinsics);
  DepthMap shifted = s.depth;
  for (std::size_t i = 0; i < shifted.values.size(); ++i) shifted.values[i] += 0.01;
  const ObservationBatch a = batch_build(r.images, s.depth, rig, s.intrinsics, {});
  const ObservationBatch b = batch_build(r.images, shifted, rig, s.intrinsics, {});
  for (std::size_t i = 0; i < a.pixels.size(); i += 11) {
    if (!a.valid[i] || !b.valid[i]) continue;
    const PixelObservation& pa = a.pixels[i];
    const PixelObservation& pb = b.pixels[i];
    for (std::size_t m = 0; m < rig.size(); ++m) {
      const GridCell ca = grid_index(pa.light_dirs[m], 32);
      const GridCell cb = grid_index(pb.light_dirs[m], 32);
      CHECK(std::abs(ca.row - cb.row) <= 1);
      CHECK(std::abs(ca.col - cb.col) <= 1);
    }
    double worst = 0.0;
    for (std::size_t c = 0; c < pa.map.grid.size(); ++c) {
      worst = std::max(worst, double(std::abs(pa.map.grid[c] - pb.map.grid[c])));
    }
    CHECK(worst <= 1.0);
  }
}

TEST_CASE("batch_build: parallel equals serial, shadowed pixels invalid") {
  SceneSpec spec;
  spec.shape = SceneShape::bumps;
  spec.material = material_preset("dielectric");
  const SyntheticScene s = make_scene(spec);
  const LightRig rig = default_rig();
  RenderedImages r = render_scene(s.depth, s.normals, s.materials, rig, s.intrinsics);
  for (Image& img : r.images) img.at(60, 60) = 0.0f;
  const ObservationBatch a = batch_build(r.images, s.depth, rig, s.intrinsics, {});
  const ObservationBatch b = reference::batch_build(r.images, s.depth, rig, s.intrinsics, {});
  CHECK(a.valid == b.valid);
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    CHECK(a.pixels[i].map.grid == b.pixels[i].map.grid);
  }
  CHECK(!a.valid(60, 60));
  CHECK_THROWS_KIND(batch_build(std::span(r.images).first(14), s.depth, rig, s.intrinsics, {}),
                    ErrorKind::dimension);
}
