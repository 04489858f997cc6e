// Parallel kernels against their serial reference versions.

#include <benchmark/benchmark.h>

#include <vector>

#include "nfps/geometry.hpp"
#include "nfps/integrate.hpp"
#include "nfps/obsmap.hpp"
#include "nfps/reflectance.hpp"
#include "nfps/scenes.hpp"

using namespace nfps;

namespace {

const RenderedScene& scene() {
  static const RenderedScene s = [] {
    SceneSpec spec;
    spec.shape = SceneShape::bumps;
    spec.material = material_preset("intermediate");
    return render_synthetic(spec, default_rig());
  }();
  return s;
}

void BM_render_scene(benchmark::State& state) {
  const SyntheticScene& s = scene().scene;
  const LightRig rig = default_rig();
  for (auto _ : state) {
    benchmark::DoNotOptimize(render_scene(s.depth, s.normals, s.materials, rig, s.intrinsics));
  }
}

void BM_render_scene_reference(benchmark::State& state) {
  const SyntheticScene& s = scene().scene;
  const LightRig rig = default_rig();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        reference::render_scene(s.depth, s.normals, s.materials, rig, s.intrinsics));
  }
}

void BM_batch_build(benchmark::State& state) {
  const RenderedScene& r = scene();
  const LightRig rig = default_rig();
  for (auto _ : state) {
    benchmark::DoNotOptimize(batch_build(r.images, r.scene.depth, rig, r.scene.intrinsics, {}));
  }
}

void BM_batch_build_reference(benchmark::State& state) {
  const RenderedScene& r = scene();
  const LightRig rig = default_rig();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        reference::batch_build(r.images, r.scene.depth, rig, r.scene.intrinsics, {}));
  }
}

void BM_depth_to_normals(benchmark::State& state) {
  const SyntheticScene& s = scene().scene;
  for (auto _ : state) benchmark::DoNotOptimize(depth_to_normals(s.depth, s.intrinsics));
}

void BM_depth_to_normals_reference(benchmark::State& state) {
  const SyntheticScene& s = scene().scene;
  for (auto _ : state) benchmark::DoNotOptimize(reference::depth_to_normals(s.depth, s.intrinsics));
}

std::vector<double> ramp(std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(i % 97) * 0.01;
  return x;
}

void BM_normal_operator(benchmark::State& state) {
  const detail::IntegrationDomain d(scene().scene.depth.mask);
  const std::vector<double> x = ramp(d.nodes());
  std::vector<double> out;
  for (auto _ : state) {
    detail::apply_normal_operator(d, 1.0, 0.25, x, out);
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_normal_operator_reference(benchmark::State& state) {
  const detail::IntegrationDomain d(scene().scene.depth.mask);
  const std::vector<double> x = ramp(d.nodes());
  std::vector<double> out;
  for (auto _ : state) {
    detail::reference::apply_normal_operator(d, 1.0, 0.25, x, out);
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_render_scene)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_render_scene_reference)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_batch_build)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_batch_build_reference)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_depth_to_normals)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_depth_to_normals_reference)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_normal_operator)->Unit(benchmark::kMicrosecond)->UseRealTime();
BENCHMARK(BM_normal_operator_reference)->Unit(benchmark::kMicrosecond)->UseRealTime();

BENCHMARK_MAIN();
