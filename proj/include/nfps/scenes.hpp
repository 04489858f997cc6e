#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "nfps/geometry.hpp"
#include "nfps/lighting.hpp"
#include "nfps/reflectance.hpp"

namespace nfps {

enum class SceneShape { sphere, paraboloid, bumps, plane };

SceneShape parse_scene_shape(std::string_view name);
std::string to_string(SceneShape shape);

/// Analytic test objects. `distance` is the sphere center depth, the plane
/// depth, or the base depth of the paraboloid / bump field; `radius` is the
/// sphere radius or the radius (meters at `distance`) of the relief disc;
/// `height` is the relief raised toward the camera.
struct SceneSpec {
  SceneShape shape = SceneShape::sphere;
  CameraIntrinsics intrinsics;
  double distance = 0.15;
  double radius = 0.04;
  double height = 0.02;
  int bump_count = 5;
  Material material;
  double albedo_variation = 0.0;  // relative amplitude of per-pixel albedo noise
  double noise_sigma = 0.0;       // image noise after exposure normalization
  std::uint64_t seed = 0;

  void validate() const;
};

/// Presets: "lambertian", "dielectric" (Blinn-Phong lobe over a diffuse
/// base), "metallic" (almost purely specular, albedo-tinted) and
/// "intermediate".
Material material_preset(std::string_view name, int channels = 1);

struct SyntheticScene {
  CameraIntrinsics intrinsics;
  DepthMap depth;
  NormalMap normals;
  Grid<Material> materials;
};

SyntheticScene make_scene(const SceneSpec& spec);

struct RenderedScene {
  SyntheticScene scene;
  std::vector<Image> images;
  double exposure = 1.0;
};

RenderedScene render_synthetic(const SceneSpec& spec, const LightRig& rig);

/// The 15-LED, 6.5 cm ring used throughout (brightness 1, mu 1).
LightRig default_rig();

}  // namespace nfps
