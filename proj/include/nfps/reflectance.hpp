#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "nfps/geometry.hpp"
#include "nfps/lighting.hpp"
#include "nfps/random.hpp"

namespace nfps {

/// Per-channel value, 1 (grayscale) or 3 (RGB) entries, stored inline.
using Spectrum = Eigen::Array<double, Eigen::Dynamic, 1, Eigen::ColMajor, 3, 1>;

inline Spectrum spectrum(int channels, double value) {
  return Spectrum::Constant(channels, value);
}

/// Mean over channels; the grayscale magnitude used for thresholds.
inline double gray(const Spectrum& s) { return s.size() == 0 ? 0.0 : s.mean(); }

enum class BrdfModel { lambertian, blinn_phong, diffuse_specular_mix };

struct Material {
  BrdfModel model = BrdfModel::lambertian;
  Spectrum albedo = spectrum(1, 0.5);
  double specular_strength = 0.0;
  double shininess = 1.0;
  double metallic_mix = 0.0;

  int channels() const noexcept { return static_cast<int>(albedo.size()); }
  void validate() const;

  static Material lambertian(double rho, int channels = 1);
  static Material blinn_phong(double rho, double specular_strength, double shininess,
                              int channels = 1);
  static Material mix(double rho, double specular_strength, double shininess,
                      double metallic_mix, int channels = 1);
};

struct SurfaceSample {
  Vec3 point;
  Vec3 normal;
  Material material;
};

/// Stochastic stand-ins for cast shadows, ambient light, inter-reflections
/// and sensor noise. Magnitudes are in the units of the samples they act on.
struct GIAugmentation {
  double cast_shadow_prob = 0.0;
  double shadow_factor_max = 0.1;
  double ambient_max = 0.0;
  double self_reflection_max = 0.0;
  double noise_sigma = 0.0;

  void validate() const;
  bool enabled() const noexcept {
    return cast_shadow_prob > 0.0 || ambient_max > 0.0 || self_reflection_max > 0.0 ||
           noise_sigma > 0.0;
  }
};

/// B(N, L, V, rho). Zero whenever N . L <= 0.
///
/// lambertian:            rho (N.L)+
/// blinn_phong:           rho (N.L)+ + ks (N.H)+^n
/// diffuse_specular_mix:  (1-m) rho (N.L)+ + ks (N.H)+^n ((1-m) + m rho)
///
/// so m = 0 reduces to blinn_phong and m = 1 is a pure, albedo-tinted
/// (metallic) lobe.
Spectrum brdf_eval(const Vec3& normal, const Vec3& light_dir, const Vec3& view_dir,
                   const Material& material);

/// Raw (unexposed) intensities i_m = a_m B(N, L_m, V, rho), one per light.
std::vector<Spectrum> render_pixel(const SurfaceSample& sample, const LightRig& rig);

/// K images plus the exposure that was applied to them (the scale mapping
/// the 99th percentile of masked raw values to 1).
struct RenderedImages {
  std::vector<Image> images;
  double exposure = 1.0;
};

RenderedImages render_scene(const DepthMap& depth, const NormalMap& normals,
                            const Grid<Material>& materials, const LightRig& rig,
                            const CameraIntrinsics& intrinsics);

namespace reference {
RenderedImages render_scene(const DepthMap& depth, const NormalMap& normals,
                            const Grid<Material>& materials, const LightRig& rig,
                            const CameraIntrinsics& intrinsics);
}  // namespace reference

/// In-place augmentation of one pixel's K samples.
void augment_samples(std::span<Spectrum> intensities, const GIAugmentation& aug, Rng& rng);

}  // namespace nfps
