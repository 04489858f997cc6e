#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "nfps/geometry.hpp"
#include "nfps/lighting.hpp"
#include "nfps/reflectance.hpp"

namespace nfps {

/// D x D x C grid of max-normalized reflectance samples indexed by light
/// direction, plus the two constant view-direction channels.
struct ObservationMap {
  int size = 0;
  int channels = 1;
  std::vector<float> grid;  // (row * size + col) * channels + ch
  float view_x = 0.0f;
  float view_y = 0.0f;
  double scale = 0.0;
  bool valid = false;

  float at(int row, int col, int ch = 0) const {
    return grid[(static_cast<std::size_t>(row) * size + col) * channels + ch];
  }
};

struct GridCell {
  int row = 0;
  int col = 0;
  bool operator==(const GridCell&) const = default;
};

/// Relative floor on attenuation: samples with a_m <= kAttenuationFloor *
/// max_m a_m cannot be compensated.
inline constexpr double kAttenuationFloor = 1e-8;

/// j = i / a, or nothing when a <= floor.
std::optional<Spectrum> compensate_attenuation(const Spectrum& intensity, double attenuation,
                                               double floor);

GridCell grid_index(const Vec3& light_dir, int map_size);

/// Bins the samples by grid_index, averages collisions and divides by the
/// largest cell value. Fewer than 3 samples or an all-zero set gives an
/// invalid (all-zero) map.
ObservationMap build_observation_map(std::span<const Spectrum> samples,
                                     std::span<const Vec3> light_dirs, const Vec3& view_dir,
                                     int map_size);

/// Everything the predictors can see about one pixel: compensated samples,
/// the light direction each was binned by, and (optionally) the map itself.
struct PixelObservation {
  int row = 0;
  int col = 0;
  std::vector<Spectrum> samples;
  std::vector<Vec3> light_dirs;
  std::vector<std::uint8_t> sample_valid;
  Vec3 view_dir = Vec3(0.0, 0.0, -1.0);
  ObservationMap map;
  bool valid = false;

  std::vector<Spectrum> valid_samples() const;
  std::vector<Vec3> valid_light_dirs() const;
};

/// Near-to-far conversion for a pixel whose surface point is assumed at X.
PixelObservation observe_near_field(std::span<const Spectrum> intensities, const Vec3& point,
                                    const LightRig& rig, int map_size, bool build_map);

/// The same conversion under a distant-light assumption: no attenuation
/// compensation and one fixed direction per light.
struct FarFieldLighting {
  std::vector<Vec3> light_dirs;
  Vec3 view_dir = Vec3(0.0, 0.0, -1.0);
};

PixelObservation observe_far_field(std::span<const Spectrum> intensities,
                                   const FarFieldLighting& lighting, int map_size,
                                   bool build_map);

struct BatchOptions {
  int map_size = 32;
  bool build_maps = true;
  /// When set, pixels are converted with fixed far-field lighting instead of
  /// the depth estimate.
  std::optional<FarFieldLighting> far_field;
};

struct ObservationBatch {
  int width = 0;
  int height = 0;
  std::vector<PixelObservation> pixels;  // row-major; only masked entries populated
  Mask valid;

  const PixelObservation& at(int row, int col) const {
    return pixels[static_cast<std::size_t>(row) * width + col];
  }
};

ObservationBatch batch_build(std::span<const Image> images, const DepthMap& depth,
                             const LightRig& rig, const CameraIntrinsics& intrinsics,
                             const BatchOptions& options);

namespace reference {
ObservationBatch batch_build(std::span<const Image> images, const DepthMap& depth,
                             const LightRig& rig, const CameraIntrinsics& intrinsics,
                             const BatchOptions& options);
}  // namespace reference

}  // namespace nfps
