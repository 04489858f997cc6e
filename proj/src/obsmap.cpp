#include "nfps/obsmap.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace nfps {

std::optional<Spectrum> compensate_attenuation(const Spectrum& intensity, double a,
                                               double floor) {
  if (!(a > floor)) return std::nullopt;
  return Spectrum(intensity / a);
}

GridCell grid_index(const Vec3& l, int d) {
  auto bin = [d](double x) {
    const double b = std::floor(d * (x + 1.0) / 2.0);
    return static_cast<int>(std::clamp(b, 0.0, static_cast<double>(d - 1)));
  };
  return {bin(l.y()), bin(l.x())};
}

ObservationMap build_observation_map(std::span<const Spectrum> samples,
                                     std::span<const Vec3> light_dirs, const Vec3& view_dir,
                                     int d) {
  if (samples.size() != light_dirs.size()) {
    throw Error(ErrorKind::dimension, "build_observation_map: samples/directions size mismatch");
  }
  if (d <= 0) throw Error(ErrorKind::invalid_config, "build_observation_map: map size must be > 0");
  const int channels = samples.empty() ? 1 : static_cast<int>(samples.front().size());

  ObservationMap map;
  map.size = d;
  map.channels = channels;
  map.grid.assign(static_cast<std::size_t>(d) * d * channels, 0.0f);
  map.view_x = static_cast<float>(view_dir.x());
  map.view_y = static_cast<float>(view_dir.y());

  double peak_gray = 0.0;
  for (const Spectrum& s : samples) peak_gray = std::max(peak_gray, gray(s));
  if (samples.size() < 3 || !(peak_gray > 0.0)) return map;

  std::vector<double> sum(map.grid.size(), 0.0);
  std::vector<int> hits(static_cast<std::size_t>(d) * d, 0);
  for (std::size_t m = 0; m < samples.size(); ++m) {
    const GridCell cell = grid_index(light_dirs[m], d);
    const std::size_t at = static_cast<std::size_t>(cell.row) * d + cell.col;
    ++hits[at];
    for (int ch = 0; ch < channels; ++ch) sum[at * channels + ch] += samples[m][ch];
  }
  double peak = 0.0;
  for (std::size_t at = 0; at < hits.size(); ++at) {
    if (hits[at] == 0) continue;
    for (int ch = 0; ch < channels; ++ch) {
      sum[at * channels + ch] /= hits[at];
      peak = std::max(peak, sum[at * channels + ch]);
    }
  }
  if (!(peak > 0.0) || !std::isfinite(peak)) return map;

  for (std::size_t at = 0; at < hits.size(); ++at) {
    if (hits[at] == 0) continue;
    for (int ch = 0; ch < channels; ++ch) {
      map.grid[at * channels + ch] = static_cast<float>(sum[at * channels + ch] / peak);
    }
  }
  map.scale = peak;
  map.valid = true;
  return map;
}

std::vector<Spectrum> PixelObservation::valid_samples() const {
  std::vector<Spectrum> out;
  for (std::size_t m = 0; m < samples.size(); ++m) {
    if (sample_valid[m]) out.push_back(samples[m]);
  }
  return out;
}

std::vector<Vec3> PixelObservation::valid_light_dirs() const {
  std::vector<Vec3> out;
  for (std::size_t m = 0; m < light_dirs.size(); ++m) {
    if (sample_valid[m]) out.push_back(light_dirs[m]);
  }
  return out;
}

namespace {

void finish(PixelObservation& obs, int map_size, bool build_map) {
  std::size_t n_valid = 0;
  double peak = 0.0;
  for (std::size_t m = 0; m < obs.samples.size(); ++m) {
    if (!obs.sample_valid[m]) continue;
    ++n_valid;
    peak = std::max(peak, gray(obs.samples[m]));
  }
  obs.valid = n_valid >= 3 && peak > 0.0 && std::isfinite(peak);
  if (build_map) {
    obs.map = build_observation_map(obs.valid_samples(), obs.valid_light_dirs(), obs.view_dir,
                                    map_size);
    obs.valid = obs.valid && obs.map.valid;
  }
}

}  // namespace

PixelObservation observe_near_field(std::span<const Spectrum> intensities, const Vec3& point,
                                    const LightRig& rig, int map_size, bool build_map) {
  if (intensities.size() != rig.size()) {
    throw Error(ErrorKind::dimension, "observe_near_field: " + std::to_string(intensities.size()) +
                                          " samples for " + std::to_string(rig.size()) + " lights");
  }
  PixelObservation obs;
  obs.view_dir = viewing_direction(point);
  const std::size_t k = rig.size();
  obs.samples.resize(k);
  obs.light_dirs.resize(k);
  obs.sample_valid.assign(k, 0);

  std::vector<double> a(k);
  double a_max = 0.0;
  for (std::size_t m = 0; m < k; ++m) {
    obs.light_dirs[m] = light_vector(rig[m], point).direction;
    a[m] = attenuation(rig[m], point);
    a_max = std::max(a_max, a[m]);
  }
  const double floor = kAttenuationFloor * a_max;
  for (std::size_t m = 0; m < k; ++m) {
    if (auto j = compensate_attenuation(intensities[m], a[m], floor)) {
      obs.samples[m] = *j;
      obs.sample_valid[m] = 1;
    } else {
      obs.samples[m] = Spectrum::Zero(intensities[m].size());
    }
  }
  finish(obs, map_size, build_map);
  return obs;
}

PixelObservation observe_far_field(std::span<const Spectrum> intensities,
                                   const FarFieldLighting& lighting, int map_size,
                                   bool build_map) {
  if (intensities.size() != lighting.light_dirs.size()) {
    throw Error(ErrorKind::dimension, "observe_far_field: sample/direction count mismatch");
  }
  PixelObservation obs;
  obs.view_dir = lighting.view_dir;
  obs.samples.assign(intensities.begin(), intensities.end());
  obs.light_dirs = lighting.light_dirs;
  obs.sample_valid.assign(intensities.size(), 1);
  finish(obs, map_size, build_map);
  return obs;
}

namespace {

void check_batch(std::span<const Image> images, const DepthMap& depth, const LightRig& rig,
                 const CameraIntrinsics& k) {
  k.validate();
  if (images.size() != rig.size()) {
    throw Error(ErrorKind::dimension, "batch_build: " + std::to_string(images.size()) +
                                          " images for " + std::to_string(rig.size()) + " lights");
  }
  if (depth.width() != k.width || depth.height() != k.height) {
    throw Error(ErrorKind::dimension, "batch_build: depth map does not match intrinsics");
  }
  for (const Image& img : images) {
    if (img.width != depth.width() || img.height != depth.height() ||
        img.channels != images.front().channels) {
      throw Error(ErrorKind::dimension, "batch_build: image shape mismatch");
    }
  }
}

void observe_pixel(std::span<const Image> images, const DepthMap& depth, const LightRig& rig,
                   const CameraIntrinsics& k, const BatchOptions& options, int row, int col,
                   ObservationBatch& out) {
  const std::size_t i = depth.values.index(row, col);
  out.valid[i] = 0;
  if (!depth.mask[i]) return;
  const double z = depth.values[i];
  if (!(z > 0.0) || !std::isfinite(z)) return;

  const int channels = images.front().channels;
  std::vector<Spectrum> intensities(images.size(), Spectrum(channels));
  for (std::size_t m = 0; m < images.size(); ++m) {
    for (int ch = 0; ch < channels; ++ch) intensities[m][ch] = images[m].at(row, col, ch);
  }
  PixelObservation obs =
      options.far_field
          ? observe_far_field(intensities, *options.far_field, options.map_size, options.build_maps)
          : observe_near_field(intensities, backproject({double(col), double(row)}, z, k), rig,
                               options.map_size, options.build_maps);
  obs.row = row;
  obs.col = col;
  out.valid[i] = obs.valid ? 1 : 0;
  out.pixels[i] = std::move(obs);
}

ObservationBatch make_batch(const DepthMap& depth) {
  ObservationBatch out;
  out.width = depth.width();
  out.height = depth.height();
  out.pixels.resize(depth.values.size());
  out.valid = Mask(depth.width(), depth.height(), 0);
  return out;
}

}  // namespace

ObservationBatch batch_build(std::span<const Image> images, const DepthMap& depth,
                             const LightRig& rig, const CameraIntrinsics& k,
                             const BatchOptions& options) {
  check_batch(images, depth, rig, k);
  ObservationBatch out = make_batch(depth);
  const int h = depth.height();
  const int w = depth.width();
#pragma omp parallel for schedule(dynamic, 2)
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) observe_pixel(images, depth, rig, k, options, row, col, out);
  }
  return out;
}

namespace reference {

ObservationBatch batch_build(std::span<const Image> images, const DepthMap& depth,
                             const LightRig& rig, const CameraIntrinsics& k,
                             const BatchOptions& options) {
  check_batch(images, depth, rig, k);
  ObservationBatch out = make_batch(depth);
  for (int row = 0; row < depth.height(); ++row) {
    for (int col = 0; col < depth.width(); ++col) {
      observe_pixel(images, depth, rig, k, options, row, col, out);
    }
  }
  return out;
}

}  // namespace reference

}  // namespace nfps
