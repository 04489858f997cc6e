#include "nfps/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <numbers>

namespace nfps {

void ReconstructionConfig::validate() const {
  if (!predictor) throw Error(ErrorKind::invalid_config, "reconstruct: no predictor");
  if (iterations < 1) throw Error(ErrorKind::invalid_config, "reconstruct: iterations must be >= 1");
  if (!(init_depth > 0.0)) throw Error(ErrorKind::invalid_config, "reconstruct: init_depth must be > 0");
  if (map_size < 4) throw Error(ErrorKind::invalid_config, "reconstruct: map_size must be >= 4");
  integrator.validate();
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void check_inputs(std::span<const Image> images, const LightRig& rig,
                  const CameraIntrinsics& k, const Mask& mask,
                  const ReconstructionConfig& config) {
  config.validate();
  rig.validate();
  k.validate();
  if (images.size() != rig.size()) {
    throw Error(ErrorKind::dimension, "reconstruct: " + std::to_string(images.size()) +
                                          " images for " + std::to_string(rig.size()) + " lights");
  }
  if (mask.width() != k.width || mask.height() != k.height) {
    throw Error(ErrorKind::dimension, "reconstruct: mask does not match intrinsics");
  }
  if (count(mask) == 0) throw Error(ErrorKind::empty_mask, "reconstruct: empty mask");
  for (const Image& img : images) {
    for (float v : img.data) {
      if (!(v >= 0.0f) || !std::isfinite(v)) {
        throw Error(ErrorKind::invalid_config, "reconstruct: images must be finite and non-negative");
      }
    }
  }
}

Mask metric_region(const GroundTruth& truth) {
  return truth.region.empty() ? truth.depth.mask : truth.region;
}

void score(IterationResult& it, const GroundTruth* truth) {
  if (truth == nullptr) return;
  const Mask region = metric_region(*truth);
  IterationMetrics m;
  m.mae_nfcnn = mae_degrees(it.predicted, truth->normals, &region);
  m.mae_nfs = mae_degrees(it.differentiated, truth->normals, &region);
  m.depth_error_mm = mean_depth_error_mm(it.depth, truth->depth, &region);
  it.metrics = m;
}

// predict -> integrate -> differentiate, from a given batch and prior.
IterationResult run_iteration(const ObservationBatch& batch, const DepthMap& prior,
                              const CameraIntrinsics& k, const ReconstructionConfig& config,
                              const GroundTruth* truth, int index) {
  const auto t0 = Clock::now();
  IterationResult it;
  it.predicted = config.predictor->predict_all(batch);
  const LogGradients gradients = normals_to_log_gradients(it.predicted, k);
  if (count(gradients.mask) == 0) {
    throw Error(ErrorKind::empty_mask, "reconstruct: no pixel survived prediction in iteration " +
                                           std::to_string(index) + " (" +
                                           std::to_string(count(batch.valid)) +
                                           " valid observation maps)");
  }
  IntegrationResult integ = integrate(gradients, prior, config.integrator);
  it.integration_converged = integ.converged;
  it.depth = std::move(integ.depth);
  it.differentiated = depth_to_normals(it.depth, k);
  it.seconds = seconds_since(t0);
  score(it, truth);
  return it;
}

double mean_change_mm(const DepthMap& a, const DepthMap& b) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.mask.size(); ++i) {
    if (!a.mask[i] || !b.mask[i]) continue;
    sum += std::abs(a.values[i] - b.values[i]);
    ++n;
  }
  return n == 0 ? 0.0 : 1000.0 * sum / static_cast<double>(n);
}

}  // namespace

ReconstructionReport reconstruct(std::span<const Image> images, const LightRig& rig,
                                 const CameraIntrinsics& k, const Mask& mask,
                                 const ReconstructionConfig& config, const GroundTruth* truth) {
  check_inputs(images, rig, k, mask, config);
  const auto t0 = Clock::now();
  ReconstructionReport report;
  DepthMap depth = DepthMap::constant(mask, config.init_depth);
  BatchOptions options;
  options.map_size = config.map_size;
  options.build_maps = config.predictor->needs_map();

  for (int t = 1; t <= config.iterations; ++t) {
    const ObservationBatch batch = batch_build(images, depth, rig, k, options);
    IterationResult it = run_iteration(batch, depth, k, config, truth, t);
    const double change = mean_change_mm(it.depth, depth);
    depth = it.depth;
    report.iterations.push_back(std::move(it));
    if (config.stop_below_mm && t > 1 && change < *config.stop_below_mm) break;
  }
  report.wall_seconds = seconds_since(t0);
  return report;
}

ReconstructionReport naive_farfield_reconstruct(std::span<const Image> images,
                                                const LightRig& rig,
                                                const CameraIntrinsics& k, const Mask& mask,
                                                const ReconstructionConfig& config,
                                                const GroundTruth* truth) {
  check_inputs(images, rig, k, mask, config);
  const auto t0 = Clock::now();
  const Vec3 center = backproject({k.u0, k.v0}, config.init_depth, k);
  FarFieldLighting lighting;
  for (const PointLight& light : rig.lights) {
    lighting.light_dirs.push_back(light_vector(light, center).direction);
  }
  lighting.view_dir = Vec3(0.0, 0.0, -1.0);

  BatchOptions options;
  options.map_size = config.map_size;
  options.build_maps = config.predictor->needs_map();
  options.far_field = lighting;

  const DepthMap prior = DepthMap::constant(mask, config.init_depth);
  const ObservationBatch batch = batch_build(images, prior, rig, k, options);
  ReconstructionReport report;
  report.iterations.push_back(run_iteration(batch, prior, k, config, truth, 1));
  report.wall_seconds = seconds_since(t0);
  return report;
}

double mae_degrees(const NormalMap& estimate, const NormalMap& truth, const Mask* region) {
  require_same_shape(estimate.vectors, truth.vectors, "mae_degrees");
  if (region != nullptr) require_same_shape(estimate.vectors, *region, "mae_degrees");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < estimate.mask.size(); ++i) {
    if (!estimate.mask[i] || !truth.mask[i] || (region != nullptr && !(*region)[i])) continue;
    const double c = std::clamp(estimate.vectors[i].dot(truth.vectors[i]), -1.0, 1.0);
    sum += std::acos(c) * 180.0 / std::numbers::pi;
    ++n;
  }
  if (n == 0) throw Error(ErrorKind::empty_mask, "mae_degrees: masks do not intersect");
  return sum / static_cast<double>(n);
}

double mean_depth_error_mm(const DepthMap& estimate, const DepthMap& truth, const Mask* region) {
  require_same_shape(estimate.values, truth.values, "mean_depth_error_mm");
  if (region != nullptr) require_same_shape(estimate.values, *region, "mean_depth_error_mm");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < estimate.mask.size(); ++i) {
    if (!estimate.mask[i] || !truth.mask[i] || (region != nullptr && !(*region)[i])) continue;
    sum += std::abs(estimate.values[i] - truth.values[i]);
    ++n;
  }
  if (n == 0) throw Error(ErrorKind::empty_mask, "mean_depth_error_mm: masks do not intersect");
  return 1000.0 * sum / static_cast<double>(n);
}

}  // namespace nfps
