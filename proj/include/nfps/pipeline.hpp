#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "nfps/integrate.hpp"
#include "nfps/obsmap.hpp"
#include "nfps/predict.hpp"

namespace nfps {

struct ReconstructionConfig {
  std::shared_ptr<const NormalPredictor> predictor;
  int iterations = 2;
  double init_depth = 0.15;
  IntegratorConfig integrator;
  int map_size = 32;
  /// Optional early stop once the mean |depth change| drops below this (mm).
  std::optional<double> stop_below_mm;

  void validate() const;
};

/// Optional ground truth for metric reporting. `region` restricts the
/// metrics (e.g. an eroded interior mask); empty means the GT mask.
struct GroundTruth {
  DepthMap depth;
  NormalMap normals;
  Mask region;
};

struct IterationMetrics {
  double mae_nfcnn = 0.0;
  double mae_nfs = 0.0;
  double depth_error_mm = 0.0;
};

struct IterationResult {
  NormalMap predicted;       // NfCNN
  DepthMap depth;
  NormalMap differentiated;  // NfS
  bool integration_converged = false;
  double seconds = 0.0;
  std::optional<IterationMetrics> metrics;
};

struct ReconstructionReport {
  std::vector<IterationResult> iterations;
  double wall_seconds = 0.0;

  const IterationResult& final() const { return iterations.back(); }
};

ReconstructionReport reconstruct(std::span<const Image> images, const LightRig& rig,
                                 const CameraIntrinsics& intrinsics, const Mask& mask,
                                 const ReconstructionConfig& config,
                                 const GroundTruth* truth = nullptr);

/// Far-field ablation: one pass with a_m = 1 and each L_m fixed to the
/// direction from the frustum-center point (principal ray at init_depth).
ReconstructionReport naive_farfield_reconstruct(std::span<const Image> images,
                                                const LightRig& rig,
                                                const CameraIntrinsics& intrinsics,
                                                const Mask& mask,
                                                const ReconstructionConfig& config,
                                                const GroundTruth* truth = nullptr);

/// Mean angle over the shared mask (intersected with `region` if given).
double mae_degrees(const NormalMap& estimate, const NormalMap& truth,
                   const Mask* region = nullptr);

double mean_depth_error_mm(const DepthMap& estimate, const DepthMap& truth,
                           const Mask* region = nullptr);

}  // namespace nfps
