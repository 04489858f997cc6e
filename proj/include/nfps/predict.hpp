#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nfps/datagen.hpp"
#include "nfps/obsmap.hpp"
#include "nfps/tinynet.hpp"

namespace nfps {

/// Maps one pixel's observation to a unit, camera-facing normal, or nothing
/// when the pixel cannot be predicted. Implementations are const and may be
/// called concurrently.
class NormalPredictor {
 public:
  virtual ~NormalPredictor() = default;
  virtual std::optional<Vec3> predict(const PixelObservation& obs) const = 0;
  virtual bool needs_map() const = 0;
  virtual std::string name() const = 0;
  /// Predicts every valid pixel of a batch. The default calls predict() per
  /// pixel in parallel.
  virtual NormalMap predict_all(const ObservationBatch& batch) const;
};

struct LambertianFit {
  Vec3 normal;
  Spectrum albedo;
};

/// Samples whose grayscale magnitude is below this fraction of the brightest
/// one are treated as shadowed.
inline constexpr double kShadowThreshold = 0.02;

/// Least-squares Lambertian inversion: b = argmin sum (j_m - b . L_m)^2 over
/// unshadowed samples, N = b/|b| turned toward `view_dir` when given, albedo
/// refit per channel. Throws insufficient_data / degenerate_lighting.
LambertianFit lambertian_ls_predict(std::span<const Spectrum> samples,
                                    std::span<const Vec3> light_dirs,
                                    const Vec3* view_dir = nullptr);

class LambertianPredictor final : public NormalPredictor {
 public:
  std::optional<Vec3> predict(const PixelObservation& obs) const override;
  bool needs_map() const override { return false; }
  std::string name() const override { return "lambertian"; }
};

class NetPredictor final : public NormalPredictor {
 public:
  explicit NetPredictor(TinyNet<float> net) : net_(std::move(net)) {}
  std::optional<Vec3> predict(const PixelObservation& obs) const override;
  bool needs_map() const override { return true; }
  std::string name() const override { return "net"; }
  NormalMap predict_all(const ObservationBatch& batch) const override;
  const TinyNet<float>& net() const noexcept { return net_; }

 private:
  TinyNet<float> net_;
};

/// Oracle predictor returning stored normals by pixel; used to isolate the
/// integration error in tests and experiments.
class LookupPredictor final : public NormalPredictor {
 public:
  explicit LookupPredictor(NormalMap normals) : normals_(std::move(normals)) {}
  std::optional<Vec3> predict(const PixelObservation& obs) const override;
  bool needs_map() const override { return false; }
  std::string name() const override { return "lookup"; }

 private:
  NormalMap normals_;
};

/// Writes one example's network input into column block `slot` of `input`
/// (see TinyNet::forward for the layout).
template <typename Scalar>
void fill_net_input(const ObservationMap& map, int slot,
                    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& input);

Vec3 net_predict(const TinyNet<float>& net, const ObservationMap& map);

struct TrainConfig {
  int batch_size = 256;
  int epochs = 10;
  double learning_rate = 1e-3;
  double lr_decay_per_epoch = 0.001;
  int decay_after_epoch = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Learning rate in effect during 1-based `epoch`.
double learning_rate_at(const TrainConfig& config, int epoch);

struct TrainReport {
  std::vector<double> epoch_loss;
  std::size_t steps = 0;
};

using TrainProgress = std::function<void(int epoch, double mean_loss)>;

/// Adam (0.9, 0.999, 1e-8) on the mean squared error between normalized
/// outputs and labels. A non-finite batch loss aborts with a numerical error
/// naming the batch.
TrainReport train(TinyNet<float>& net, const Dataset& data, const TrainConfig& config,
                  const TrainProgress& progress = {});

/// Runs exactly `steps` optimizer steps (cycling through shuffled epochs);
/// returns the loss of the last step.
double train_steps(TinyNet<float>& net, const Dataset& data, const TrainConfig& config,
                   std::size_t steps);

struct GradientCheckOptions {
  /// Initial finite-difference step; shrunk while successive estimates
  /// disagree beyond roundoff (a leaky-ReLU kink inside the stencil).
  double step = 1e-3;
  /// Check at most this many parameters (evenly strided); 0 = all.
  std::size_t max_params = 0;
  /// Denominator floor for the relative deviation.
  double floor = 1e-6;
};

/// Max over parameters of |analytic - numeric| / max(|analytic|, |numeric|,
/// floor) with five-point central differences in double precision.
double gradient_check(const TinyNet<double>& net, const ObservationMap& map, const Vec3& label,
                      const GradientCheckOptions& options = {});

/// Angle between two directions, degrees.
double angle_degrees(const Vec3& a, const Vec3& b);

}  // namespace nfps
