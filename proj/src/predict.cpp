#include "nfps/predict.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <Eigen/Dense>

namespace nfps {

LambertianFit lambertian_ls_predict(std::span<const Spectrum> samples,
                                    std::span<const Vec3> light_dirs, const Vec3* view_dir) {
  if (samples.size() != light_dirs.size()) {
    throw Error(ErrorKind::dimension, "lambertian_ls_predict: samples/directions size mismatch");
  }
  double peak = 0.0;
  for (const Spectrum& s : samples) peak = std::max(peak, gray(s));
  const double threshold = kShadowThreshold * peak;

  Eigen::Matrix3d normal_matrix = Eigen::Matrix3d::Zero();
  Vec3 rhs = Vec3::Zero();
  std::size_t used = 0;
  for (std::size_t m = 0; m < samples.size(); ++m) {
    const double j = gray(samples[m]);
    if (!(j > threshold)) continue;
    normal_matrix += light_dirs[m] * light_dirs[m].transpose();
    rhs += j * light_dirs[m];
    ++used;
  }
  if (used < 3) {
    throw Error(ErrorKind::insufficient_data,
                "lambertian_ls_predict: " + std::to_string(used) + " unshadowed samples (< 3)");
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(normal_matrix);
  const Vec3 ev = eig.eigenvalues();  // ascending
  if (!(ev[0] > 1e-10 * ev[2])) {
    throw Error(ErrorKind::degenerate_lighting, "lambertian_ls_predict: light directions are rank deficient");
  }
  const Vec3 b = eig.eigenvectors() * (eig.eigenvectors().transpose() * rhs).cwiseQuotient(ev);
  const double len = b.norm();
  if (!(len > 0.0) || !std::isfinite(len)) {
    throw Error(ErrorKind::degenerate_lighting, "lambertian_ls_predict: zero solution");
  }

  LambertianFit fit;
  fit.normal = b / len;
  if (view_dir != nullptr && fit.normal.dot(*view_dir) < 0.0) fit.normal = -fit.normal;

  const int channels = static_cast<int>(samples.front().size());
  Spectrum num = Spectrum::Zero(channels);
  double den = 0.0;
  for (std::size_t m = 0; m < samples.size(); ++m) {
    if (!(gray(samples[m]) > threshold)) continue;
    const double s = fit.normal.dot(light_dirs[m]);
    num += s * samples[m];
    den += s * s;
  }
  fit.albedo = den > 0.0 ? Spectrum(num / den) : Spectrum::Zero(channels);
  return fit;
}

std::optional<Vec3> LambertianPredictor::predict(const PixelObservation& obs) const {
  if (!obs.valid) return std::nullopt;
  const auto samples = obs.valid_samples();
  const auto dirs = obs.valid_light_dirs();
  try {
    return lambertian_ls_predict(samples, dirs, &obs.view_dir).normal;
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::optional<Vec3> LookupPredictor::predict(const PixelObservation& obs) const {
  if (!normals_.mask.contains(obs.row, obs.col) || !normals_.mask(obs.row, obs.col)) {
    return std::nullopt;
  }
  return normals_.vectors(obs.row, obs.col);
}

template <typename Scalar>
void fill_net_input(const ObservationMap& map, int slot,
                    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& input) {
  const int pixels = map.size * map.size;
  const Eigen::Index first = static_cast<Eigen::Index>(slot) * pixels;
  if (input.rows() != map.channels + 2 || input.cols() < first + pixels) {
    throw Error(ErrorKind::dimension, "fill_net_input: input matrix too small for slot");
  }
  for (int px = 0; px < pixels; ++px) {
    for (int ch = 0; ch < map.channels; ++ch) {
      input(ch, first + px) = static_cast<Scalar>(map.grid[static_cast<std::size_t>(px) * map.channels + ch]);
    }
    input(map.channels, first + px) = static_cast<Scalar>(map.view_x);
    input(map.channels + 1, first + px) = static_cast<Scalar>(map.view_y);
  }
}

template void fill_net_input<float>(const ObservationMap&, int, Eigen::MatrixXf&);
template void fill_net_input<double>(const ObservationMap&, int, Eigen::MatrixXd&);

namespace {

void check_map_shape(const NetShape& shape, const ObservationMap& map) {
  if (map.size != shape.map_size || map.channels != shape.channels) {
    throw Error(ErrorKind::dimension, "net: map is " + std::to_string(map.size) + "x" +
                                          std::to_string(map.size) + "x" +
                                          std::to_string(map.channels) + ", network expects " +
                                          std::to_string(shape.map_size) + "x" +
                                          std::to_string(shape.map_size) + "x" +
                                          std::to_string(shape.channels));
  }
}

std::optional<Vec3> turn_visible(Vec3 n, const Vec3& view_dir) {
  const double facing = n.dot(view_dir);
  if (facing < 0.0) n -= 2.0 * facing * view_dir;  // mirror into the visible hemisphere
  if (!n.allFinite() || n.norm() == 0.0) return std::nullopt;
  return n.normalized();
}

}  // namespace

Vec3 net_predict(const TinyNet<float>& net, const ObservationMap& map) {
  check_map_shape(net.shape(), map);
  Eigen::MatrixXf input(map.channels + 2, map.size * map.size);
  fill_net_input(map, 0, input);
  const Eigen::MatrixXf y = net.forward(input);
  return Vec3(y(0, 0), y(1, 0), y(2, 0)).normalized();
}

std::optional<Vec3> NetPredictor::predict(const PixelObservation& obs) const {
  if (!obs.valid || !obs.map.valid) return std::nullopt;
  return turn_visible(net_predict(net_, obs.map), obs.view_dir);
}

NormalMap NormalPredictor::predict_all(const ObservationBatch& batch) const {
  NormalMap out(batch.width, batch.height);
  const auto n = static_cast<std::int64_t>(batch.pixels.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto at = static_cast<std::size_t>(i);
    if (!batch.valid[at]) continue;
    if (auto normal = predict(batch.pixels[at])) {
      out.vectors[at] = *normal;
      out.mask[at] = 1;
    }
  }
  return out;
}

NormalMap NetPredictor::predict_all(const ObservationBatch& batch) const {
  constexpr std::size_t kChunk = 256;
  NormalMap out(batch.width, batch.height);
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < batch.pixels.size(); ++i) {
    const PixelObservation& obs = batch.pixels[i];
    if (batch.valid[i] && obs.valid && obs.map.valid) {
      check_map_shape(net_.shape(), obs.map);
      todo.push_back(i);
    }
  }
  const NetShape& shape = net_.shape();
  const int pixels = shape.map_size * shape.map_size;
  const auto chunks = static_cast<std::int64_t>((todo.size() + kChunk - 1) / kChunk);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t c = 0; c < chunks; ++c) {
    const std::size_t first = static_cast<std::size_t>(c) * kChunk;
    const std::size_t last = std::min(todo.size(), first + kChunk);
    Eigen::MatrixXf input(shape.input_channels(), static_cast<Eigen::Index>(last - first) * pixels);
    for (std::size_t k = first; k < last; ++k) {
      fill_net_input(batch.pixels[todo[k]].map, static_cast<int>(k - first), input);
    }
    const Eigen::MatrixXf y = net_.forward(input);
    for (std::size_t k = first; k < last; ++k) {
      const auto col = static_cast<Eigen::Index>(k - first);
      const std::size_t at = todo[k];
      const Vec3 raw(y(0, col), y(1, col), y(2, col));
      if (auto n = turn_visible(raw.normalized(), batch.pixels[at].view_dir)) {
        out.vectors[at] = *n;
        out.mask[at] = 1;
      }
    }
  }
  return out;
}

void TrainConfig::validate() const {
  if (batch_size < 1 || epochs < 1) {
    throw Error(ErrorKind::invalid_config, "train: batch_size and epochs must be positive");
  }
  if (!(learning_rate >= 0.0) || !(lr_decay_per_epoch >= 0.0) || lr_decay_per_epoch >= 1.0) {
    throw Error(ErrorKind::invalid_config, "train: invalid learning-rate schedule");
  }
}

double learning_rate_at(const TrainConfig& config, int epoch) {
  const int decays = std::max(0, epoch - config.decay_after_epoch);
  return config.learning_rate * std::pow(1.0 - config.lr_decay_per_epoch, decays);
}

namespace {

void fill_packed(const Dataset& data, std::size_t e, int slot, Eigen::MatrixXf& input,
                 Eigen::MatrixXf& labels) {
  const PackedExample& p = data.examples[e];
  const int pixels = data.map_size * data.map_size;
  const Eigen::Index first = static_cast<Eigen::Index>(slot) * pixels;
  auto block = input.middleCols(first, pixels);
  block.topRows(data.channels).setZero();
  block.row(data.channels).setConstant(p.view_x);
  block.row(data.channels + 1).setConstant(p.view_y);
  for (const auto& [at, v] : p.cells) {
    block(static_cast<Eigen::Index>(at % data.channels), static_cast<Eigen::Index>(at / data.channels)) = v;
  }
  labels.col(slot) << p.label[0], p.label[1], p.label[2];
}

class Adam {
 public:
  explicit Adam(std::size_t n) : m_(Eigen::VectorXf::Zero(n)), v_(Eigen::VectorXf::Zero(n)) {}

  void step(Eigen::VectorXf& params, const Eigen::VectorXf& grad, double lr) {
    ++t_;
    constexpr float b1 = 0.9f, b2 = 0.999f, eps = 1e-8f;
    m_ = b1 * m_ + (1.0f - b1) * grad;
    v_ = b2 * v_ + (1.0f - b2) * grad.cwiseProduct(grad);
    const float c1 = 1.0f - std::pow(b1, static_cast<float>(t_));
    const float c2 = 1.0f - std::pow(b2, static_cast<float>(t_));
    const float rate = static_cast<float>(lr);
    params.array() -= rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps);
  }

 private:
  Eigen::VectorXf m_, v_;
  long t_ = 0;
};

void check_dataset(const TinyNet<float>& net, const Dataset& data) {
  if (data.size() == 0) throw Error(ErrorKind::insufficient_data, "train: empty dataset");
  if (data.map_size != net.shape().map_size || data.channels != net.shape().channels) {
    throw Error(ErrorKind::dimension, "train: dataset maps do not match the network input");
  }
}

// Shared epoch loop; stops after `max_steps` optimizer steps when non-zero.
TrainReport run_training(TinyNet<float>& net, const Dataset& data, const TrainConfig& config,
                         std::size_t max_steps, const TrainProgress& progress,
                         double* last_loss) {
  config.validate();
  check_dataset(net, data);
  const int pixels = data.map_size * data.map_size;
  const int batch_cap = static_cast<int>(std::min<std::size_t>(config.batch_size, data.size()));
  Eigen::MatrixXf input(data.channels + 2, static_cast<Eigen::Index>(batch_cap) * pixels);
  Eigen::MatrixXf labels(3, batch_cap);
  Eigen::VectorXf grad;
  Adam adam(net.parameter_count());
  std::vector<std::size_t> order(data.size());

  TrainReport report;
  for (int epoch = 1; max_steps != 0 || epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_rng(config.seed, static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = learning_rate_at(config, epoch);

    double epoch_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_cap, ++batch_index) {
      const int n = static_cast<int>(std::min<std::size_t>(batch_cap, order.size() - start));
      if (input.cols() != static_cast<Eigen::Index>(n) * pixels) {
        input.resize(data.channels + 2, static_cast<Eigen::Index>(n) * pixels);
        labels.resize(3, n);
      }
      for (int s = 0; s < n; ++s) fill_packed(data, order[start + s], s, input, labels);
      const float loss = net.loss_and_gradient(input, labels, grad);
      if (!std::isfinite(loss) || !grad.allFinite()) {
        throw Error(ErrorKind::numerical, "train: non-finite loss in epoch " +
                                              std::to_string(epoch) + ", batch " +
                                              std::to_string(batch_index));
      }
      adam.step(net.parameters(), grad, lr);
      ++report.steps;
      epoch_sum += static_cast<double>(loss) * n;
      if (last_loss) *last_loss = loss;
      if (max_steps != 0 && report.steps == max_steps) {
        report.epoch_loss.push_back(epoch_sum / static_cast<double>(start + n));
        return report;
      }
    }
    report.epoch_loss.push_back(epoch_sum / static_cast<double>(order.size()));
    if (progress) progress(epoch, report.epoch_loss.back());
  }
  return report;
}

}  // namespace

TrainReport train(TinyNet<float>& net, const Dataset& data, const TrainConfig& config,
                  const TrainProgress& progress) {
  return run_training(net, data, config, 0, progress, nullptr);
}

double train_steps(TinyNet<float>& net, const Dataset& data, const TrainConfig& config,
                   std::size_t steps) {
  if (steps == 0) return 0.0;
  double last = 0.0;
  run_training(net, data, config, steps, {}, &last);
  return last;
}

double gradient_check(const TinyNet<double>& net, const ObservationMap& map, const Vec3& label,
                      const GradientCheckOptions& options) {
  check_map_shape(net.shape(), map);
  Eigen::MatrixXd input(map.channels + 2, map.size * map.size);
  fill_net_input(map, 0, input);
  Eigen::MatrixXd target(3, 1);
  target.col(0) = label;

  Eigen::VectorXd analytic;
  net.loss_and_gradient(input, target, analytic);

  TinyNet<double> probe = net;
  auto loss_at = [&](Eigen::Index i, double value) {
    probe.parameters()[i] = value;
    return probe.loss(input, target);
  };
  // Five-point stencil; truncation error O(h^4).
  auto stencil = [&](Eigen::Index i, double h) {
    const double x = net.parameters()[i];
    const double d = 8.0 * (loss_at(i, x + h) - loss_at(i, x - h)) -
                     (loss_at(i, x + 2.0 * h) - loss_at(i, x - 2.0 * h));
    probe.parameters()[i] = x;
    return d / (12.0 * h);
  };
  // Shrink the step until two successive estimates agree; a kink inside the
  // stencil shows up as disagreement. Agreement allows for the roundoff of
  // the finer stencil, which grows as eps |loss| / h.
  const double base_loss = std::abs(probe.loss(input, target));
  auto numeric = [&](Eigen::Index i) {
    double h = options.step;
    double prev = stencil(i, h);
    double best = prev, best_gap = std::numeric_limits<double>::infinity();
    for (int refine = 0; refine < 4; ++refine) {
      h /= 4.0;
      const double next = stencil(i, h);
      const double noise = 1e-15 * std::max(base_loss, 1.0) / h;
      const double gap = std::abs(next - prev) /
                         (1e-7 * std::max(std::abs(next), std::abs(prev)) + 4.0 * noise);
      if (gap <= 1.0) return prev;
      if (gap < best_gap) {
        best_gap = gap;
        best = next;
      }
      prev = next;
    }
    return best;
  };

  const std::size_t n = net.parameter_count();
  const std::size_t stride =
      options.max_params == 0 || options.max_params >= n ? 1 : n / options.max_params;
  double worst = 0.0;
  for (std::size_t i = 0; i < n; i += stride) {
    const auto at = static_cast<Eigen::Index>(i);
    const double num = numeric(at);
    const double a = analytic[at];
    const double denom = std::max({std::abs(a), std::abs(num), options.floor});
    worst = std::max(worst, std::abs(a - num) / denom);
  }
  return worst;
}

double angle_degrees(const Vec3& a, const Vec3& b) {
  const double c = a.dot(b) / (a.norm() * b.norm());
  return std::acos(std::clamp(c, -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

}  // namespace nfps
