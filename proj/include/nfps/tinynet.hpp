#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace nfps {

/// Layer widths of the per-pixel network. The defaults are the production
/// architecture; tests shrink them to make finite-difference checks cheap.
struct NetShape {
  int map_size = 32;
  int channels = 1;  // reflectance channels; the net adds the two view planes
  int conv1 = 8;
  int conv2 = 16;
  int conv3 = 32;
  int hidden = 128;

  int input_channels() const noexcept { return channels + 2; }
  int size_after_conv2() const noexcept { return (map_size - 1) / 2 + 1; }
  int size_after_conv3() const noexcept { return (size_after_conv2() - 1) / 2 + 1; }
  int flat_size() const noexcept { return conv3 * size_after_conv3() * size_after_conv3(); }
  void validate() const;
  bool operator==(const NetShape&) const = default;
};

/// conv3x3(s1) -> conv3x3(s2) -> conv3x3(s2) -> dense -> dense(3) -> unit
/// normalization; leaky ReLU (0.01) after every layer but the last dense.
/// Convolutions use zero padding of one pixel.
///
/// All parameters live in one flat vector (layer order, weights before
/// biases), which is also the checkpoint and optimizer layout.
template <typename Scalar>
class TinyNet {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  static constexpr Scalar kLeakySlope = Scalar(0.01);

  explicit TinyNet(const NetShape& shape = {}, std::uint64_t seed = 0);

  const NetShape& shape() const noexcept { return shape_; }
  std::size_t parameter_count() const noexcept { return static_cast<std::size_t>(params_.size()); }
  Vector& parameters() noexcept { return params_; }
  const Vector& parameters() const noexcept { return params_; }

  /// Input: input_channels x (batch * D * D); column (b, y, x) in row-major
  /// order within each example. Output: 3 x batch unit vectors.
  Matrix forward(const Matrix& input) const;

  /// Mean over the batch of |y - label|^2 with y the normalized output.
  /// Fills `gradient` (same layout as parameters()).
  Scalar loss_and_gradient(const Matrix& input, const Matrix& labels, Vector& gradient) const;

  Scalar loss(const Matrix& input, const Matrix& labels) const;

  template <typename Other>
  TinyNet<Other> cast() const {
    TinyNet<Other> out(shape_, 0);
    out.parameters() = params_.template cast<Other>();
    return out;
  }

 private:
  struct Conv {
    int in_channels, out_channels, stride, in_size, out_size;
    std::size_t weights, bias;
  };
  struct Dense {
    int in, out;
    std::size_t weights, bias;
  };
  struct Activations;

  void run_forward(const Matrix& input, Activations& acts) const;

  NetShape shape_;
  std::array<Conv, 3> convs_{};
  std::array<Dense, 2> dense_{};
  Vector params_;
};

extern template class TinyNet<float>;
extern template class TinyNet<double>;

}  // namespace nfps
