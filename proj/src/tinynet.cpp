#include "nfps/tinynet.hpp"

#include <cmath>
#include <random>

#include "nfps/error.hpp"
#include "nfps/random.hpp"

namespace nfps {

void NetShape::validate() const {
  if (map_size < 4) throw Error(ErrorKind::invalid_config, "net: map_size must be >= 4");
  if (channels != 1 && channels != 3) throw Error(ErrorKind::invalid_config, "net: channels must be 1 or 3");
  if (conv1 < 1 || conv2 < 1 || conv3 < 1 || hidden < 1) {
    throw Error(ErrorKind::invalid_config, "net: layer widths must be positive");
  }
}

template <typename Scalar>
struct TinyNet<Scalar>::Activations {
  int batch = 0;
  std::array<Matrix, 3> cols;
  std::array<Matrix, 3> pre;
  std::array<Matrix, 3> act;
  Matrix flat;
  Matrix hidden_pre;
  Matrix hidden_act;
  Matrix out;
};

namespace {

template <typename Matrix>
void im2col(const Matrix& in, int channels, int size, int stride, int out_size, int batch,
            Matrix& cols) {
  using Scalar = typename Matrix::Scalar;
  cols.resize(channels * 9, static_cast<Eigen::Index>(batch) * out_size * out_size);
  const Scalar* src = in.data();
  for (int b = 0; b < batch; ++b) {
    for (int oy = 0; oy < out_size; ++oy) {
      for (int ox = 0; ox < out_size; ++ox) {
        const Eigen::Index n = (static_cast<Eigen::Index>(b) * out_size + oy) * out_size + ox;
        Scalar* dst = cols.col(n).data();
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * stride + ky - 1;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * stride + kx - 1;
            const int k = ky * 3 + kx;
            if (iy < 0 || ix < 0 || iy >= size || ix >= size) {
              for (int ci = 0; ci < channels; ++ci) dst[ci * 9 + k] = Scalar(0);
            } else {
              const Scalar* px =
                  src + ((static_cast<Eigen::Index>(b) * size + iy) * size + ix) * channels;
              for (int ci = 0; ci < channels; ++ci) dst[ci * 9 + k] = px[ci];
            }
          }
        }
      }
    }
  }
}

template <typename Matrix>
void col2im(const Matrix& cols, int channels, int size, int stride, int out_size, int batch,
            Matrix& out) {
  using Scalar = typename Matrix::Scalar;
  out.setZero(channels, static_cast<Eigen::Index>(batch) * size * size);
  Scalar* dst = out.data();
  for (int b = 0; b < batch; ++b) {
    for (int oy = 0; oy < out_size; ++oy) {
      for (int ox = 0; ox < out_size; ++ox) {
        const Eigen::Index n = (static_cast<Eigen::Index>(b) * out_size + oy) * out_size + ox;
        const Scalar* src = cols.col(n).data();
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= size) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * stride + kx - 1;
            if (ix < 0 || ix >= size) continue;
            Scalar* px = dst + ((static_cast<Eigen::Index>(b) * size + iy) * size + ix) * channels;
            const int k = ky * 3 + kx;
            for (int ci = 0; ci < channels; ++ci) px[ci] += src[ci * 9 + k];
          }
        }
      }
    }
  }
}

template <typename Scalar>
Scalar leaky(Scalar x) {
  return x > Scalar(0) ? x : TinyNet<Scalar>::kLeakySlope * x;
}

template <typename Scalar>
Scalar leaky_slope(Scalar x) {
  return x > Scalar(0) ? Scalar(1) : TinyNet<Scalar>::kLeakySlope;
}

template <typename Matrix>
typename Matrix::Scalar output_norm(const Matrix& out, Eigen::Index b) {
  using Scalar = typename Matrix::Scalar;
  return std::max(out.col(b).norm(), Scalar(1e-12));
}

}  // namespace

template <typename Scalar>
TinyNet<Scalar>::TinyNet(const NetShape& shape, std::uint64_t seed) : shape_(shape) {
  shape_.validate();
  std::size_t offset = 0;
  const int sizes[4] = {shape_.map_size, shape_.map_size, shape_.size_after_conv2(),
                        shape_.size_after_conv3()};
  const int widths[4] = {shape_.input_channels(), shape_.conv1, shape_.conv2, shape_.conv3};
  const int strides[3] = {1, 2, 2};
  for (int l = 0; l < 3; ++l) {
    Conv& c = convs_[l];
    c.in_channels = widths[l];
    c.out_channels = widths[l + 1];
    c.stride = strides[l];
    c.in_size = sizes[l];
    c.out_size = sizes[l + 1];
    c.weights = offset;
    offset += static_cast<std::size_t>(c.out_channels) * c.in_channels * 9;
    c.bias = offset;
    offset += static_cast<std::size_t>(c.out_channels);
  }
  const int dense_in[2] = {shape_.flat_size(), shape_.hidden};
  const int dense_out[2] = {shape_.hidden, 3};
  for (int l = 0; l < 2; ++l) {
    Dense& d = dense_[l];
    d.in = dense_in[l];
    d.out = dense_out[l];
    d.weights = offset;
    offset += static_cast<std::size_t>(d.in) * d.out;
    d.bias = offset;
    offset += static_cast<std::size_t>(d.out);
  }
  params_.setZero(static_cast<Eigen::Index>(offset));

  // He-normal weights, small uniform biases (a zero input must still give a
  // non-zero output direction).
  Rng rng(mix_seed(seed, 0x7e7));
  auto init = [&](std::size_t w, std::size_t count, int fan_in, std::size_t b, int outs) {
    std::normal_distribution<double> weight(0.0, std::sqrt(2.0 / fan_in));
    for (std::size_t i = 0; i < count; ++i) params_[w + i] = static_cast<Scalar>(weight(rng));
    for (int i = 0; i < outs; ++i) params_[b + i] = static_cast<Scalar>(uniform(rng, -0.1, 0.1));
  };
  for (const Conv& c : convs_) {
    init(c.weights, static_cast<std::size_t>(c.out_channels) * c.in_channels * 9, c.in_channels * 9,
         c.bias, c.out_channels);
  }
  for (const Dense& d : dense_) {
    init(d.weights, static_cast<std::size_t>(d.in) * d.out, d.in, d.bias, d.out);
  }
}

template <typename Scalar>
void TinyNet<Scalar>::run_forward(const Matrix& input, Activations& a) const {
  const Eigen::Index pixels = static_cast<Eigen::Index>(shape_.map_size) * shape_.map_size;
  if (input.rows() != shape_.input_channels() || input.cols() % pixels != 0 || input.cols() == 0) {
    throw Error(ErrorKind::dimension, "TinyNet: input must be " +
                                          std::to_string(shape_.input_channels()) + " x (batch*" +
                                          std::to_string(pixels) + ")");
  }
  a.batch = static_cast<int>(input.cols() / pixels);
  const Matrix* in = &input;
  for (int l = 0; l < 3; ++l) {
    const Conv& c = convs_[l];
    im2col(*in, c.in_channels, c.in_size, c.stride, c.out_size, a.batch, a.cols[l]);
    Eigen::Map<const Matrix> w(params_.data() + c.weights, c.out_channels, c.in_channels * 9);
    Eigen::Map<const Vector> b(params_.data() + c.bias, c.out_channels);
    a.pre[l].noalias() = w * a.cols[l];
    a.pre[l].colwise() += b;
    a.act[l] = a.pre[l].unaryExpr([](Scalar x) { return leaky(x); });
    in = &a.act[l];
  }

  const int spatial = convs_[2].out_size * convs_[2].out_size;
  const int depth = convs_[2].out_channels;
  a.flat.resize(shape_.flat_size(), a.batch);
  for (int b = 0; b < a.batch; ++b) {
    for (int ch = 0; ch < depth; ++ch) {
      for (int pos = 0; pos < spatial; ++pos) {
        a.flat(ch * spatial + pos, b) = a.act[2](ch, static_cast<Eigen::Index>(b) * spatial + pos);
      }
    }
  }

  const Dense& d1 = dense_[0];
  Eigen::Map<const Matrix> w1(params_.data() + d1.weights, d1.out, d1.in);
  Eigen::Map<const Vector> b1(params_.data() + d1.bias, d1.out);
  a.hidden_pre.noalias() = w1 * a.flat;
  a.hidden_pre.colwise() += b1;
  a.hidden_act = a.hidden_pre.unaryExpr([](Scalar x) { return leaky(x); });

  const Dense& d2 = dense_[1];
  Eigen::Map<const Matrix> w2(params_.data() + d2.weights, d2.out, d2.in);
  Eigen::Map<const Vector> b2(params_.data() + d2.bias, d2.out);
  a.out.noalias() = w2 * a.hidden_act;
  a.out.colwise() += b2;
}

template <typename Scalar>
typename TinyNet<Scalar>::Matrix TinyNet<Scalar>::forward(const Matrix& input) const {
  Activations a;
  run_forward(input, a);
  Matrix y(3, a.batch);
  for (Eigen::Index b = 0; b < a.batch; ++b) y.col(b) = a.out.col(b) / output_norm(a.out, b);
  return y;
}

template <typename Scalar>
Scalar TinyNet<Scalar>::loss(const Matrix& input, const Matrix& labels) const {
  const Matrix y = forward(input);
  if (labels.rows() != 3 || labels.cols() != y.cols()) {
    throw Error(ErrorKind::dimension, "TinyNet: labels must be 3 x batch");
  }
  return (y - labels).squaredNorm() / static_cast<Scalar>(y.cols());
}

template <typename Scalar>
Scalar TinyNet<Scalar>::loss_and_gradient(const Matrix& input, const Matrix& labels,
                                          Vector& gradient) const {
  Activations a;
  run_forward(input, a);
  const int batch = a.batch;
  if (labels.rows() != 3 || labels.cols() != batch) {
    throw Error(ErrorKind::dimension, "TinyNet: labels must be 3 x batch");
  }
  gradient.setZero(params_.size());

  // Loss and its gradient through the unit normalization.
  Matrix d_out(3, batch);
  Scalar loss = 0;
  const Scalar inv_batch = Scalar(1) / static_cast<Scalar>(batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Scalar len = output_norm(a.out, b);
    const Eigen::Matrix<Scalar, 3, 1> y = a.out.col(b) / len;
    const Eigen::Matrix<Scalar, 3, 1> diff = y - labels.col(b);
    loss += diff.squaredNorm();
    const Eigen::Matrix<Scalar, 3, 1> dy = Scalar(2) * inv_batch * diff;
    d_out.col(b) = (dy - y * y.dot(dy)) / len;
  }
  loss *= inv_batch;

  const Dense& d2 = dense_[1];
  Eigen::Map<const Matrix> w2(params_.data() + d2.weights, d2.out, d2.in);
  Eigen::Map<Matrix>(gradient.data() + d2.weights, d2.out, d2.in).noalias() =
      d_out * a.hidden_act.transpose();
  Eigen::Map<Vector>(gradient.data() + d2.bias, d2.out) = d_out.rowwise().sum();

  Matrix d_hidden = w2.transpose() * d_out;
  d_hidden.array() *= a.hidden_pre.unaryExpr([](Scalar x) { return leaky_slope(x); }).array();
  const Dense& d1 = dense_[0];
  Eigen::Map<const Matrix> w1(params_.data() + d1.weights, d1.out, d1.in);
  Eigen::Map<Matrix>(gradient.data() + d1.weights, d1.out, d1.in).noalias() =
      d_hidden * a.flat.transpose();
  Eigen::Map<Vector>(gradient.data() + d1.bias, d1.out) = d_hidden.rowwise().sum();

  const Matrix d_flat = w1.transpose() * d_hidden;
  const int spatial = convs_[2].out_size * convs_[2].out_size;
  const int depth = convs_[2].out_channels;
  Matrix d_act(depth, static_cast<Eigen::Index>(batch) * spatial);
  for (int b = 0; b < batch; ++b) {
    for (int ch = 0; ch < depth; ++ch) {
      for (int pos = 0; pos < spatial; ++pos) {
        d_act(ch, static_cast<Eigen::Index>(b) * spatial + pos) = d_flat(ch * spatial + pos, b);
      }
    }
  }

  Matrix d_cols;
  for (int l = 2; l >= 0; --l) {
    const Conv& c = convs_[l];
    Matrix d_pre = d_act.array() * a.pre[l].unaryExpr([](Scalar x) { return leaky_slope(x); }).array();
    Eigen::Map<Matrix>(gradient.data() + c.weights, c.out_channels, c.in_channels * 9).noalias() =
        d_pre * a.cols[l].transpose();
    Eigen::Map<Vector>(gradient.data() + c.bias, c.out_channels) = d_pre.rowwise().sum();
    if (l == 0) break;
    Eigen::Map<const Matrix> w(params_.data() + c.weights, c.out_channels, c.in_channels * 9);
    d_cols.noalias() = w.transpose() * d_pre;
    col2im(d_cols, c.in_channels, c.in_size, c.stride, c.out_size, batch, d_act);
  }
  return loss;
}

template class TinyNet<float>;
template class TinyNet<double>;

}  // namespace nfps
