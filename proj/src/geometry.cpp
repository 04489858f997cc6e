#include "nfps/geometry.hpp"

#include <cmath>
#include <string>

namespace nfps {

void CameraIntrinsics::validate() const {
  if (!(focal_px > 0.0) || !std::isfinite(focal_px)) {
    throw Error(ErrorKind::invalid_config, "focal_px must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw Error(ErrorKind::invalid_config, "image size must be positive");
  }
  if (!(u0 >= 0.0 && u0 < width && v0 >= 0.0 && v0 < height)) {
    throw Error(ErrorKind::invalid_config, "principal point outside the image");
  }
}

CameraIntrinsics CameraIntrinsics::centered(int width, int height, double focal_px) {
  CameraIntrinsics k;
  k.focal_px = focal_px;
  k.width = width;
  k.height = height;
  k.u0 = 0.5 * (width - 1);
  k.v0 = 0.5 * (height - 1);
  k.validate();
  return k;
}

DepthMap DepthMap::constant(const Mask& mask, double z) {
  DepthMap d(mask.width(), mask.height());
  d.mask = mask;
  for (std::size_t i = 0; i < mask.size(); ++i) d.values[i] = mask[i] ? z : 0.0;
  return d;
}

Vec3 backproject(Pixel pixel, double z, const CameraIntrinsics& k) {
  if (!(z > 0.0) || !std::isfinite(z)) {
    throw Error(ErrorKind::invalid_depth, "backproject: depth must be positive, got " +
                                              std::to_string(z));
  }
  return {z * (pixel.u - k.u0) / k.focal_px, z * (pixel.v - k.v0) / k.focal_px, z};
}

Pixel reproject(const Vec3& point, const CameraIntrinsics& k) {
  if (!(point.z() > 0.0)) {
    throw Error(ErrorKind::invalid_depth, "reproject: point behind the camera");
  }
  return {k.u0 + k.focal_px * point.x() / point.z(), k.v0 + k.focal_px * point.y() / point.z()};
}

Vec3 viewing_direction(const Vec3& point) {
  const double n = point.norm();
  if (!(n > 0.0)) {
    throw Error(ErrorKind::degenerate_point, "viewing_direction: point at the camera center");
  }
  return -point / n;
}

FrustumSample sample_frustum(const CameraIntrinsics& k, DepthRange range, Rng& rng) {
  if (!(range.near > 0.0) || !(range.far > range.near)) {
    throw Error(ErrorKind::invalid_config, "sample_frustum: need 0 < near < far");
  }
  FrustumSample s;
  s.pixel.u = uniform(rng, 0.0, static_cast<double>(k.width));
  s.pixel.v = uniform(rng, 0.0, static_cast<double>(k.height));
  s.z = uniform(rng, range.near, range.far);
  s.point = backproject(s.pixel, s.z, k);
  return s;
}

namespace {

Vec3 point_at(const DepthMap& depth, const CameraIntrinsics& k, int row, int col) {
  const double z = depth.values(row, col);
  return {z * (col - k.u0) / k.focal_px, z * (row - k.v0) / k.focal_px, z};
}

bool masked(const DepthMap& depth, int row, int col) {
  return depth.mask.contains(row, col) && depth.mask(row, col);
}

// Tangent along one image axis; false when neither neighbour is masked.
bool tangent(const DepthMap& depth, const CameraIntrinsics& k, int row, int col, int dr, int dc,
             Vec3& out) {
  const bool fwd = masked(depth, row + dr, col + dc);
  const bool bwd = masked(depth, row - dr, col - dc);
  if (fwd && bwd) {
    out = 0.5 * (point_at(depth, k, row + dr, col + dc) - point_at(depth, k, row - dr, col - dc));
  } else if (fwd) {
    out = point_at(depth, k, row + dr, col + dc) - point_at(depth, k, row, col);
  } else if (bwd) {
    out = point_at(depth, k, row, col) - point_at(depth, k, row - dr, col - dc);
  } else {
    return false;
  }
  return true;
}

void normal_at(const DepthMap& depth, const CameraIntrinsics& k, int row, int col,
               NormalMap& out) {
  const std::size_t i = depth.values.index(row, col);
  out.mask[i] = 0;
  if (!depth.mask[i]) return;
  Vec3 du, dv;
  if (!tangent(depth, k, row, col, 0, 1, du) || !tangent(depth, k, row, col, 1, 0, dv)) return;
  const Vec3 n = du.cross(dv);
  const double len = n.norm();
  if (!(len > 0.0) || !std::isfinite(len)) return;
  out.vectors[i] = face_camera(n / len, point_at(depth, k, row, col));
  out.mask[i] = 1;
}

void check_depth_input(const DepthMap& depth, const CameraIntrinsics& k) {
  k.validate();
  require_same_shape(depth.values, depth.mask, "depth_to_normals");
  if (depth.width() != k.width || depth.height() != k.height) {
    throw Error(ErrorKind::dimension, "depth_to_normals: depth map does not match intrinsics");
  }
  if (count(depth.mask) == 0) {
    throw Error(ErrorKind::empty_mask, "depth_to_normals: empty mask");
  }
}

}  // namespace

NormalMap depth_to_normals(const DepthMap& depth, const CameraIntrinsics& k) {
  check_depth_input(depth, k);
  NormalMap out(depth.width(), depth.height());
  const int h = depth.height();
  const int w = depth.width();
#pragma omp parallel for schedule(static)
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) normal_at(depth, k, row, col, out);
  }
  return out;
}

namespace reference {

NormalMap depth_to_normals(const DepthMap& depth, const CameraIntrinsics& k) {
  check_depth_input(depth, k);
  NormalMap out(depth.width(), depth.height());
  for (int row = 0; row < depth.height(); ++row) {
    for (int col = 0; col < depth.width(); ++col) normal_at(depth, k, row, col, out);
  }
  return out;
}

}  // namespace reference

}  // namespace nfps
