#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "nfps/grid.hpp"
#include "nfps/random.hpp"

namespace nfps {

using Vec3 = Eigen::Vector3d;

/// Continuous pixel coordinate. Pixel (row r, col c) has its center at
/// u = c, v = r.
struct Pixel {
  double u = 0.0;
  double v = 0.0;
};

/// Pinhole camera at the origin looking down +z, u along +x, v along +y.
struct CameraIntrinsics {
  double focal_px = 160.0;
  double u0 = 63.5;
  double v0 = 63.5;
  int width = 128;
  int height = 128;

  void validate() const;
  /// Principal point centered in a width x height frame.
  static CameraIntrinsics centered(int width, int height, double focal_px);
};

/// Camera-frame z in meters. Values outside the mask are ignored.
struct DepthMap {
  Grid<double> values;
  Mask mask;

  DepthMap() = default;
  DepthMap(int width, int height) : values(width, height, 0.0), mask(width, height, 0) {}

  int width() const noexcept { return values.width(); }
  int height() const noexcept { return values.height(); }

  static DepthMap constant(const Mask& mask, double z);
};

/// Unit camera-frame normals; masked vectors face the camera (N . X < 0).
struct NormalMap {
  Grid<Vec3> vectors;
  Mask mask;

  NormalMap() = default;
  NormalMap(int width, int height)
      : vectors(width, height, Vec3::Zero()), mask(width, height, 0) {}

  int width() const noexcept { return vectors.width(); }
  int height() const noexcept { return vectors.height(); }
};

Vec3 backproject(Pixel pixel, double z, const CameraIntrinsics& intrinsics);
Pixel reproject(const Vec3& point, const CameraIntrinsics& intrinsics);

/// -X / |X|. Throws degenerate_point at the camera center.
Vec3 viewing_direction(const Vec3& point);

struct DepthRange {
  double near = 0.10;
  double far = 0.20;
};

struct FrustumSample {
  Pixel pixel;
  double z = 0.0;
  Vec3 point = Vec3::Zero();
};

/// Uniform pixel in [0,W) x [0,H), uniform z in [near, far].
FrustumSample sample_frustum(const CameraIntrinsics& intrinsics, DepthRange range, Rng& rng);

/// Normals of the backprojected surface from finite-difference tangents
/// (central inside the mask, one-sided at its boundary). Pixels lacking a
/// masked neighbor along either image axis are dropped from the output mask.
NormalMap depth_to_normals(const DepthMap& depth, const CameraIntrinsics& intrinsics);

namespace reference {
NormalMap depth_to_normals(const DepthMap& depth, const CameraIntrinsics& intrinsics);
}  // namespace reference

/// Flips `n` if needed so that n . X < 0.
inline Vec3 face_camera(const Vec3& n, const Vec3& point) {
  return n.dot(point) > 0.0 ? Vec3(-n) : n;
}

}  // namespace nfps
