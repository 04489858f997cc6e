#pragma once

#include <cstddef>
#include <vector>

#include "nfps/geometry.hpp"

namespace nfps {

/// Calibrated LED: position P, principal direction S (pointing into the
/// scene), brightness phi and angular dissipation exponent mu.
struct PointLight {
  Vec3 position = Vec3::Zero();
  Vec3 principal_dir = Vec3(0.0, 0.0, 1.0);
  double brightness = 1.0;
  double mu = 0.0;

  void validate() const;
};

/// Ordered lights; index m of the rig is image m of a capture.
struct LightRig {
  std::vector<PointLight> lights;

  std::size_t size() const noexcept { return lights.size(); }
  const PointLight& operator[](std::size_t m) const { return lights[m]; }
  void validate() const;
};

struct LightVector {
  Vec3 vector;     // P - X, meters
  Vec3 direction;  // unit
  double distance = 0.0;
};

LightVector light_vector(const PointLight& light, const Vec3& point);

/// phi * max(0, -L_hat . S)^mu / |L|^2, with the angular term fixed to 1 when
/// mu == 0.
double attenuation(const PointLight& light, const Vec3& point);

/// Lights evenly spaced on a circle of `radius` in the z = 0 plane, all
/// facing +z.
LightRig make_ring_rig(int count, double radius, double brightness, double mu);

}  // namespace nfps
