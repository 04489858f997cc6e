#include "nfps/lighting.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace nfps {

void PointLight::validate() const {
  if (!position.allFinite()) throw Error(ErrorKind::invalid_config, "light position not finite");
  if (std::abs(principal_dir.norm() - 1.0) > 1e-9) {
    throw Error(ErrorKind::invalid_config, "light principal_dir must be unit length");
  }
  if (!(brightness > 0.0)) throw Error(ErrorKind::invalid_config, "light brightness must be > 0");
  if (!(mu >= 0.0)) throw Error(ErrorKind::invalid_config, "light mu must be >= 0");
}

void LightRig::validate() const {
  if (lights.size() < 3) {
    throw Error(ErrorKind::invalid_config,
                "light rig needs at least 3 lights, got " + std::to_string(lights.size()));
  }
  for (const auto& l : lights) l.validate();
}

LightVector light_vector(const PointLight& light, const Vec3& point) {
  LightVector lv;
  lv.vector = light.position - point;
  lv.distance = lv.vector.norm();
  if (!(lv.distance > 0.0)) {
    throw Error(ErrorKind::degenerate_light, "surface point coincides with a light");
  }
  lv.direction = lv.vector / lv.distance;
  return lv;
}

double attenuation(const PointLight& light, const Vec3& point) {
  const LightVector lv = light_vector(light, point);
  double angular = 1.0;
  if (light.mu != 0.0) {
    // -L_hat is the light-to-point direction; its cosine with S is the lobe.
    angular = std::pow(std::max(0.0, -lv.direction.dot(light.principal_dir)), light.mu);
  }
  return light.brightness * angular / (lv.distance * lv.distance);
}

LightRig make_ring_rig(int count, double radius, double brightness, double mu) {
  if (count < 3) throw Error(ErrorKind::invalid_config, "ring rig needs count >= 3");
  if (!(radius > 0.0)) throw Error(ErrorKind::invalid_config, "ring rig needs radius > 0");
  LightRig rig;
  rig.lights.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const double theta = 2.0 * std::numbers::pi * k / count;
    PointLight l;
    l.position = Vec3(radius * std::cos(theta), radius * std::sin(theta), 0.0);
    l.principal_dir = Vec3(0.0, 0.0, 1.0);
    l.brightness = brightness;
    l.mu = mu;
    rig.lights.push_back(l);
  }
  rig.validate();
  return rig;
}

}  // namespace nfps
