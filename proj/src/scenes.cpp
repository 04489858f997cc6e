#include "nfps/scenes.hpp"

#include <cmath>
#include <numbers>

namespace nfps {

SceneShape parse_scene_shape(std::string_view name) {
  if (name == "sphere") return SceneShape::sphere;
  if (name == "paraboloid") return SceneShape::paraboloid;
  if (name == "bumps") return SceneShape::bumps;
  if (name == "plane") return SceneShape::plane;
  throw Error(ErrorKind::invalid_config, "unknown scene shape '" + std::string(name) +
                                             "' (expected sphere, paraboloid, bumps or plane)");
}

std::string to_string(SceneShape shape) {
  switch (shape) {
    case SceneShape::sphere: return "sphere";
    case SceneShape::paraboloid: return "paraboloid";
    case SceneShape::bumps: return "bumps";
    case SceneShape::plane: return "plane";
  }
  return "unknown";
}

void SceneSpec::validate() const {
  intrinsics.validate();
  material.validate();
  if (!(distance > 0.0) || !(radius > 0.0) || !(height >= 0.0)) {
    throw Error(ErrorKind::invalid_config, "scene: distance and radius must be > 0, height >= 0");
  }
  if (shape == SceneShape::sphere && !(radius < distance)) {
    throw Error(ErrorKind::invalid_config, "scene: sphere must lie in front of the camera");
  }
  if (!(height < distance)) {
    throw Error(ErrorKind::invalid_config, "scene: relief height must be below the distance");
  }
  if (bump_count < 0) throw Error(ErrorKind::invalid_config, "scene: negative bump_count");
  if (!(albedo_variation >= 0.0 && albedo_variation < 1.0)) {
    throw Error(ErrorKind::invalid_config, "scene: albedo_variation must be in [0, 1)");
  }
  if (!(noise_sigma >= 0.0)) throw Error(ErrorKind::invalid_config, "scene: negative noise_sigma");
}

Material material_preset(std::string_view name, int channels) {
  if (name == "lambertian") return Material::lambertian(0.8, channels);
  if (name == "dielectric") return Material::blinn_phong(0.6, 0.5, 40.0, channels);
  if (name == "metallic") return Material::mix(0.9, 1.0, 80.0, 0.9, channels);
  if (name == "intermediate") return Material::mix(0.7, 0.6, 30.0, 0.5, channels);
  throw Error(ErrorKind::invalid_config,
              "unknown material preset '" + std::string(name) +
                  "' (expected lambertian, dielectric, metallic or intermediate)");
}

namespace {

struct Bump {
  double x = 0.0;
  double y = 0.0;
  double sigma = 0.0;
  double height = 0.0;
};

// Normal of a height field z(u, v) from its log-depth derivatives.
Vec3 normal_from_log_gradient(double p, double q, double ub, double vb, double f) {
  return Vec3(f * p, f * q, -(1.0 + ub * p + vb * q)).normalized();
}

void sphere(const SceneSpec& spec, SyntheticScene& s) {
  const CameraIntrinsics& k = spec.intrinsics;
  const Vec3 c(0.0, 0.0, spec.distance);
  const double r2 = spec.radius * spec.radius;
  for (int row = 0; row < k.height; ++row) {
    for (int col = 0; col < k.width; ++col) {
      const Vec3 d((col - k.u0) / k.focal_px, (row - k.v0) / k.focal_px, 1.0);
      const double b = d.dot(c);
      const double disc = b * b - d.squaredNorm() * (c.squaredNorm() - r2);
      if (disc <= 0.0) continue;
      const double t = (b - std::sqrt(disc)) / d.squaredNorm();
      const Vec3 x = t * d;
      s.depth.values(row, col) = t;
      s.depth.mask(row, col) = 1;
      s.normals.vectors(row, col) = (x - c).normalized();
      s.normals.mask(row, col) = 1;
    }
  }
}

template <typename Height, typename Gradient>
void height_field(const SceneSpec& spec, SyntheticScene& s, bool full_frame, Height z_of,
                  Gradient grad_of) {
  const CameraIntrinsics& k = spec.intrinsics;
  const double scale = spec.distance / k.focal_px;  // meters per pixel at the base depth
  for (int row = 0; row < k.height; ++row) {
    for (int col = 0; col < k.width; ++col) {
      const double ub = col - k.u0;
      const double vb = row - k.v0;
      const double x = ub * scale;
      const double y = vb * scale;
      if (!full_frame && x * x + y * y >= spec.radius * spec.radius) continue;
      const double z = z_of(x, y);
      const Eigen::Vector2d g = grad_of(x, y);  // dz/dx, dz/dy in meters
      const double p = g.x() * scale / z;
      const double q = g.y() * scale / z;
      s.depth.values(row, col) = z;
      s.depth.mask(row, col) = 1;
      s.normals.vectors(row, col) = normal_from_log_gradient(p, q, ub, vb, k.focal_px);
      s.normals.mask(row, col) = 1;
    }
  }
}

std::vector<Bump> draw_bumps(const SceneSpec& spec) {
  Rng rng = make_rng(spec.seed, 0xb0);
  std::vector<Bump> bumps;
  for (int i = 0; i < spec.bump_count; ++i) {
    const double r = 0.6 * spec.radius * std::sqrt(uniform(rng, 0.0, 1.0));
    const double a = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    bumps.push_back({r * std::cos(a), r * std::sin(a), spec.radius * uniform(rng, 0.15, 0.3),
                     spec.height * uniform(rng, 0.4, 1.0)});
  }
  return bumps;
}

}  // namespace

SyntheticScene make_scene(const SceneSpec& spec) {
  spec.validate();
  const CameraIntrinsics& k = spec.intrinsics;
  SyntheticScene s;
  s.intrinsics = k;
  s.depth = DepthMap(k.width, k.height);
  s.normals = NormalMap(k.width, k.height);

  switch (spec.shape) {
    case SceneShape::sphere:
      sphere(spec, s);
      break;
    case SceneShape::plane:
      height_field(spec, s, true, [&](double, double) { return spec.distance; },
                   [](double, double) { return Eigen::Vector2d::Zero().eval(); });
      break;
    case SceneShape::paraboloid: {
      const double a = spec.height / (spec.radius * spec.radius);
      height_field(
          spec, s, false,
          [&](double x, double y) { return spec.distance - spec.height + a * (x * x + y * y); },
          [&](double x, double y) { return Eigen::Vector2d(2.0 * a * x, 2.0 * a * y); });
      break;
    }
    case SceneShape::bumps: {
      const std::vector<Bump> bumps = draw_bumps(spec);
      auto each = [&](double x, double y, auto&& fn) {
        for (const Bump& b : bumps) {
          const double dx = x - b.x;
          const double dy = y - b.y;
          fn(b, dx, dy, b.height * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma)));
        }
      };
      height_field(
          spec, s, false,
          [&](double x, double y) {
            double z = spec.distance;
            each(x, y, [&](const Bump&, double, double, double h) { z -= h; });
            return z;
          },
          [&](double x, double y) {
            Eigen::Vector2d g = Eigen::Vector2d::Zero();
            each(x, y, [&](const Bump& b, double dx, double dy, double h) {
              const double s2 = b.sigma * b.sigma;
              g += Eigen::Vector2d(h * dx / s2, h * dy / s2);
            });
            return g;
          });
      break;
    }
  }

  s.materials = Grid<Material>(k.width, k.height, spec.material);
  if (spec.albedo_variation > 0.0) {
    Rng rng = make_rng(spec.seed, 0xa1);
    for (std::size_t i = 0; i < s.materials.size(); ++i) {
      s.materials[i].albedo *= 1.0 + spec.albedo_variation * uniform(rng, -1.0, 1.0);
    }
  }
  return s;
}

RenderedScene render_synthetic(const SceneSpec& spec, const LightRig& rig) {
  rig.validate();
  RenderedScene out;
  out.scene = make_scene(spec);
  RenderedImages r = render_scene(out.scene.depth, out.scene.normals, out.scene.materials, rig,
                                  out.scene.intrinsics);
  out.images = std::move(r.images);
  out.exposure = r.exposure;
  if (spec.noise_sigma > 0.0) {
    for (std::size_t m = 0; m < out.images.size(); ++m) {
      Rng rng = make_rng(spec.seed, 0x100 + m);
      Image& img = out.images[m];
      for (int row = 0; row < img.height; ++row) {
        for (int col = 0; col < img.width; ++col) {
          if (!out.scene.depth.mask(row, col)) continue;
          for (int ch = 0; ch < img.channels; ++ch) {
            float& v = img.at(row, col, ch);
            v = std::max(0.0f, v + static_cast<float>(gaussian(rng, 0.0, spec.noise_sigma)));
          }
        }
      }
    }
  }
  return out;
}

LightRig default_rig() { return make_ring_rig(15, 0.065, 1.0, 1.0); }

}  // namespace nfps
