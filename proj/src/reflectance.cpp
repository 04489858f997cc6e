#include "nfps/reflectance.hpp"

#include <algorithm>
#include <cmath>

namespace nfps {

void Material::validate() const {
  const int c = channels();
  if (c != 1 && c != 3) throw Error(ErrorKind::invalid_config, "material needs 1 or 3 channels");
  if ((albedo < 0.0).any() || (albedo > 1.0).any()) {
    throw Error(ErrorKind::invalid_config, "albedo must lie in [0, 1]");
  }
  if (model == BrdfModel::lambertian) return;
  if (!(specular_strength >= 0.0)) {
    throw Error(ErrorKind::invalid_config, "specular_strength must be >= 0");
  }
  if (!(shininess > 0.0)) throw Error(ErrorKind::invalid_config, "shininess must be > 0");
  if (!(metallic_mix >= 0.0 && metallic_mix <= 1.0)) {
    throw Error(ErrorKind::invalid_config, "metallic_mix must lie in [0, 1]");
  }
}

Material Material::lambertian(double rho, int channels) {
  Material m;
  m.model = BrdfModel::lambertian;
  m.albedo = spectrum(channels, rho);
  return m;
}

Material Material::blinn_phong(double rho, double ks, double n, int channels) {
  Material m;
  m.model = BrdfModel::blinn_phong;
  m.albedo = spectrum(channels, rho);
  m.specular_strength = ks;
  m.shininess = n;
  return m;
}

Material Material::mix(double rho, double ks, double n, double metallic, int channels) {
  Material m = blinn_phong(rho, ks, n, channels);
  m.model = BrdfModel::diffuse_specular_mix;
  m.metallic_mix = metallic;
  return m;
}

void GIAugmentation::validate() const {
  if (!(cast_shadow_prob >= 0.0 && cast_shadow_prob <= 1.0)) {
    throw Error(ErrorKind::invalid_config, "cast_shadow_prob must lie in [0, 1]");
  }
  if (!(shadow_factor_max >= 0.0 && shadow_factor_max <= 1.0)) {
    throw Error(ErrorKind::invalid_config, "shadow_factor_max must lie in [0, 1]");
  }
  if (!(ambient_max >= 0.0) || !(self_reflection_max >= 0.0) || !(noise_sigma >= 0.0)) {
    throw Error(ErrorKind::invalid_config, "augmentation magnitudes must be >= 0");
  }
}

Spectrum brdf_eval(const Vec3& n, const Vec3& l, const Vec3& v, const Material& m) {
  const double n_dot_l = n.dot(l);
  if (!(n_dot_l > 0.0)) return Spectrum::Zero(m.channels());
  if (m.model == BrdfModel::lambertian) return m.albedo * n_dot_l;

  const Vec3 half = (l + v).normalized();
  const double lobe = m.specular_strength * std::pow(std::max(0.0, n.dot(half)), m.shininess);
  if (m.model == BrdfModel::blinn_phong) return m.albedo * n_dot_l + lobe;

  const double k = m.metallic_mix;
  return (1.0 - k) * m.albedo * n_dot_l + lobe * ((1.0 - k) + k * m.albedo);
}

std::vector<Spectrum> render_pixel(const SurfaceSample& sample, const LightRig& rig) {
  const Vec3 view = viewing_direction(sample.point);
  std::vector<Spectrum> out;
  out.reserve(rig.size());
  for (const PointLight& light : rig.lights) {
    const double a = attenuation(light, sample.point);
    const Vec3 dir = light_vector(light, sample.point).direction;
    out.push_back(a * brdf_eval(sample.normal, dir, view, sample.material));
  }
  return out;
}

namespace {

void check_scene(const DepthMap& depth, const NormalMap& normals,
                 const Grid<Material>& materials, const LightRig& rig,
                 const CameraIntrinsics& k) {
  k.validate();
  rig.validate();
  require_same_shape(depth.values, normals.vectors, "render_scene");
  require_same_shape(depth.values, materials, "render_scene");
  require_same_shape(depth.values, depth.mask, "render_scene");
  if (depth.width() != k.width || depth.height() != k.height) {
    throw Error(ErrorKind::dimension, "render_scene: depth map does not match intrinsics");
  }
}

int channel_count(const DepthMap& depth, const Grid<Material>& materials) {
  for (std::size_t i = 0; i < materials.size(); ++i) {
    if (depth.mask[i]) return materials[i].channels();
  }
  return 1;
}

void shade(const DepthMap& depth, const NormalMap& normals, const Grid<Material>& materials,
           const LightRig& rig, const CameraIntrinsics& k, int row, int col,
           std::vector<Image>& images) {
  const std::size_t i = depth.values.index(row, col);
  if (!depth.mask[i]) return;
  const SurfaceSample s{backproject({double(col), double(row)}, depth.values[i], k),
                        normals.vectors[i], materials[i]};
  const auto values = render_pixel(s, rig);
  for (std::size_t m = 0; m < values.size(); ++m) {
    for (int ch = 0; ch < images[m].channels; ++ch) {
      images[m].at(row, col, ch) = static_cast<float>(values[m][std::min<Eigen::Index>(ch, values[m].size() - 1)]);
    }
  }
}

// Scale so the 99th percentile of masked raw values becomes 1.
double normalize_exposure(const DepthMap& depth, std::vector<Image>& images) {
  std::vector<float> samples;
  for (const Image& img : images) {
    for (std::size_t i = 0; i < depth.mask.size(); ++i) {
      if (!depth.mask[i]) continue;
      for (int ch = 0; ch < img.channels; ++ch) samples.push_back(img.data[i * img.channels + ch]);
    }
  }
  if (samples.empty()) return 1.0;
  const std::size_t rank = static_cast<std::size_t>(0.99 * static_cast<double>(samples.size() - 1));
  std::nth_element(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(rank), samples.end());
  const double p99 = samples[rank];
  if (!(p99 > 0.0)) return 1.0;
  const double exposure = 1.0 / p99;
  for (Image& img : images) {
    for (float& v : img.data) v = static_cast<float>(v * exposure);
  }
  return exposure;
}

}  // namespace

RenderedImages render_scene(const DepthMap& depth, const NormalMap& normals,
                            const Grid<Material>& materials, const LightRig& rig,
                            const CameraIntrinsics& k) {
  check_scene(depth, normals, materials, rig, k);
  const int channels = channel_count(depth, materials);
  RenderedImages out;
  out.images.assign(rig.size(), Image(depth.width(), depth.height(), channels));
  const int h = depth.height();
  const int w = depth.width();
#pragma omp parallel for schedule(dynamic, 4)
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) shade(depth, normals, materials, rig, k, row, col, out.images);
  }
  out.exposure = normalize_exposure(depth, out.images);
  return out;
}

namespace reference {

RenderedImages render_scene(const DepthMap& depth, const NormalMap& normals,
                            const Grid<Material>& materials, const LightRig& rig,
                            const CameraIntrinsics& k) {
  check_scene(depth, normals, materials, rig, k);
  const int channels = channel_count(depth, materials);
  RenderedImages out;
  out.images.assign(rig.size(), Image(depth.width(), depth.height(), channels));
  for (int row = 0; row < depth.height(); ++row) {
    for (int col = 0; col < depth.width(); ++col) {
      shade(depth, normals, materials, rig, k, row, col, out.images);
    }
  }
  out.exposure = normalize_exposure(depth, out.images);
  return out;
}

}  // namespace reference

void augment_samples(std::span<Spectrum> intensities, const GIAugmentation& aug, Rng& rng) {
  if (!aug.enabled()) return;
  const double ambient = aug.ambient_max > 0.0 ? uniform(rng, 0.0, aug.ambient_max) : 0.0;
  for (Spectrum& s : intensities) {
    if (aug.cast_shadow_prob > 0.0 && bernoulli(rng, aug.cast_shadow_prob)) {
      const double factor =
          aug.shadow_factor_max > 0.0 ? uniform(rng, 0.0, aug.shadow_factor_max) : 0.0;
      s *= factor;
    }
    s += ambient;
    if (aug.self_reflection_max > 0.0) s += uniform(rng, 0.0, aug.self_reflection_max);
    if (aug.noise_sigma > 0.0) {
      for (Eigen::Index ch = 0; ch < s.size(); ++ch) s[ch] += gaussian(rng, 0.0, aug.noise_sigma);
    }
    s = s.max(0.0);
  }
}

}  // namespace nfps
