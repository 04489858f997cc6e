#include "nfps/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "binary_io.hpp"

namespace nfps {

namespace {

constexpr char kDatasetMagic[8] = {'N', 'F', 'P', 'S', 'D', 'S', '1', '\0'};
constexpr std::uint64_t kCandidateChunk = 2048;

void check_interval(const Interval& i, const char* name) {
  if (!(i.lo <= i.hi)) throw Error(ErrorKind::invalid_config, std::string(name) + ": lo > hi");
}

double draw(Rng& rng, const Interval& i) { return i.lo == i.hi ? i.lo : uniform(rng, i.lo, i.hi); }

Vec3 draw_front_facing_normal(const Vec3& point, Rng& rng) {
  Vec3 n;
  do {
    n = Vec3(gaussian(rng, 0.0, 1.0), gaussian(rng, 0.0, 1.0), gaussian(rng, 0.0, 1.0));
  } while (!(n.norm() > 1e-12));
  n.normalize();
  return face_camera(n, point);
}

Material draw_material(const MaterialRanges& r, Rng& rng) {
  Material m;
  const auto pick = std::uniform_int_distribution<std::size_t>(0, r.models.size() - 1)(rng);
  m.model = r.models[pick];
  m.albedo = Spectrum(r.channels);
  for (int ch = 0; ch < r.channels; ++ch) m.albedo[ch] = draw(rng, r.albedo);
  m.specular_strength = draw(rng, r.specular_strength);
  m.shininess = draw(rng, r.shininess);
  m.metallic_mix = draw(rng, r.metallic_mix);
  return m;
}

}  // namespace

void MaterialRanges::validate() const {
  if (models.empty()) throw Error(ErrorKind::invalid_config, "material ranges: no models");
  if (channels != 1 && channels != 3) {
    throw Error(ErrorKind::invalid_config, "material ranges: channels must be 1 or 3");
  }
  check_interval(albedo, "albedo");
  check_interval(specular_strength, "specular_strength");
  check_interval(shininess, "shininess");
  check_interval(metallic_mix, "metallic_mix");
  if (albedo.lo < 0.0 || albedo.hi > 1.0) {
    throw Error(ErrorKind::invalid_config, "albedo range must lie in [0, 1]");
  }
  if (!(shininess.lo > 0.0)) throw Error(ErrorKind::invalid_config, "shininess must be > 0");
  if (specular_strength.lo < 0.0) {
    throw Error(ErrorKind::invalid_config, "specular_strength must be >= 0");
  }
  if (metallic_mix.lo < 0.0 || metallic_mix.hi > 1.0) {
    throw Error(ErrorKind::invalid_config, "metallic_mix range must lie in [0, 1]");
  }
}

void DatagenConfig::validate() const {
  rig.validate();
  intrinsics.validate();
  materials.validate();
  aug.validate();
  if (!(depth_range.near > 0.0) || !(depth_range.far > depth_range.near)) {
    throw Error(ErrorKind::invalid_config, "depth_range: need 0 < near < far");
  }
  if (!(depth_sigma >= 0.0)) throw Error(ErrorKind::invalid_config, "depth_sigma must be >= 0");
  if (count < 1) throw Error(ErrorKind::invalid_config, "count must be >= 1");
  if (map_size < 4) throw Error(ErrorKind::invalid_config, "map_size must be >= 4");
  if (max_retries < 1) throw Error(ErrorKind::invalid_config, "max_retries must be >= 1");
}

DatagenConfig DatagenConfig::defaults() {
  DatagenConfig c;
  c.rig = make_ring_rig(15, 0.065, 1.0, 1.0);
  c.intrinsics = CameraIntrinsics::centered(128, 128, 160.0);
  c.aug.cast_shadow_prob = 0.05;
  c.aug.ambient_max = 0.02;
  c.aug.self_reflection_max = 0.02;
  c.aug.noise_sigma = 0.005;
  return c;
}

std::optional<SampledExample> try_sample_example(const DatagenConfig& config, Rng& rng) {
  SampledExample out;
  out.frustum = sample_frustum(config.intrinsics, config.depth_range, rng);
  const Vec3 normal = draw_front_facing_normal(out.frustum.point, rng);
  out.material = draw_material(config.materials, rng);

  std::vector<Spectrum> intensities =
      render_pixel({out.frustum.point, normal, out.material}, config.rig);
  if (config.aug.enabled()) {
    double peak = 0.0;
    for (const Spectrum& s : intensities) peak = std::max(peak, gray(s));
    if (peak > 0.0) {
      for (Spectrum& s : intensities) s /= peak;
    }
    augment_samples(intensities, config.aug, rng);
  }

  double dz = 0.0;
  if (config.depth_sigma > 0.0) {
    do {
      dz = gaussian(rng, 0.0, config.depth_sigma);
    } while (!(out.frustum.z + dz > 0.0));
  }
  out.depth_offset = dz;
  const Vec3 assumed = backproject(out.frustum.pixel, out.frustum.z + dz, config.intrinsics);
  PixelObservation obs =
      observe_near_field(intensities, assumed, config.rig, config.map_size, true);
  if (!obs.valid) return std::nullopt;
  out.example.map = std::move(obs.map);
  out.example.label = normal;
  return out;
}

SampledExample sample_example(const DatagenConfig& config, Rng& rng) {
  for (int attempt = 0; attempt < config.max_retries; ++attempt) {
    if (auto s = try_sample_example(config, rng)) return std::move(*s);
  }
  throw Error(ErrorKind::insufficient_data,
              "sample_example: no valid map after " + std::to_string(config.max_retries) +
                  " attempts");
}

PackedExample pack(const TrainingExample& e) {
  PackedExample p;
  for (std::size_t i = 0; i < e.map.grid.size(); ++i) {
    const float v = e.map.grid[i];
    if (v != 0.0f || std::signbit(v)) p.cells.emplace_back(static_cast<std::uint32_t>(i), v);
  }
  p.view_x = e.map.view_x;
  p.view_y = e.map.view_y;
  for (int k = 0; k < 3; ++k) p.label[k] = static_cast<float>(e.label[k]);
  return p;
}

ObservationMap Dataset::map(std::size_t i) const {
  const PackedExample& p = examples.at(i);
  ObservationMap m;
  m.size = map_size;
  m.channels = channels;
  m.grid.assign(static_cast<std::size_t>(map_size) * map_size * channels, 0.0f);
  float peak = 0.0f;
  for (const auto& [at, v] : p.cells) {
    m.grid[at] = v;
    peak = std::max(peak, v);
  }
  m.view_x = p.view_x;
  m.view_y = p.view_y;
  m.scale = 1.0;
  m.valid = peak > 0.0f;
  return m;
}

Vec3 Dataset::label(std::size_t i) const {
  const PackedExample& p = examples.at(i);
  return {p.label[0], p.label[1], p.label[2]};
}

namespace {

// Runs candidates [first, first + n) and hands the valid ones, in order, to
// `sink` until it returns false.
template <typename Sink>
void generate_chunked(const DatagenConfig& config, Sink&& sink) {
  config.validate();
  std::uint64_t produced = 0;
  std::uint64_t first = 0;
  std::uint64_t barren_chunks = 0;
  while (produced < config.count) {
    std::vector<std::optional<PackedExample>> chunk(kCandidateChunk);
    const auto n = static_cast<std::int64_t>(kCandidateChunk);
#pragma omp parallel for schedule(dynamic, 16)
    for (std::int64_t c = 0; c < n; ++c) {
      Rng rng = make_rng(config.seed, first + static_cast<std::uint64_t>(c));
      if (auto s = try_sample_example(config, rng)) chunk[c] = pack(s->example);
    }
    std::uint64_t got = 0;
    for (auto& e : chunk) {
      if (!e) continue;
      ++got;
      sink(std::move(*e));
      if (++produced == config.count) break;
    }
    barren_chunks = got == 0 ? barren_chunks + 1 : 0;
    if (barren_chunks > 8) {
      throw Error(ErrorKind::insufficient_data,
                  "generate: configuration produces no valid observation maps");
    }
    first += kCandidateChunk;
  }
}

void write_header(std::ostream& out, int map_size, int channels, std::uint64_t count) {
  out.write(kDatasetMagic, sizeof(kDatasetMagic));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(map_size));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(channels));
  detail::put_le<std::uint64_t>(out, count);
}

void write_example(std::ostream& out, const PackedExample& p, std::size_t grid_size,
                   std::vector<float>& scratch) {
  scratch.assign(grid_size, 0.0f);
  for (const auto& [at, v] : p.cells) scratch[at] = v;
  for (float v : scratch) detail::put_f32(out, v);
  detail::put_f32(out, p.view_x);
  detail::put_f32(out, p.view_y);
  for (float v : p.label) detail::put_f32(out, v);
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace

Dataset generate_examples(const DatagenConfig& config) {
  Dataset data;
  data.map_size = config.map_size;
  data.channels = config.materials.channels;
  data.examples.reserve(config.count);
  generate_chunked(config, [&](PackedExample&& e) { data.examples.push_back(std::move(e)); });
  return data;
}

void generate_dataset(const DatagenConfig& config, const std::filesystem::path& path) {
  std::ofstream out = open_for_write(path);
  write_header(out, config.map_size, config.materials.channels, config.count);
  const std::size_t grid_size =
      static_cast<std::size_t>(config.map_size) * config.map_size * config.materials.channels;
  std::vector<float> scratch;
  generate_chunked(config, [&](PackedExample&& e) { write_example(out, e, grid_size, scratch); });
  if (!out.flush()) throw Error(ErrorKind::io, "write failed: " + path.string());
}

void write_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out = open_for_write(path);
  write_header(out, data.map_size, data.channels, data.examples.size());
  const std::size_t grid_size =
      static_cast<std::size_t>(data.map_size) * data.map_size * data.channels;
  std::vector<float> scratch;
  for (const PackedExample& e : data.examples) write_example(out, e, grid_size, scratch);
  if (!out.flush()) throw Error(ErrorKind::io, "write failed: " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open dataset " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kDatasetMagic, sizeof(magic)) != 0) {
    throw Error(ErrorKind::parse, path.string() + ": not a dataset file (bad magic)");
  }
  Dataset data;
  data.map_size = static_cast<int>(detail::get_le<std::uint32_t>(in, "map size"));
  data.channels = static_cast<int>(detail::get_le<std::uint32_t>(in, "channels"));
  const auto count = detail::get_le<std::uint64_t>(in, "count");
  if (data.map_size <= 0 || data.map_size > 4096 || (data.channels != 1 && data.channels != 3)) {
    throw Error(ErrorKind::parse, path.string() + ": implausible dataset header");
  }
  const std::size_t grid_size =
      static_cast<std::size_t>(data.map_size) * data.map_size * data.channels;

  const auto header_end = in.tellg();
  in.seekg(0, std::ios::end);
  const auto payload = static_cast<std::uint64_t>(in.tellg() - header_end);
  in.seekg(header_end);
  const std::uint64_t record = (grid_size + 5) * sizeof(float);
  if (payload != count * record) {
    throw Error(ErrorKind::parse, path.string() + ": payload is " + std::to_string(payload) +
                                      " bytes, header implies " +
                                      std::to_string(count * record));
  }

  data.examples.resize(count);
  std::vector<char> raw(record);
  for (std::uint64_t e = 0; e < count; ++e) {
    in.read(raw.data(), static_cast<std::streamsize>(record));
    auto f32 = [&](std::size_t k) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[4 * k + b])) << (8 * b);
      }
      return std::bit_cast<float>(bits);
    };
    PackedExample& p = data.examples[e];
    for (std::size_t i = 0; i < grid_size; ++i) {
      const float v = f32(i);
      if (v != 0.0f || std::signbit(v)) p.cells.emplace_back(static_cast<std::uint32_t>(i), v);
    }
    p.view_x = f32(grid_size);
    p.view_y = f32(grid_size + 1);
    for (int k = 0; k < 3; ++k) p.label[k] = f32(grid_size + 2 + k);
  }
  if (!in) throw Error(ErrorKind::parse, path.string() + ": truncated dataset");
  return data;
}

}  // namespace nfps
