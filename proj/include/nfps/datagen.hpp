#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "nfps/geometry.hpp"
#include "nfps/lighting.hpp"
#include "nfps/obsmap.hpp"
#include "nfps/reflectance.hpp"

namespace nfps {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Sampling box for materials. A model is picked uniformly from `models`,
/// then every parameter uniformly from its interval.
struct MaterialRanges {
  std::vector<BrdfModel> models = {BrdfModel::lambertian, BrdfModel::blinn_phong};
  Interval albedo{0.2, 1.0};
  Interval specular_strength{0.0, 1.0};
  Interval shininess{5.0, 100.0};
  Interval metallic_mix{0.0, 1.0};
  int channels = 1;

  void validate() const;
};

struct DatagenConfig {
  LightRig rig;
  CameraIntrinsics intrinsics;
  DepthRange depth_range{0.10, 0.20};
  double depth_sigma = 0.004;
  MaterialRanges materials;
  GIAugmentation aug;
  int map_size = 32;
  std::uint64_t count = 1000;
  std::uint64_t seed = 0;
  int max_retries = 64;

  void validate() const;
  /// Ring rig of 15 LEDs at 6.5 cm, 128x128 camera, moderate augmentation.
  static DatagenConfig defaults();
};

struct TrainingExample {
  ObservationMap map;
  Vec3 label = Vec3(0.0, 0.0, -1.0);
};

/// A drawn example with the hidden state that produced it.
struct SampledExample {
  TrainingExample example;
  FrustumSample frustum;
  double depth_offset = 0.0;
  Material material;
};

/// One attempt: returns nothing if the drawn normal/material gives an
/// invalid map.
std::optional<SampledExample> try_sample_example(const DatagenConfig& config, Rng& rng);

/// Retries up to config.max_retries; throws insufficient_data when every
/// attempt is invalid.
SampledExample sample_example(const DatagenConfig& config, Rng& rng);

/// Example maps are mostly empty, so the in-memory dataset keeps only the
/// written cells. Expansion restores the dense grid bit-exactly.
struct PackedExample {
  std::vector<std::pair<std::uint32_t, float>> cells;  // flat grid index, value
  float view_x = 0.0f;
  float view_y = 0.0f;
  float label[3] = {0.0f, 0.0f, 0.0f};
};

PackedExample pack(const TrainingExample& example);

struct Dataset {
  int map_size = 32;
  int channels = 1;
  std::vector<PackedExample> examples;

  std::size_t size() const noexcept { return examples.size(); }
  ObservationMap map(std::size_t i) const;
  Vec3 label(std::size_t i) const;
};

/// Exactly config.count examples; example k comes from the k-th valid
/// candidate, candidate c drawing from make_rng(seed, c). Independent of the
/// OpenMP thread count.
Dataset generate_examples(const DatagenConfig& config);

/// Streams generate_examples straight into a dataset file.
void generate_dataset(const DatagenConfig& config, const std::filesystem::path& path);

// Dataset file: "NFPSDS1\0", u32 D, u32 C, u64 count, then per example
// D*D*C f32 map, f32 view_x, f32 view_y, 3 f32 label. Little-endian.
void write_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace nfps
