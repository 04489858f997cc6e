#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "nfps/geometry.hpp"
#include "nfps/lighting.hpp"
#include "nfps/tinynet.hpp"

namespace nfps {

// PFM: "PF" (3 channels) or "Pf" (1 channel), "W H", a scale whose sign
// gives the byte order (negative = little-endian), then f32 rows from the
// bottom of the image to the top. Writers always emit little-endian.
Image read_pfm(const std::filesystem::path& path);
Image parse_pfm(std::istream& in);
void write_pfm(const std::filesystem::path& path, const Image& image);
void write_pfm(std::ostream& out, const Image& image);

/// Depth as 1-channel PFM (0 outside the mask); the mask is stored separately.
void write_depth(const std::filesystem::path& path, const DepthMap& depth);
DepthMap read_depth(const std::filesystem::path& path, const Mask& mask);

/// Normals as 3-channel PFM in [-1, 1] (0 outside the mask).
void write_normals(const std::filesystem::path& path, const NormalMap& normals);
NormalMap read_normals(const std::filesystem::path& path, const Mask& mask);

/// Mask as 1-channel PFM holding 0/1.
void write_mask(const std::filesystem::path& path, const Mask& mask);
Mask read_mask(const std::filesystem::path& path);

Image to_image(const Grid<double>& values);

// Light-rig text file:
//
//   # comment
//   light
//     position 0.065 0 0
//     dir 0 0 1
//     phi 1.0
//     mu 1.0
//   light
//     ...
//
// Every block needs all four keys; blank lines and '#' comments are ignored.
LightRig parse_rig(std::istream& in);
LightRig read_rig(const std::filesystem::path& path);
void write_rig(std::ostream& out, const LightRig& rig);
void write_rig(const std::filesystem::path& path, const LightRig& rig);

// Checkpoint: "NFPSNET1", u32 n, n u32 architecture entries
// [map_size, channels, conv1, conv2, conv3, hidden, 3], then the f32
// parameters in TinyNet order. Little-endian.
void write_checkpoint(const std::filesystem::path& path, const TinyNet<float>& net);
TinyNet<float> read_checkpoint(const std::filesystem::path& path);

}  // namespace nfps
