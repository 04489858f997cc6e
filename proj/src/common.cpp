#include <algorithm>

#include "nfps/error.hpp"
#include "nfps/grid.hpp"
#include "nfps/random.hpp"

namespace nfps {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_depth: return "invalid depth";
    case ErrorKind::degenerate_point: return "degenerate point";
    case ErrorKind::degenerate_light: return "degenerate light";
    case ErrorKind::invalid_config: return "invalid config";
    case ErrorKind::dimension: return "dimension mismatch";
    case ErrorKind::io: return "i/o error";
    case ErrorKind::parse: return "parse error";
    case ErrorKind::numerical: return "numerical failure";
    case ErrorKind::insufficient_data: return "insufficient data";
    case ErrorKind::degenerate_lighting: return "degenerate lighting";
    case ErrorKind::empty_mask: return "empty mask";
  }
  return "error";
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::size_t count(const Mask& mask) {
  return static_cast<std::size_t>(
      std::count_if(mask.values().begin(), mask.values().end(), [](auto m) { return m != 0; }));
}

Mask mask_and(const Mask& a, const Mask& b) {
  require_same_shape(a, b, "mask_and");
  Mask out(a.width(), a.height(), 0);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] && b[i]) ? 1 : 0;
  return out;
}

Mask erode(const Mask& mask, int radius) {
  Mask out(mask.width(), mask.height(), 0);
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask(r, c)) continue;
      bool keep = true;
      for (int dr = -radius; dr <= radius && keep; ++dr) {
        for (int dc = -radius; dc <= radius; ++dc) {
          if (!mask.contains(r + dr, c + dc) || !mask(r + dr, c + dc)) {
            keep = false;
            break;
          }
        }
      }
      out(r, c) = keep ? 1 : 0;
    }
  }
  return out;
}

}  // namespace nfps
