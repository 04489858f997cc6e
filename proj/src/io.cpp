#include "nfps/io.hpp"

#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <optional>
#include <sstream>

#include "binary_io.hpp"

namespace nfps {

namespace {

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string() + " for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot open " + path.string() + " for writing");
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw Error(ErrorKind::io, "write failed: " + path.string());
}

template <typename Fn>
auto with_path(const std::filesystem::path& path, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

// Cursor over the PFM header that reports byte offsets.
struct HeaderReader {
  const std::string& buf;
  std::size_t pos = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorKind::parse, "PFM: " + msg + " at byte " + std::to_string(pos));
  }
  void skip_space() {
    while (pos < buf.size() && std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
  }
  std::string token() {
    skip_space();
    const std::size_t start = pos;
    while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
    if (start == pos) fail("unexpected end of header");
    return buf.substr(start, pos - start);
  }
  template <typename T>
  T number(const char* what) {
    skip_space();
    const std::size_t start = pos;
    const std::string tok = token();
    T value{};
    const auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    if (ec != std::errc() || end != tok.data() + tok.size()) {
      pos = start;
      fail(std::string("malformed ") + what + " '" + tok + "'");
    }
    return value;
  }
};

}  // namespace

Image parse_pfm(std::istream& in) {
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  HeaderReader h{buf};
  const std::string magic = h.token();
  int channels = 0;
  if (magic == "PF") {
    channels = 3;
  } else if (magic == "Pf") {
    channels = 1;
  } else {
    h.pos = 0;
    h.fail("bad magic '" + magic.substr(0, 8) + "'");
  }
  const int width = h.number<int>("width");
  const int height = h.number<int>("height");
  if (width <= 0 || height <= 0) h.fail("non-positive image size");
  const double scale = h.number<double>("scale");
  if (scale == 0.0 || !std::isfinite(scale)) h.fail("scale must be finite and non-zero");
  if (h.pos >= buf.size() || !std::isspace(static_cast<unsigned char>(buf[h.pos]))) {
    h.fail("missing newline after scale");
  }
  ++h.pos;

  const bool little = scale < 0.0;
  const std::size_t values = static_cast<std::size_t>(width) * height * channels;
  const std::size_t available = buf.size() - h.pos;
  if (available < values * 4) {
    throw Error(ErrorKind::parse, "PFM: truncated payload at byte " + std::to_string(buf.size()) +
                                      " (expected " + std::to_string(values * 4) +
                                      " bytes from byte " + std::to_string(h.pos) + ")");
  }
  if (available > values * 4) {
    throw Error(ErrorKind::parse, "PFM: " + std::to_string(available - values * 4) +
                                      " trailing bytes after payload at byte " +
                                      std::to_string(h.pos + values * 4));
  }

  Image img(width, height, channels);
  const auto* bytes = reinterpret_cast<const unsigned char*>(buf.data() + h.pos);
  const std::size_t row_values = static_cast<std::size_t>(width) * channels;
  for (int file_row = 0; file_row < height; ++file_row) {
    const int row = height - 1 - file_row;
    for (std::size_t k = 0; k < row_values; ++k) {
      const unsigned char* b = bytes + 4 * (file_row * row_values + k);
      std::uint32_t bits = 0;
      for (int i = 0; i < 4; ++i) {
        const int shift = little ? 8 * i : 8 * (3 - i);
        bits |= static_cast<std::uint32_t>(b[i]) << shift;
      }
      img.data[static_cast<std::size_t>(row) * row_values + k] = std::bit_cast<float>(bits);
    }
  }
  return img;
}

Image read_pfm(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  return with_path(path, [&] { return parse_pfm(in); });
}

void write_pfm(std::ostream& out, const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw Error(ErrorKind::dimension, "PFM supports 1 or 3 channels, got " +
                                          std::to_string(image.channels));
  }
  if (image.data.size() != static_cast<std::size_t>(image.width) * image.height * image.channels) {
    throw Error(ErrorKind::dimension, "PFM: image data does not match its size");
  }
  out << (image.channels == 3 ? "PF" : "Pf") << '\n'
      << image.width << ' ' << image.height << '\n'
      << "-1.0\n";
  const std::size_t row_values = static_cast<std::size_t>(image.width) * image.channels;
  for (int row = image.height - 1; row >= 0; --row) {
    for (std::size_t k = 0; k < row_values; ++k) {
      detail::put_f32(out, image.data[static_cast<std::size_t>(row) * row_values + k]);
    }
  }
}

void write_pfm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out = open_out(path);
  write_pfm(out, image);
  finish(out, path);
}

Image to_image(const Grid<double>& values) {
  Image img(values.width(), values.height(), 1);
  for (std::size_t i = 0; i < values.size(); ++i) img.data[i] = static_cast<float>(values[i]);
  return img;
}

void write_depth(const std::filesystem::path& path, const DepthMap& depth) {
  Image img(depth.width(), depth.height(), 1);
  for (std::size_t i = 0; i < depth.mask.size(); ++i) {
    if (depth.mask[i]) img.data[i] = static_cast<float>(depth.values[i]);
  }
  write_pfm(path, img);
}

DepthMap read_depth(const std::filesystem::path& path, const Mask& mask) {
  const Image img = read_pfm(path);
  if (img.channels != 1 || img.width != mask.width() || img.height != mask.height()) {
    throw Error(ErrorKind::dimension, path.string() + ": depth must be a 1-channel " +
                                          std::to_string(mask.width()) + "x" +
                                          std::to_string(mask.height()) + " PFM");
  }
  DepthMap depth(img.width, img.height);
  depth.mask = mask;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const double z = img.data[i];
    if (!(z > 0.0) || !std::isfinite(z)) {
      throw Error(ErrorKind::invalid_depth,
                  path.string() + ": non-positive depth at pixel (" +
                      std::to_string(i / mask.width()) + ", " + std::to_string(i % mask.width()) +
                      ")");
    }
    depth.values[i] = z;
  }
  return depth;
}

void write_normals(const std::filesystem::path& path, const NormalMap& normals) {
  Image img(normals.width(), normals.height(), 3);
  for (std::size_t i = 0; i < normals.mask.size(); ++i) {
    if (!normals.mask[i]) continue;
    for (int c = 0; c < 3; ++c) img.data[3 * i + c] = static_cast<float>(normals.vectors[i][c]);
  }
  write_pfm(path, img);
}

NormalMap read_normals(const std::filesystem::path& path, const Mask& mask) {
  const Image img = read_pfm(path);
  if (img.channels != 3 || img.width != mask.width() || img.height != mask.height()) {
    throw Error(ErrorKind::dimension, path.string() + ": normals must be a 3-channel " +
                                          std::to_string(mask.width()) + "x" +
                                          std::to_string(mask.height()) + " PFM");
  }
  NormalMap normals(img.width, img.height);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const Vec3 n(img.data[3 * i], img.data[3 * i + 1], img.data[3 * i + 2]);
    const double len = n.norm();
    if (!(len > 0.5) || !std::isfinite(len)) continue;  // pixel not reconstructed
    normals.vectors[i] = n / len;
    normals.mask[i] = 1;
  }
  return normals;
}

void write_mask(const std::filesystem::path& path, const Mask& mask) {
  Image img(mask.width(), mask.height(), 1);
  for (std::size_t i = 0; i < mask.size(); ++i) img.data[i] = mask[i] ? 1.0f : 0.0f;
  write_pfm(path, img);
}

Mask read_mask(const std::filesystem::path& path) {
  const Image img = read_pfm(path);
  if (img.channels != 1) {
    throw Error(ErrorKind::dimension, path.string() + ": mask must be a 1-channel PFM");
  }
  Mask mask(img.width, img.height, 0);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const float v = img.data[i];
    if (v != 0.0f && v != 1.0f) {
      throw Error(ErrorKind::parse, path.string() + ": mask values must be 0 or 1");
    }
    mask[i] = v == 1.0f ? 1 : 0;
  }
  return mask;
}

LightRig parse_rig(std::istream& in) {
  LightRig rig;
  struct Pending {
    int line = 0;
    std::optional<Vec3> position, dir;
    std::optional<double> phi, mu;
  };
  std::optional<Pending> cur;

  auto close = [&]() {
    if (!cur) return;
    const char* missing = !cur->position ? "position"
                          : !cur->dir    ? "dir"
                          : !cur->phi    ? "phi"
                          : !cur->mu     ? "mu"
                                         : nullptr;
    if (missing != nullptr) {
      throw Error(ErrorKind::parse, "rig: light starting at line " + std::to_string(cur->line) +
                                        " has no '" + missing + "'");
    }
    PointLight light;
    light.position = *cur->position;
    light.principal_dir = cur->dir->normalized();
    light.brightness = *cur->phi;
    light.mu = *cur->mu;
    rig.lights.push_back(light);
    cur.reset();
  };

  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream words(line);
    std::string key;
    if (!(words >> key)) continue;
    auto fail = [&](const std::string& msg) {
      throw Error(ErrorKind::parse, "rig: line " + std::to_string(number) + ": " + msg);
    };
    auto scalars = [&](int n) {
      std::vector<double> v(static_cast<std::size_t>(n));
      for (double& x : v) {
        if (!(words >> x)) fail("'" + key + "' needs " + std::to_string(n) + " numbers");
      }
      std::string extra;
      if (words >> extra) fail("unexpected '" + extra + "'");
      return v;
    };
    if (key == "light") {
      close();
      cur.emplace();
      cur->line = number;
      scalars(0);
      continue;
    }
    if (!cur) fail("'" + key + "' outside a light block");
    if (key == "position" || key == "dir") {
      const auto v = scalars(3);
      (key == "position" ? cur->position : cur->dir) = Vec3(v[0], v[1], v[2]);
    } else if (key == "phi" || key == "mu") {
      const auto v = scalars(1);
      (key == "phi" ? cur->phi : cur->mu) = v[0];
    } else {
      fail("unknown key '" + key + "'");
    }
  }
  close();
  rig.validate();
  return rig;
}

LightRig read_rig(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  return with_path(path, [&] { return parse_rig(in); });
}

void write_rig(std::ostream& out, const LightRig& rig) {
  out << std::setprecision(17);
  for (const PointLight& l : rig.lights) {
    out << "light\n"
        << "  position " << l.position.x() << ' ' << l.position.y() << ' ' << l.position.z()
        << '\n'
        << "  dir " << l.principal_dir.x() << ' ' << l.principal_dir.y() << ' '
        << l.principal_dir.z() << '\n'
        << "  phi " << l.brightness << '\n'
        << "  mu " << l.mu << '\n';
  }
}

void write_rig(const std::filesystem::path& path, const LightRig& rig) {
  std::ofstream out = open_out(path);
  write_rig(out, rig);
  finish(out, path);
}

namespace {
constexpr char kCheckpointMagic[8] = {'N', 'F', 'P', 'S', 'N', 'E', 'T', '1'};
}

void write_checkpoint(const std::filesystem::path& path, const TinyNet<float>& net) {
  std::ofstream out = open_out(path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const NetShape& s = net.shape();
  const std::uint32_t arch[] = {static_cast<std::uint32_t>(s.map_size),
                                static_cast<std::uint32_t>(s.channels),
                                static_cast<std::uint32_t>(s.conv1),
                                static_cast<std::uint32_t>(s.conv2),
                                static_cast<std::uint32_t>(s.conv3),
                                static_cast<std::uint32_t>(s.hidden),
                                3u};
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(std::size(arch)));
  for (std::uint32_t a : arch) detail::put_le(out, a);
  for (Eigen::Index i = 0; i < net.parameters().size(); ++i) {
    detail::put_f32(out, net.parameters()[i]);
  }
  finish(out, path);
}

TinyNet<float> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  return with_path(path, [&] {
    char magic[8];
    if (!in.read(magic, sizeof(magic)) ||
        std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
      throw Error(ErrorKind::parse, "not a checkpoint (bad magic)");
    }
    const auto n = detail::get_le<std::uint32_t>(in, "architecture length");
    if (n != 7) throw Error(ErrorKind::parse, "unsupported architecture descriptor");
    std::uint32_t arch[7];
    for (auto& a : arch) a = detail::get_le<std::uint32_t>(in, "architecture");
    if (arch[6] != 3) throw Error(ErrorKind::parse, "network output must be 3-dimensional");
    NetShape shape;
    shape.map_size = static_cast<int>(arch[0]);
    shape.channels = static_cast<int>(arch[1]);
    shape.conv1 = static_cast<int>(arch[2]);
    shape.conv2 = static_cast<int>(arch[3]);
    shape.conv3 = static_cast<int>(arch[4]);
    shape.hidden = static_cast<int>(arch[5]);
    try {
      shape.validate();
    } catch (const Error& e) {
      throw Error(ErrorKind::parse, std::string("invalid architecture: ") + e.what());
    }
    TinyNet<float> net(shape, 0);
    for (Eigen::Index i = 0; i < net.parameters().size(); ++i) {
      net.parameters()[i] = detail::get_f32(in, "parameters");
    }
    if (in.peek() != std::char_traits<char>::eof()) {
      throw Error(ErrorKind::parse, "trailing bytes after parameters");
    }
    return net;
  });
}

}  // namespace nfps
