#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "nfps/io.hpp"
#include "support.hpp"

using namespace nfps;

namespace {

std::string f32_bytes(std::initializer_list<float> values, bool big_endian = false) {
  std::string out;
  for (float v : values) {
    auto bits = std::bit_cast<std::uint32_t>(v);
    char b[4];
    for (int k = 0; k < 4; ++k) b[k] = static_cast<char>((bits >> (8 * k)) & 0xff);
    if (big_endian) std::swap(b[0], b[3]), std::swap(b[1], b[2]);
    out.append(b, 4);
  }
  return out;
}

Image parse(const std::string& s) {
  std::istringstream in(s);
  return parse_pfm(in);
}

void write_file(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("pfm reference example") {
  // Bottom row first on disk.
  const std::string file = "Pf\n4 2\n-1.0\n" + f32_bytes({5, 6, 7, 8, 1, 2, 3, 4});
  const Image img = parse(file);
  CHECK(img.width == 4);
  CHECK(img.height == 2);
  CHECK(img.channels == 1);
  CHECK(img.at(0, 0) == 1.0f);
  CHECK(img.at(0, 3) == 4.0f);
  CHECK(img.at(1, 0) == 5.0f);

  std::ostringstream out;
  write_pfm(out, img);
  CHECK(out.str() == file);

  const Image big = parse("Pf\n4 2\n1.0\n" + f32_bytes({5, 6, 7, 8, 1, 2, 3, 4}, true));
  CHECK(big == img);
}

TEST_CASE("pfm round trip for colour images") {
  Image img(5, 3, 3);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = 0.25f * static_cast<float>(i) - 3.0f;
  test::TempDir dir("pfm");
  write_pfm(dir / "a.pfm", img);
  CHECK(read_pfm(dir / "a.pfm") == img);
}

TEST_CASE("malformed pfm files are parse errors") {
  CHECK_THROWS_KIND(parse("P6\n4 2\n-1.0\n" + f32_bytes({0, 0, 0, 0, 0, 0, 0, 0})),
                    ErrorKind::parse);
  CHECK_THROWS_KIND(parse("Pf\n4 2\n-1.0\n" + f32_bytes({1, 2, 3})), ErrorKind::parse);
  CHECK_THROWS_KIND(parse("Pf\n4 2\n-1.0\n" + f32_bytes({1, 2, 3, 4, 5, 6, 7, 8, 9})),
                    ErrorKind::parse);
  CHECK_THROWS_KIND(parse("Pf\n-4 2\n-1.0\n"), ErrorKind::parse);
  CHECK_THROWS_KIND(parse("Pf\n4 2\n0\n" + f32_bytes({0, 0, 0, 0, 0, 0, 0, 0})), ErrorKind::parse);
  CHECK_THROWS_KIND(read_pfm("/nonexistent/nfps.pfm"), ErrorKind::io);
}

TEST_CASE("depth, normal and mask files round trip") {
  test::TempDir dir("maps");
  Mask mask(6, 4, 0);
  DepthMap depth(6, 4);
  NormalMap normals(6, 4);
  for (int row = 0; row < 4; ++row) {
    for (int col = 0; col < 6; ++col) {
      if ((row + col) % 3 == 0) continue;
      mask(row, col) = 1;
      depth.mask(row, col) = 1;
      depth.values(row, col) = 0.1 + 0.001 * (row * 6 + col);
      normals.mask(row, col) = 1;
      normals.vectors(row, col) = Vec3(0.1 * col, -0.1 * row, -1.0).normalized();
    }
  }
  write_mask(dir / "mask.pfm", mask);
  write_depth(dir / "depth.pfm", depth);
  write_normals(dir / "normals.pfm", normals);

  const Mask m = read_mask(dir / "mask.pfm");
  CHECK(m == mask);
  const DepthMap d = read_depth(dir / "depth.pfm", m);
  CHECK(d.mask == mask);
  const NormalMap n = read_normals(dir / "normals.pfm", m);
  CHECK(n.mask == mask);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    CHECK(d.values[i] == doctest::Approx(depth.values[i]).epsilon(1e-7));
    CHECK((n.vectors[i] - normals.vectors[i]).norm() < 1e-6);
  }

  Mask wider = mask;
  wider(0, 0) = 1;
  CHECK_THROWS_KIND(read_depth(dir / "depth.pfm", wider), ErrorKind::invalid_depth);
  CHECK_THROWS_KIND(read_mask(dir / "depth.pfm"), ErrorKind::parse);
  CHECK_THROWS_KIND(read_depth(dir / "depth.pfm", Mask(3, 3, 1)), ErrorKind::dimension);
}

TEST_CASE("rig files round trip and report bad lines") {
  const LightRig rig = make_ring_rig(4, 0.05, 2.0, 1.5);
  std::ostringstream out;
  write_rig(out, rig);
  std::istringstream in(out.str());
  const LightRig back = parse_rig(in);
  REQUIRE(back.size() == 4);
  for (std::size_t m = 0; m < 4; ++m) {
    CHECK(back[m].position == rig[m].position);
    CHECK((back[m].principal_dir - rig[m].principal_dir).norm() < 1e-15);
    CHECK(back[m].brightness == 2.0);
    CHECK(back[m].mu == 1.5);
  }

  std::istringstream commented(
      "# three lights\n\nlight\n  position 0 0 0\n  dir 0 0 2\n  phi 1\n  mu 0\n"
      "light\n  position 0.1 0 0 # trailing\n  dir 0 0 1\n  phi 1\n  mu 1\n"
      "light\n  position 0 0.1 0\n  dir 0 0 1\n  phi 1\n  mu 1\n");
  const LightRig three = parse_rig(commented);
  REQUIRE(three.size() == 3);
  CHECK(three[0].principal_dir == Vec3(0, 0, 1));
  CHECK(three[1].mu == 1.0);

  auto fails = [](const std::string& text) {
    std::istringstream s(text);
    bool thrown = false;
    std::string what;
    try {
      parse_rig(s);
    } catch (const Error& e) {
      thrown = e.kind() == ErrorKind::parse || e.kind() == ErrorKind::degenerate_light ||
               e.kind() == ErrorKind::invalid_config;
      what = e.what();
    }
    return thrown ? what : std::string();
  };
  CHECK(fails("light\n  position 0 0 0\n  dir 0 0 1\n  phi 1\n").find("line 1") !=
        std::string::npos);
  CHECK(fails("light\n  position 0 0\n  dir 0 0 1\n  phi 1\n  mu 1\n").find("line 2") !=
        std::string::npos);
  CHECK(fails("light\n  colour 1\n").find("line 2") != std::string::npos);
  CHECK(!fails("position 0 0 0\n").empty());
  CHECK(!fails("light\n  position 0 0 0\n  dir 0 0 0\n  phi 1\n  mu 1\n").empty());
  CHECK(!fails("").empty());
}

TEST_CASE("checkpoints round trip") {
  NetShape shape;
  shape.map_size = 8;
  shape.hidden = 16;
  const TinyNet<float> net(shape, 4);
  test::TempDir dir("ckpt");
  write_checkpoint(dir / "c.bin", net);
  const TinyNet<float> back = read_checkpoint(dir / "c.bin");
  CHECK(back.shape() == shape);
  CHECK(back.parameters() == net.parameters());

  std::ifstream in(dir / "c.bin", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(bytes.substr(0, 8) == "NFPSNET1");
  CHECK(bytes.size() == 8 + 4 + 7 * 4 + 4 * net.parameter_count());

  write_file(dir / "short.bin", bytes.substr(0, bytes.size() - 1));
  CHECK_THROWS_KIND(read_checkpoint(dir / "short.bin"), ErrorKind::parse);
  write_file(dir / "long.bin", bytes + "x");
  CHECK_THROWS_KIND(read_checkpoint(dir / "long.bin"), ErrorKind::parse);
  write_file(dir / "magic.bin", "NFPSNET2" + bytes.substr(8));
  CHECK_THROWS_KIND(read_checkpoint(dir / "magic.bin"), ErrorKind::parse);
  CHECK_THROWS_KIND(read_checkpoint(dir / "missing.bin"), ErrorKind::io);
}
