#include <doctest.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "gramdyn/error.hpp"
#include "gramdyn/point_cloud.hpp"
#include "gramdyn/tensor.hpp"
#include "test_support.hpp"

using namespace gramdyn;
using gramdyn::testing::TempDir;

namespace {

std::vector<unsigned char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}

}  // namespace

TEST_CASE("blob header is byte-exact") {
  TempDir dir;
  write_blob(TensorBlob::f32({2, 3}, {1, 2, 3, 4, 5, -6.5f}), dir / "a.vg4t");
  const auto bytes = slurp(dir / "a.vg4t");
  REQUIRE(bytes.size() == 4 + 2 + 1 + 1 + 2 * 4 + 6 * 4);
  CHECK(std::memcmp(bytes.data(), "VG4T", 4) == 0);
  CHECK(bytes[4] == 1);  // version, little-endian u16
  CHECK(bytes[5] == 0);
  CHECK(bytes[6] == 0);  // f32
  CHECK(bytes[7] == 2);  // ndim
  CHECK(le32(&bytes[8]) == 2);
  CHECK(le32(&bytes[12]) == 3);
  float last;
  std::memcpy(&last, &bytes[16 + 5 * 4], 4);
  CHECK(last == -6.5f);
}

TEST_CASE("blobs round-trip bit for bit") {
  TempDir dir;
  SequentialRng rng(3, 0);
  std::vector<float> values(4 * 5 * 6);
  for (auto& v : values) v = static_cast<float>(rng.normal());
  const auto f = TensorBlob::f32({4, 5, 6}, values);
  write_blob(f, dir / "f.vg4t");
  CHECK(read_blob(dir / "f.vg4t") == f);

  const auto u = TensorBlob::u8({7}, {0, 1, 2, 3, 250, 255, 9});
  write_blob(u, dir / "u.vg4t");
  const auto back = read_blob(dir / "u.vg4t");
  CHECK(back == u);
  CHECK(back.dtype() == DType::U8);
}

TEST_CASE("payload must match dims") {
  CHECK_THROWS_AS(TensorBlob::f32({2, 2}, {1, 2, 3}), ValidationError);
  CHECK_THROWS_AS(TensorBlob::u8({0}, {}), ValidationError);
  CHECK_THROWS_AS(TensorBlob::f32({}, {}), ValidationError);
  CHECK_THROWS_AS(TensorBlob::u8({1}, {0}).as_f32(), SchemaError);
}

TEST_CASE("corrupt blobs are rejected") {
  TempDir dir;
  const auto path = dir / "b.vg4t";
  write_blob(TensorBlob::f32({3}, {1, 2, 3}), path);
  const auto good = slurp(path);

  SUBCASE("missing file") { CHECK_THROWS_AS(read_blob(dir / "nope.vg4t"), NotFound); }
  SUBCASE("bad magic") {
    auto bytes = good;
    bytes[0] = 'X';
    spit(path, bytes);
    CHECK_THROWS_AS(read_blob(path), FormatError);
  }
  SUBCASE("bad version") {
    auto bytes = good;
    bytes[4] = 2;
    spit(path, bytes);
    CHECK_THROWS_AS(read_blob(path), FormatError);
  }
  SUBCASE("bad dtype") {
    auto bytes = good;
    bytes[6] = 7;
    spit(path, bytes);
    CHECK_THROWS_AS(read_blob(path), FormatError);
  }
  SUBCASE("truncated payload") {
    auto bytes = good;
    bytes.pop_back();
    spit(path, bytes);
    CHECK_THROWS_AS(read_blob(path), FormatError);
  }
  SUBCASE("trailing bytes") {
    auto bytes = good;
    bytes.push_back(0);
    spit(path, bytes);
    CHECK_THROWS_AS(read_blob(path), FormatError);
  }
}

TEST_CASE("format_dims") { CHECK(format_dims({2, 99, 64}) == "[2, 99, 64]"); }

// ---- PLY ---------------------------------------------------------------

namespace {

PointCloud mixed_cloud(std::size_t n, std::uint64_t seed) {
  PointCloud pc;
  pc.resize(n);
  SequentialRng rng(seed, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (int a = 0; a < 3; ++a) {
      pc.positions(r, a) = rng.uniform(-5, 5);
      pc.colors(r, a) = static_cast<float>(rng.uniform());
    }
    pc.dynamic_flag[i] = rng.uniform() < 0.3 ? 1 : 0;
  }
  return pc;
}

/// Independent reader: parses the header by hand and decodes records with
/// explicit little-endian assembly.
struct RawVertex {
  float x, y, z;
  unsigned char r, g, b, dyn;
};

std::vector<RawVertex> parse_ply(const std::filesystem::path& p) {
  const auto bytes = slurp(p);
  const std::string text(bytes.begin(), bytes.end());
  const auto end = text.find("end_header\n");
  REQUIRE(end != std::string::npos);
  const auto count_at = text.find("element vertex ");
  const std::size_t count = std::stoul(text.substr(count_at + 15));
  std::size_t at = end + 11;
  REQUIRE(bytes.size() - at == count * 16);
  std::vector<RawVertex> out(count);
  for (auto& v : out) {
    float xyz[3];
    for (float& c : xyz) {
      const std::uint32_t word = le32(&bytes[at]);
      std::memcpy(&c, &word, 4);
      at += 4;
    }
    v = {xyz[0], xyz[1], xyz[2], bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]};
    at += 4;
  }
  return out;
}

}  // namespace

TEST_CASE("single white static point") {
  TempDir dir;
  PointCloud pc;
  pc.resize(1);
  pc.positions.setZero();
  pc.colors.setOnes();
  CHECK(export_ply(pc, dir / "one.ply") == 1);
  const auto verts = parse_ply(dir / "one.ply");
  REQUIRE(verts.size() == 1);
  CHECK(verts[0].x == 0.0f);
  CHECK(verts[0].r == 255);
  CHECK(verts[0].g == 255);
  CHECK(verts[0].b == 255);
  CHECK(verts[0].dyn == 0);
}

TEST_CASE("vertex count follows the filter for every mode") {
  TempDir dir;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto pc = mixed_cloud(200 + 37 * seed, seed);
    std::size_t dynamic = 0;
    for (auto f : pc.dynamic_flag) dynamic += f;
    CHECK(export_ply(pc, dir / "m.ply", PlyMode::Merged) == pc.size());
    CHECK(export_ply(pc, dir / "d.ply", PlyMode::DynamicOnly) == dynamic);
    CHECK(export_ply(pc, dir / "s.ply", PlyMode::StaticOnly) == pc.size() - dynamic);
    CHECK(parse_ply(dir / "d.ply").size() == dynamic);
    for (const auto& v : parse_ply(dir / "d.ply")) CHECK(v.dyn == 1);
    for (const auto& v : parse_ply(dir / "s.ply")) CHECK(v.dyn == 0);
  }
}

TEST_CASE("PLY positions survive within f32 precision") {
  TempDir dir;
  const auto pc = mixed_cloud(500, 11);
  export_ply(pc, dir / "c.ply");
  const auto verts = parse_ply(dir / "c.ply");
  REQUIRE(verts.size() == pc.size());
  const auto reread = read_ply(dir / "c.ply");
  for (std::size_t i = 0; i < verts.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    CHECK(verts[i].x == static_cast<float>(pc.positions(r, 0)));
    CHECK(verts[i].y == static_cast<float>(pc.positions(r, 1)));
    CHECK(verts[i].z == static_cast<float>(pc.positions(r, 2)));
    CHECK(verts[i].dyn == pc.dynamic_flag[i]);
    CHECK(reread.positions(r, 2) == static_cast<double>(verts[i].z));
    CHECK(reread.dynamic_flag[i] == pc.dynamic_flag[i]);
  }
}

TEST_CASE("ply mode names") {
  for (auto mode : {PlyMode::Merged, PlyMode::StaticOnly, PlyMode::DynamicOnly}) {
    CHECK(parse_ply_mode(ply_mode_name(mode)) == mode);
  }
  CHECK_THROWS_AS(parse_ply_mode("everything"), ValidationError);
}
