#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mmv/io.hpp"
#include "mmv/rng.hpp"
#include "support/test_util.hpp"

using namespace mmv;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

Volume random_volume(int z, int h, int w, Modality m, Rng& rng) {
  Volume v;
  v.c = 1;
  v.z = z;
  v.h = h;
  v.w = w;
  v.modality = m;
  v.data.resize(static_cast<std::size_t>(z) * h * w);
  for (auto& x : v.data) x = rng.uniform(-1000, 1500);
  return v;
}

std::vector<std::uint8_t> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_SUITE_BEGIN("io");

TEST_CASE("MMV-RAW round-trips volumes bit-exactly") {
  Rng rng = Rng::derive(80, "raw");
  Volume v = random_volume(4, 6, 5, Modality::ct3d, rng);
  const std::string path = temp_path("mmv_io_roundtrip.mmv");
  write_mmv_raw(path, v, 0b10110);
  RawSample back = read_mmv_raw(path);
  CHECK(back.volume.modality == Modality::ct3d);
  CHECK(back.label_bits == 0b10110);
  CHECK(back.volume.z == 4);
  CHECK(back.volume.h == 6);
  CHECK(back.volume.w == 5);
  CHECK(back.volume.data == v.data);
  std::filesystem::remove(path);
}

TEST_CASE("identical writes produce byte-identical files") {
  Rng rng = Rng::derive(81, "raw-det");
  Volume v = random_volume(1, 8, 8, Modality::xray2d, rng);
  const std::string p1 = temp_path("mmv_io_a.mmv");
  const std::string p2 = temp_path("mmv_io_b.mmv");
  write_mmv_raw(p1, v, 3);
  write_mmv_raw(p2, v, 3);
  CHECK(slurp(p1) == slurp(p2));
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("truncated files are rejected") {
  Rng rng = Rng::derive(82, "raw-trunc");
  Volume v = random_volume(1, 4, 4, Modality::xray2d, rng);
  const std::string path = temp_path("mmv_io_trunc.mmv");
  write_mmv_raw(path, v, 0);
  auto bytes = slurp(path);
  bytes.resize(bytes.size() - 7);
  spit(path, bytes);
  CHECK_THROWS_AS(read_mmv_raw(path), Error);
  std::filesystem::remove(path);
}

TEST_CASE("corrupted payload bytes fail the checksum") {
  Rng rng = Rng::derive(83, "raw-corrupt");
  Volume v = random_volume(1, 4, 4, Modality::xray2d, rng);
  const std::string path = temp_path("mmv_io_corrupt.mmv");
  write_mmv_raw(path, v, 0);
  auto bytes = slurp(path);
  bytes[30] ^= 0x40;
  spit(path, bytes);
  try {
    read_mmv_raw(path);
    FAIL("expected checksum failure");
  } catch (const Error& e) {
    CHECK(mmv::testing::contains(e.what(), "checksum"));
  }
  std::filesystem::remove(path);
}

TEST_CASE("foreign files are rejected on magic") {
  const std::string path = temp_path("mmv_io_magic.mmv");
  spit(path, std::vector<std::uint8_t>(64, 0x21));
  CHECK_THROWS_AS(read_mmv_raw(path), Error);
  std::filesystem::remove(path);
}

TEST_CASE("manifests round-trip") {
  Manifest m;
  m.seed = 424242;
  for (int i = 0; i < 4; ++i) {
    ManifestEntry e;
    e.id = i;
    e.file = "sample_" + std::to_string(i) + ".mmv";
    e.modality = i % 2 ? Modality::ct3d : Modality::xray2d;
    e.labels = {i % 2 == 0, false, true, i == 3, false};
    m.entries.push_back(e);
  }
  const std::string path = temp_path("mmv_io_manifest.json");
  write_manifest(path, m);
  Manifest back = read_manifest(path);
  CHECK(back.seed == m.seed);
  REQUIRE(back.entries.size() == m.entries.size());
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    CHECK(back.entries[i].id == m.entries[i].id);
    CHECK(back.entries[i].file == m.entries[i].file);
    CHECK(back.entries[i].modality == m.entries[i].modality);
    CHECK(back.entries[i].labels == m.entries[i].labels);
  }
  std::filesystem::remove(path);
}

TEST_CASE("PGM output carries the correct header and byte values") {
  std::vector<float> values{0.0f, 0.5f, 1.0f, 0.25f, 2.0f, -1.0f};
  const std::string path = temp_path("mmv_io_map.pgm");
  write_pgm(path, values, 2, 3);
  auto bytes = slurp(path);
  const std::string header(bytes.begin(), bytes.begin() + 10);
  CHECK(header == "P5\n3 2\n255");
  REQUIRE(bytes.size() == 11 + 6);
  CHECK(bytes[11] == 0);
  CHECK(bytes[12] == 128);
  CHECK(bytes[13] == 255);
  CHECK(bytes[15] == 255);  // clamped above 1
  CHECK(bytes[16] == 0);    // clamped below 0
  std::filesystem::remove(path);
}

TEST_CASE("atomic writes leave no temp file behind") {
  const std::string path = temp_path("mmv_io_atomic.bin");
  atomic_write_file(path, std::vector<std::uint8_t>{1, 2, 3});
  CHECK(std::filesystem::exists(path));
  CHECK(!std::filesystem::exists(path + ".tmp"));
  std::filesystem::remove(path);
}

TEST_SUITE_END();
