#include "mmv/io.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "mmv/hashing.hpp"

namespace mmv {

namespace {

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 24));
}

std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace

void atomic_write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) io_fail("cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) io_fail("short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) io_fail("rename " + tmp + " -> " + path + " failed: " + ec.message());
}

void atomic_write_text(const std::string& path, const std::string& text) {
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  atomic_write_file(path, bytes);
}

void write_mmv_raw(const std::string& path, const Volume& volume, std::uint8_t label_bits) {
  volume.validate();
  std::vector<std::uint8_t> bytes;
  bytes.reserve(14 + volume.data.size() * 4 + 4);
  bytes.insert(bytes.end(), {'M', 'M', 'V', '1'});
  bytes.push_back(static_cast<std::uint8_t>(volume.modality));
  bytes.push_back(label_bits);
  append_u32(bytes, static_cast<std::uint32_t>(volume.c));
  append_u32(bytes, static_cast<std::uint32_t>(volume.z));
  append_u32(bytes, static_cast<std::uint32_t>(volume.h));
  append_u32(bytes, static_cast<std::uint32_t>(volume.w));
  const std::size_t payload_start = 4;
  for (float v : volume.data) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    append_u32(bytes, u);
  }
  const std::uint32_t crc = crc32(bytes.data() + payload_start, bytes.size() - payload_start);
  append_u32(bytes, crc);
  atomic_write_file(path, bytes);
}

RawSample read_mmv_raw(const std::string& path) {
  std::vector<std::uint8_t> bytes = read_file(path);
  if (bytes.size() < 26 || std::memcmp(bytes.data(), "MMV1", 4) != 0) {
    io_fail(path + ": not an MMV-RAW file (bad magic or truncated header)");
  }
  const std::uint8_t modality_code = bytes[4];
  if (modality_code > 1) io_fail(path + ": unknown modality code " + std::to_string(modality_code));
  RawSample sample;
  sample.volume.modality = static_cast<Modality>(modality_code);
  sample.label_bits = bytes[5];
  sample.volume.c = static_cast<int>(read_u32(bytes.data() + 6));
  sample.volume.z = static_cast<int>(read_u32(bytes.data() + 10));
  sample.volume.h = static_cast<int>(read_u32(bytes.data() + 14));
  sample.volume.w = static_cast<int>(read_u32(bytes.data() + 18));
  if (sample.volume.c <= 0 || sample.volume.z <= 0 || sample.volume.h <= 0 ||
      sample.volume.w <= 0) {
    io_fail(path + ": non-positive dimensions in header");
  }
  const std::uint64_t n = static_cast<std::uint64_t>(sample.volume.voxels());
  const std::uint64_t expected = 22 + n * 4 + 4;
  if (bytes.size() != expected) {
    io_fail(path + ": length " + std::to_string(bytes.size()) + " does not match header (expected " +
            std::to_string(expected) + ")");
  }
  const std::uint32_t stored_crc = read_u32(bytes.data() + bytes.size() - 4);
  const std::uint32_t actual_crc = crc32(bytes.data() + 4, bytes.size() - 8);
  if (stored_crc != actual_crc) {
    io_fail(path + ": checksum mismatch (stored " + std::to_string(stored_crc) + ", computed " +
            std::to_string(actual_crc) + ")");
  }
  sample.volume.data.resize(n);
  const std::uint8_t* p = bytes.data() + 22;
  for (std::uint64_t i = 0; i < n; ++i, p += 4) {
    std::uint32_t u = read_u32(p);
    std::memcpy(&sample.volume.data[i], &u, 4);
  }
  if (sample.volume.modality == Modality::xray2d && sample.volume.z != 1) {
    io_fail(path + ": xray2d sample must have Z = 1");
  }
  return sample;
}

void write_manifest(const std::string& path, const Manifest& manifest) {
  nlohmann::ordered_json doc;
  doc["seed"] = manifest.seed;
  auto& rows = doc["samples"] = nlohmann::ordered_json::array();
  for (const auto& e : manifest.entries) {
    nlohmann::ordered_json row;
    row["id"] = e.id;
    row["file"] = e.file;
    row["modality"] = modality_name(e.modality);
    auto& labels = row["labels"] = nlohmann::ordered_json::object();
    for (int l = 0; l < kNumLabels; ++l) {
      labels[kLabelNames[static_cast<std::size_t>(l)]] =
          static_cast<int>(e.labels[static_cast<std::size_t>(l)]);
    }
    rows.push_back(std::move(row));
  }
  atomic_write_text(path, doc.dump(2) + "\n");
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) io_fail("cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    io_fail(path + ": invalid manifest JSON: " + e.what());
  }
  Manifest manifest;
  manifest.seed = doc.at("seed").get<std::uint64_t>();
  for (const auto& row : doc.at("samples")) {
    ManifestEntry e;
    e.id = row.at("id").get<std::int64_t>();
    e.file = row.at("file").get<std::string>();
    const std::string m = row.at("modality").get<std::string>();
    if (m == "xray2d") {
      e.modality = Modality::xray2d;
    } else if (m == "ct3d") {
      e.modality = Modality::ct3d;
    } else {
      io_fail(path + ": unknown modality '" + m + "'");
    }
    for (int l = 0; l < kNumLabels; ++l) {
      e.labels[static_cast<std::size_t>(l)] =
          row.at("labels").at(kLabelNames[static_cast<std::size_t>(l)]).get<int>() != 0;
    }
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

void write_pgm(const std::string& path, const std::vector<float>& values01, int h, int w) {
  if (static_cast<std::int64_t>(values01.size()) != static_cast<std::int64_t>(h) * w) {
    fail("write_pgm: value count does not match " + std::to_string(h) + "x" + std::to_string(w));
  }
  char header[64];
  const int header_len = std::snprintf(header, sizeof(header), "P5\n%d %d\n255\n", w, h);
  std::vector<std::uint8_t> bytes(header, header + header_len);
  bytes.reserve(bytes.size() + values01.size());
  for (float v : values01) {
    const float clamped = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
    bytes.push_back(static_cast<std::uint8_t>(clamped * 255.0f + 0.5f));
  }
  atomic_write_file(path, bytes);
}

}  // namespace mmv
