#include "promptseg/volume_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "promptseg/errors.hpp"

namespace promptseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_header(const fs::path& header) {
  if (fs::is_directory(header)) throw FormatError(header.string() + " is a directory, expected a header file");
  std::ifstream in(header);
  if (!in) throw FormatError("cannot open " + header.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("{}: {}", header.string(), e.what()));
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text << '\n';
  if (!out) throw Error("cannot write " + path.string());
}

void write_bytes(const fs::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("cannot write " + path.string());
}

std::vector<char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename T>
T field(const json& j, const char* key, const fs::path& header) {
  if (!j.contains(key)) throw FormatError(fmt::format("{}: missing '{}'", header.string(), key));
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("{}: bad '{}': {}", header.string(), key, e.what()));
  }
}

Size3 spatial_dims(const std::vector<int>& dims, std::size_t rank, const fs::path& header) {
  if (dims.size() != rank) {
    throw FormatError(fmt::format("{}: dims must have {} entries", header.string(), rank));
  }
  for (int v : dims) {
    if (v < 1) throw ValidationError(fmt::format("{}: dims must be >= 1", header.string()));
  }
  return {dims[0], dims[1], dims[2]};
}

}  // namespace

void save_volume(const Volume& volume, const fs::path& header) {
  const fs::path blob = fs::path(header).replace_extension(".f32");
  const Size3 s = volume.size();
  json j = {{"dims", {s.w, s.h, s.d, volume.channels()}},
            {"spacing", {volume.spacing().w, volume.spacing().h, volume.spacing().d}},
            {"dtype", "f32le"},
            {"data", blob.filename().string()}};
  if (!volume.id().empty()) j["id"] = volume.id();

  std::vector<char> bytes(volume.data().size() * 4);
  std::size_t k = 0;
  for (float v : volume.data()) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) bytes[k++] = static_cast<char>((bits >> (8 * b)) & 0xffu);
  }
  write_bytes(blob, bytes);
  write_text(header, j.dump(2));
}

Volume load_volume(const fs::path& header) {
  const json j = read_header(header);
  const auto dims = field<std::vector<int>>(j, "dims", header);
  if (dims.size() != 4) throw FormatError(header.string() + ": volume dims must be [W,H,D,C]");
  const Size3 s = spatial_dims({dims[0], dims[1], dims[2]}, 3, header);
  const int channels = dims[3];
  if (channels < 1) throw ValidationError(header.string() + ": channel count must be >= 1");
  const auto dtype = field<std::string>(j, "dtype", header);
  if (dtype != "f32le") throw FormatError(fmt::format("{}: unknown dtype '{}'", header.string(), dtype));
  Spacing spacing;
  if (j.contains("spacing")) {
    const auto sp = field<std::vector<double>>(j, "spacing", header);
    if (sp.size() != 3) throw FormatError(header.string() + ": spacing must have 3 entries");
    spacing = {sp[0], sp[1], sp[2]};
  }
  const fs::path blob = header.parent_path() / field<std::string>(j, "data", header);
  const std::vector<char> bytes = read_bytes(blob);
  const std::size_t n = s.voxels() * static_cast<std::size_t>(channels);
  if (bytes.size() != n * 4) {
    throw FormatError(fmt::format("{}: {} bytes, header implies {}", blob.string(), bytes.size(), n * 4));
  }
  std::vector<float> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + b])) << (8 * b);
    }
    data[i] = std::bit_cast<float>(bits);
  }
  std::string id = j.contains("id") ? field<std::string>(j, "id", header) : header.stem().string();
  return Volume(s, channels, std::move(data), spacing, std::move(id));
}

void save_mask(const Mask& mask, const fs::path& header) {
  const fs::path blob = fs::path(header).replace_extension(".u8");
  const Size3 s = mask.size();
  const json j = {{"dims", {s.w, s.h, s.d}}, {"dtype", "u8"}, {"data", blob.filename().string()}};
  write_bytes(blob, std::vector<char>(mask.data().begin(), mask.data().end()));
  write_text(header, j.dump(2));
}

Mask load_mask(const fs::path& header) {
  const json j = read_header(header);
  const Size3 s = spatial_dims(field<std::vector<int>>(j, "dims", header), 3, header);
  const auto dtype = field<std::string>(j, "dtype", header);
  if (dtype != "u8") throw FormatError(fmt::format("{}: unknown dtype '{}'", header.string(), dtype));
  const fs::path blob = header.parent_path() / field<std::string>(j, "data", header);
  const std::vector<char> bytes = read_bytes(blob);
  if (bytes.size() != s.voxels()) {
    throw FormatError(fmt::format("{}: {} bytes, header implies {}", blob.string(), bytes.size(), s.voxels()));
  }
  std::vector<std::uint8_t> data(bytes.begin(), bytes.end());
  try {
    return Mask(s, std::move(data));
  } catch (const ValidationError& e) {
    throw FormatError(fmt::format("{}: {}", blob.string(), e.what()));
  }
}

}  // namespace promptseg
