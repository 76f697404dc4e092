#include "promptseg/weights_io.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <zlib.h>

#include "promptseg/errors.hpp"

namespace promptseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFormat = "promptseg-weights";

std::string crc_hex(const char* bytes, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes), static_cast<uInt>(n));
  return fmt::format("{:08x}", static_cast<std::uint32_t>(crc));
}

json spec_json(const NetworkSpec& s) {
  return {{"conv_filters", s.conv_filters},
          {"kernel", 3},
          {"input_channels", s.input_channels},
          {"head", to_string(s.head)},
          {"input_size", {s.input_size.w, s.input_size.h, s.input_size.d}},
          {"dense_widths", {s.hidden_width, 1}}};
}

NetworkSpec spec_from_json(const json& j) {
  NetworkSpec s;
  s.conv_filters = j.at("conv_filters").get<std::vector<int>>();
  if (j.at("kernel").get<int>() != 3) throw FormatError("only 3x3x3 kernels are supported");
  s.input_channels = j.at("input_channels").get<int>();
  s.head = head_from_string(j.at("head").get<std::string>());
  const auto size = j.at("input_size").get<std::vector<int>>();
  if (size.size() != 3) throw FormatError("input_size must have 3 entries");
  s.input_size = {size[0], size[1], size[2]};
  const auto dense = j.at("dense_widths").get<std::vector<int>>();
  if (dense.size() != 2 || dense[1] != 1) throw FormatError("dense_widths must be [hidden, 1]");
  s.hidden_width = dense[0];
  return s;
}

}  // namespace

void save_weights(const Network& net, const fs::path& manifest) {
  const fs::path blob = fs::path(manifest).replace_extension(".f64");
  std::vector<char> bytes;
  bytes.reserve(net.parameter_count() * 8);
  json params = json::array();
  for (const auto& p : net.parameters()) {
    const std::size_t offset = bytes.size() / 8;
    for (double v : p.values) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
    }
    params.push_back({{"name", p.name},
                      {"shape", p.shape},
                      {"offset", offset},
                      {"count", p.values.size()},
                      {"crc32", crc_hex(bytes.data() + offset * 8, p.values.size() * 8)}});
  }
  const json j = {{"format", kFormat},
                  {"version", 1},
                  {"spec", spec_json(net.spec())},
                  {"dtype", "f64le"},
                  {"data", blob.filename().string()},
                  {"crc32", crc_hex(bytes.data(), bytes.size())},
                  {"parameters", params}};
  {
    std::ofstream out(blob, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("cannot write " + blob.string());
  }
  std::ofstream out(manifest);
  out << j.dump(2) << '\n';
  if (!out) throw Error("cannot write " + manifest.string());
}

Network load_weights(const fs::path& manifest) {
  json j;
  {
    if (fs::is_directory(manifest)) throw FormatError(manifest.string() + " is a directory, expected a weight manifest");
    std::ifstream in(manifest);
    if (!in) throw FormatError("cannot open " + manifest.string());
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw FormatError(fmt::format("{}: {}", manifest.string(), e.what()));
    }
  }
  try {
    if (j.at("format").get<std::string>() != kFormat || j.at("dtype").get<std::string>() != "f64le") {
      throw FormatError(manifest.string() + ": not a weight manifest");
    }
    Network net(spec_from_json(j.at("spec")));

    const fs::path blob = manifest.parent_path() / j.at("data").get<std::string>();
    std::ifstream in(blob, std::ios::binary);
    if (!in) throw FormatError("cannot open " + blob.string());
    const std::vector<char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    if (bytes.size() != net.parameter_count() * 8) {
      throw FormatError(fmt::format("{}: {} bytes, spec implies {}", blob.string(), bytes.size(),
                                    net.parameter_count() * 8));
    }
    if (crc_hex(bytes.data(), bytes.size()) != j.at("crc32").get<std::string>()) {
      throw FormatError(blob.string() + ": checksum mismatch");
    }

    const auto& entries = j.at("parameters");
    auto& params = net.parameters();
    if (entries.size() != params.size()) throw FormatError(manifest.string() + ": parameter count mismatch");
    for (std::size_t p = 0; p < params.size(); ++p) {
      const auto& e = entries[p];
      const auto offset = e.at("offset").get<std::size_t>();
      const auto count = e.at("count").get<std::size_t>();
      if (e.at("name").get<std::string>() != params[p].name ||
          e.at("shape").get<std::vector<int>>() != params[p].shape || count != params[p].values.size() ||
          (offset + count) * 8 > bytes.size()) {
        throw FormatError(fmt::format("{}: parameter {} does not match the spec", manifest.string(), p));
      }
      if (crc_hex(bytes.data() + offset * 8, count * 8) != e.at("crc32").get<std::string>()) {
        throw FormatError(fmt::format("{}: checksum mismatch in {}", manifest.string(), params[p].name));
      }
      for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) {
          bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[(offset + i) * 8 + b])) << (8 * b);
        }
        params[p].values[i] = std::bit_cast<double>(bits);
      }
    }
    return net;
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("{}: {}", manifest.string(), e.what()));
  }
}

Network load_weights(const fs::path& manifest, const NetworkSpec& expected) {
  Network net = load_weights(manifest);
  if (!(net.spec() == expected)) {
    throw ValidationError(fmt::format("{}: stored network ({}) does not match the expected spec ({})",
                                      manifest.string(), to_string(net.spec().head),
                                      to_string(expected.head)));
  }
  return net;
}

Network load_weights(const fs::path& manifest, Head expected) {
  Network net = load_weights(manifest);
  if (net.spec().head != expected) {
    throw ValidationError(fmt::format("{}: stored head is {}, expected {}", manifest.string(),
                                      to_string(net.spec().head), to_string(expected)));
  }
  return net;
}

}  // namespace promptseg
