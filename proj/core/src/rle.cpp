#include "promptseg/rle.hpp"

#include <charconv>
#include <cstdint>
#include <vector>

#include <fmt/format.h>

#include "promptseg/errors.hpp"

namespace promptseg {

std::string rle_encode(const Mask& mask) {
  const auto data = mask.data();
  std::string out;
  std::size_t i = 0;
  while (i < data.size()) {
    std::size_t j = i;
    while (j < data.size() && data[j] == data[i]) ++j;
    if (!out.empty()) out += ',';
    out += fmt::format("{}:{}", data[i], j - i);
    i = j;
  }
  return out;
}

Mask rle_decode(std::string_view rle, Size3 size) {
  if (!size.positive()) throw FormatError("RLE target dims must be positive");
  const std::size_t total = size.voxels();
  std::vector<std::uint8_t> data;
  data.reserve(total);

  std::size_t pos = 0;
  while (pos < rle.size()) {
    std::size_t end = rle.find(',', pos);
    if (end == std::string_view::npos) end = rle.size();
    const std::string_view token = rle.substr(pos, end - pos);
    const std::size_t colon = token.find(':');
    if (colon != 1 || (token[0] != '0' && token[0] != '1')) {
      throw FormatError(fmt::format("bad RLE run '{}'", token));
    }
    std::uint64_t count = 0;
    const char* first = token.data() + 2;
    const char* last = token.data() + token.size();
    auto [ptr, ec] = std::from_chars(first, last, count);
    if (ec != std::errc{} || ptr != last || first == last || count == 0) {
      throw FormatError(fmt::format("bad RLE run length in '{}'", token));
    }
    if (count > total - data.size()) {
      throw FormatError(fmt::format("RLE runs exceed {} voxels", total));
    }
    data.insert(data.end(), count, static_cast<std::uint8_t>(token[0] - '0'));
    pos = end + 1;
    if (end == rle.size()) break;
  }
  if (data.size() != total) {
    throw FormatError(fmt::format("RLE runs sum to {}, expected {}", data.size(), total));
  }
  return Mask(size, std::move(data));
}

}  // namespace promptseg
