#pragma once

#include <filesystem>

#include "promptseg/network.hpp"

namespace promptseg {

// JSON manifest (spec, parameter names, shapes, offsets, CRC-32 checksums) plus
// a raw little-endian float64 blob `<manifest stem>.f64` beside it.

void save_weights(const Network& net, const std::filesystem::path& manifest);

/// Throws FormatError on checksum or length mismatch.
Network load_weights(const std::filesystem::path& manifest);

/// As above, and throws ValidationError if the stored spec differs from `expected`.
Network load_weights(const std::filesystem::path& manifest, const NetworkSpec& expected);

/// Throws ValidationError if the stored network has a different head.
Network load_weights(const std::filesystem::path& manifest, Head expected);

}  // namespace promptseg
