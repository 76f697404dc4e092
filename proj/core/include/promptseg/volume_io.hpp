#pragma once

#include <filesystem>

#include "promptseg/volume.hpp"

namespace promptseg {

// On-disk layout: a JSON header
//   {"dims": [W,H,D,C], "spacing": [sw,sh,sd], "dtype": "f32le", "data": "<file>"}
// next to a raw little-endian float32 blob in (w, h, d, c) order. Masks use
// {"dims": [W,H,D], "dtype": "u8", ...} with one byte per voxel.
// The data path is relative to the header's directory.

/// Writes `<header>` and `<header stem>.f32`.
void save_volume(const Volume& volume, const std::filesystem::path& header);
Volume load_volume(const std::filesystem::path& header);

/// Writes `<header>` and `<header stem>.u8`.
void save_mask(const Mask& mask, const std::filesystem::path& header);
Mask load_mask(const std::filesystem::path& header);

}  // namespace promptseg
