#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "promptseg/phantom.hpp"
#include "promptseg/training.hpp"

namespace promptseg {

struct PhantomRecord {
  std::string id;
  int weak_label = 0;
  std::filesystem::path volume;  // absolute after read_phantom_manifest
  std::filesystem::path mask;
};

/// Writes `<id>.json` / `<id>.f32`, `<id>_mask.json` / `<id>_mask.u8` per
/// phantom and a `manifest.json` listing them. Ids are "phantom_000", ...
std::vector<PhantomRecord> write_phantom_set(const std::filesystem::path& dir,
                                             std::span<const Phantom> phantoms);

std::vector<PhantomRecord> read_phantom_manifest(const std::filesystem::path& dir);

Phantom load_phantom(const PhantomRecord& record);
std::vector<Phantom> load_phantom_set(const std::filesystem::path& dir);

/// Whole volumes with their presence labels.
WeakDataset weak_dataset(std::span<const Phantom> phantoms);

/// `per_image` crops from each phantom via sample_training_crops; phantom i
/// draws with derive_seed(seed, i).
CropDataset crop_dataset(std::span<const Phantom> phantoms, Size3 crop_size, int per_image,
                         double balance, std::uint64_t seed);

}  // namespace promptseg
