#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "promptseg/training.hpp"
#include "promptseg/volume.hpp"

namespace promptseg {

/// z = 1 iff (ROI voxels inside the clamped crop) / (crop voxels) exceeds
/// min_overlap_fraction. With the default of 0 this is "any ROI voxel inside".
std::vector<int> derive_crop_labels(const Mask& mask, std::span<const CropSpec> crops,
                                    double min_overlap_fraction = 0.0);

struct CropSampleSet {
  CropDataset items;
  /// Set when ROI-centered crops were requested but the mask is empty (or
  /// background crops were requested but the mask is full).
  bool degenerate_mask = false;
};

/// round(balance * count) crops centered on uniformly drawn ROI voxels, the
/// rest on uniformly drawn non-ROI voxels. Labels come from
/// derive_crop_labels with the default rule.
CropSampleSet sample_training_crops(const Volume& volume, const Mask& mask, Size3 crop_size,
                                    int count, double balance, std::uint64_t seed);

}  // namespace promptseg
