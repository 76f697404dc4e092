#include "promptseg/crop_sampling.hpp"

#include <cmath>

#include "promptseg/errors.hpp"
#include "promptseg/rng.hpp"

namespace promptseg {

std::vector<int> derive_crop_labels(const Mask& mask, std::span<const CropSpec> crops,
                                    double min_overlap_fraction) {
  std::vector<int> labels;
  labels.reserve(crops.size());
  for (const auto& spec : crops) {
    const Index3 o = crop_origin(mask.size(), spec);
    const double inside = static_cast<double>(mask.count_box(o, spec.size));
    labels.push_back(inside / static_cast<double>(spec.size.voxels()) > min_overlap_fraction ? 1 : 0);
  }
  return labels;
}

CropSampleSet sample_training_crops(const Volume& volume, const Mask& mask, Size3 crop_size,
                                    int count, double balance, std::uint64_t seed) {
  if (count < 2) throw ValidationError("need at least two crops per image");
  if (!(balance >= 0.0 && balance <= 1.0)) throw ValidationError("balance must be in [0, 1]");
  if (mask.size() != volume.size()) throw DimensionError("mask and volume dims differ");

  std::vector<Index3> roi, background;
  const Size3 s = mask.size();
  for (int d = 0; d < s.d; ++d) {
    for (int h = 0; h < s.h; ++h) {
      for (int w = 0; w < s.w; ++w) (mask.at(w, h, d) ? roi : background).push_back({w, h, d});
    }
  }

  CropSampleSet out;
  auto positives = static_cast<int>(std::lround(balance * count));
  if (roi.empty() && positives > 0) {
    out.degenerate_mask = true;
    positives = 0;
  }
  if (background.empty() && positives < count) {
    out.degenerate_mask = true;
    positives = count;
  }

  Rng rng(seed);
  std::vector<CropSpec> specs;
  specs.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const auto& pool = i < positives ? roi : background;
    specs.push_back({crop_size, pool[rng.below(pool.size())]});
  }
  const auto labels = derive_crop_labels(mask, specs);
  out.items.reserve(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    out.items.push_back({extract_crop(volume, specs[i]), labels[i]});
  }
  return out;
}

}  // namespace promptseg
