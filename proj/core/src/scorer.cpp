#include "promptseg/scorer.hpp"

#include "promptseg/errors.hpp"

namespace promptseg {

double NetworkScorer::score(const Crop& crop) const { return net_->forward(crop.data); }

double RoiFractionScorer::score(const Crop& crop) const {
  if (roi_->size().w < crop.origin.w + crop.spec.size.w ||
      roi_->size().h < crop.origin.h + crop.spec.size.h ||
      roi_->size().d < crop.origin.d + crop.spec.size.d) {
    throw DimensionError("crop lies outside the oracle mask");
  }
  return static_cast<double>(roi_->count_box(crop.origin, crop.spec.size)) /
         static_cast<double>(crop.spec.size.voxels());
}

}  // namespace promptseg
