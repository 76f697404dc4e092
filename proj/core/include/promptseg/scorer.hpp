#pragma once

#include "promptseg/network.hpp"
#include "promptseg/volume.hpp"

namespace promptseg {

/// Maps a crop to a probability of ROI presence.
class CropScorer {
 public:
  virtual ~CropScorer() = default;
  virtual double score(const Crop& crop) const = 0;
};

/// Borrows a trained network; the network must outlive the scorer.
class NetworkScorer final : public CropScorer {
 public:
  explicit NetworkScorer(const Network& net) : net_(&net) {}
  double score(const Crop& crop) const override;

 private:
  const Network* net_;
};

/// Oracle: fraction of crop voxels that lie inside the ground-truth ROI.
class RoiFractionScorer final : public CropScorer {
 public:
  explicit RoiFractionScorer(const Mask& roi) : roi_(&roi) {}
  double score(const Crop& crop) const override;

 private:
  const Mask* roi_;
};

class ConstantScorer final : public CropScorer {
 public:
  explicit ConstantScorer(double value) : value_(value) {}
  double score(const Crop&) const override { return value_; }

 private:
  double value_;
};

}  // namespace promptseg
