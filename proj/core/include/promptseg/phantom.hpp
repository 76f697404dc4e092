#pragma once

#include <cstdint>
#include <vector>

#include "promptseg/volume.hpp"

namespace promptseg {

struct IntRange {
  int lo = 0;
  int hi = 0;
};

struct RealRange {
  double lo = 0.0;
  double hi = 0.0;
};

/// Synthetic two-modality pelvic-like volume: a soft "gland" sphere at the
/// volume center with an optional ellipsoidal lesion inside it.
struct PhantomConfig {
  Size3 size{64, 64, 24};
  int channels = 2;
  bool lesion_present = true;
  IntRange center_w{24, 40};
  IntRange center_h{24, 40};
  IntRange center_d{10, 14};
  RealRange radius_w{4.0, 7.0};
  RealRange radius_h{4.0, 7.0};
  RealRange radius_d{2.0, 3.0};
  double lesion_contrast = 1.5;
  /// Lesion offset in the second channel, drawn per phantom in
  /// [0.5, 1.0] * this value.
  double second_channel_contrast = 1.0;
  double noise_sigma = 0.15;
  double gland_radius = 22.0;
  double gland_intensity = 1.0;
  double gland_softness = 1.5;

  /// Throws ValidationError when the lesion cannot fit inside the gland and
  /// the volume, or when any parameter is out of range.
  void validate() const;
};

struct Ellipsoid {
  Index3 center{};
  double radius_w = 1.0;
  double radius_h = 1.0;
  double radius_d = 1.0;

  bool contains(int w, int h, int d) const noexcept;
};

struct Phantom {
  Volume volume;
  Mask mask;
  int weak_label = 0;
  /// Present iff weak_label == 1.
  Ellipsoid lesion{};
};

/// Deterministic in (config, seed).
Phantom generate_phantom(const PhantomConfig& config, std::uint64_t seed);

/// `count` phantoms; phantom i uses seed derive_seed(seed, i). Exactly
/// round(lesion_fraction * count) of them carry a lesion, positions chosen by
/// a seeded shuffle.
std::vector<Phantom> generate_phantoms(PhantomConfig config, int count, double lesion_fraction,
                                       std::uint64_t seed);

/// Rounded centroid of the set voxels. Mask must be non-empty.
Index3 mask_centroid(const Mask& mask);

}  // namespace promptseg
