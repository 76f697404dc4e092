#include "promptseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "promptseg/errors.hpp"
#include "promptseg/rng.hpp"

namespace promptseg {

bool Ellipsoid::contains(int w, int h, int d) const noexcept {
  const double x = (w - center.w) / radius_w;
  const double y = (h - center.h) / radius_h;
  const double z = (d - center.d) / radius_d;
  return x * x + y * y + z * z <= 1.0;
}

void PhantomConfig::validate() const {
  if (!size.positive() || channels < 1 || channels > 2) {
    throw ValidationError(fmt::format("phantom dims {}x{} invalid (1 or 2 channels)",
                                      to_string(size), channels));
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw ValidationError("noise_sigma must be finite and >= 0");
  }
  if (!(gland_radius > 0.0) || !(gland_softness > 0.0)) {
    throw ValidationError("gland radius and softness must be positive");
  }
  if (!lesion_present) return;

  const IntRange centers[] = {center_w, center_h, center_d};
  const RealRange radii[] = {radius_w, radius_h, radius_d};
  const int dims[] = {size.w, size.h, size.d};
  const double gland_center[] = {(size.w - 1) / 2.0, (size.h - 1) / 2.0, (size.d - 1) / 2.0};
  double worst_offset_sq = 0.0;
  double worst_radius = 0.0;
  for (int a = 0; a < 3; ++a) {
    if (centers[a].lo > centers[a].hi || !(radii[a].lo > 0.0) || radii[a].lo > radii[a].hi) {
      throw ValidationError("lesion ranges must be non-empty with positive radii");
    }
    if (centers[a].lo - radii[a].hi < 0.0 || centers[a].hi + radii[a].hi > dims[a] - 1) {
      throw ValidationError("lesion ellipsoid can leave the volume");
    }
    const double off = std::max(std::abs(centers[a].lo - gland_center[a]),
                                std::abs(centers[a].hi - gland_center[a]));
    worst_offset_sq += off * off;
    worst_radius = std::max(worst_radius, radii[a].hi);
  }
  if (std::sqrt(worst_offset_sq) + worst_radius > gland_radius) {
    throw ValidationError("lesion ellipsoid can leave the gland sphere");
  }
}

Phantom generate_phantom(const PhantomConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  Phantom out;
  out.mask = Mask(config.size);

  double second_contrast = 0.0;
  if (config.lesion_present) {
    out.lesion.center = {rng.between(config.center_w.lo, config.center_w.hi),
                         rng.between(config.center_h.lo, config.center_h.hi),
                         rng.between(config.center_d.lo, config.center_d.hi)};
    out.lesion.radius_w = rng.uniform(config.radius_w.lo, config.radius_w.hi);
    out.lesion.radius_h = rng.uniform(config.radius_h.lo, config.radius_h.hi);
    out.lesion.radius_d = rng.uniform(config.radius_d.lo, config.radius_d.hi);
    second_contrast = config.second_channel_contrast * rng.uniform(0.5, 1.0);
    out.weak_label = 1;
  }

  const Size3 s = config.size;
  const double cw = (s.w - 1) / 2.0, ch = (s.h - 1) / 2.0, cd = (s.d - 1) / 2.0;
  Volume volume(s, config.channels);
  for (int c = 0; c < config.channels; ++c) {
    // The second channel has a dimmer gland so the two modalities differ.
    const double gland = c == 0 ? config.gland_intensity : 0.6 * config.gland_intensity;
    const double contrast = c == 0 ? config.lesion_contrast : second_contrast;
    for (int d = 0; d < s.d; ++d) {
      for (int h = 0; h < s.h; ++h) {
        for (int w = 0; w < s.w; ++w) {
          const double dist = std::sqrt((w - cw) * (w - cw) + (h - ch) * (h - ch) +
                                        (d - cd) * (d - cd));
          double v = gland / (1.0 + std::exp((dist - config.gland_radius) / config.gland_softness));
          if (config.lesion_present && out.lesion.contains(w, h, d)) {
            v += contrast;
            if (c == 0) out.mask.set(w, h, d, true);
          }
          if (config.noise_sigma > 0.0) v += config.noise_sigma * rng.normal();
          volume.at(w, h, d, c) = static_cast<float>(v);
        }
      }
    }
  }
  out.volume = std::move(volume);
  return out;
}

std::vector<Phantom> generate_phantoms(PhantomConfig config, int count, double lesion_fraction,
                                       std::uint64_t seed) {
  if (count < 0 || !(lesion_fraction >= 0.0 && lesion_fraction <= 1.0)) {
    throw ValidationError("phantom count must be >= 0 and lesion fraction in [0, 1]");
  }
  const auto lesions = static_cast<int>(std::lround(lesion_fraction * count));
  std::vector<int> has_lesion(static_cast<std::size_t>(count), 0);
  std::fill_n(has_lesion.begin(), lesions, 1);
  Rng order(derive_seed(seed, 0xfeed));
  order.shuffle(has_lesion.begin(), has_lesion.end());

  std::vector<Phantom> out;
  out.reserve(has_lesion.size());
  for (int i = 0; i < count; ++i) {
    config.lesion_present = has_lesion[static_cast<std::size_t>(i)] != 0;
    out.push_back(generate_phantom(config, derive_seed(seed, static_cast<std::uint64_t>(i))));
    out.back().volume.set_id(fmt::format("phantom_{:03d}", i));
  }
  return out;
}

Index3 mask_centroid(const Mask& mask) {
  const Size3 s = mask.size();
  double sw = 0, sh = 0, sd = 0;
  std::size_t n = 0;
  for (int d = 0; d < s.d; ++d) {
    for (int h = 0; h < s.h; ++h) {
      for (int w = 0; w < s.w; ++w) {
        if (mask.at(w, h, d)) {
          sw += w;
          sh += h;
          sd += d;
          ++n;
        }
      }
    }
  }
  if (n == 0) throw ValidationError("centroid of an empty mask");
  const double k = static_cast<double>(n);
  return {static_cast<int>(std::lround(sw / k)), static_cast<int>(std::lround(sh / k)),
          static_cast<int>(std::lround(sd / k))};
}

}  // namespace promptseg
