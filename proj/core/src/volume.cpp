#include "promptseg/volume.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "promptseg/errors.hpp"

namespace promptseg {

std::string to_string(Index3 p) { return fmt::format("({},{},{})", p.w, p.h, p.d); }
std::string to_string(Size3 s) { return fmt::format("{}x{}x{}", s.w, s.h, s.d); }

namespace {

void check_dims(Size3 size, int channels) {
  if (!size.positive() || channels < 1) {
    throw ValidationError(
        fmt::format("volume dims must be positive, got {}x{}", to_string(size), channels));
  }
}

}  // namespace

Volume::Volume(Size3 size, int channels, Spacing spacing, std::string id)
    : size_(size), channels_(channels), spacing_(spacing), id_(std::move(id)) {
  check_dims(size, channels);
  data_.assign(size.voxels() * static_cast<std::size_t>(channels), 0.0f);
}

Volume::Volume(Size3 size, int channels, std::vector<float> data, Spacing spacing,
               std::string id)
    : size_(size),
      channels_(channels),
      spacing_(spacing),
      id_(std::move(id)),
      data_(std::move(data)) {
  check_dims(size, channels);
  const std::size_t expected = size.voxels() * static_cast<std::size_t>(channels);
  if (data_.size() != expected) {
    throw ValidationError(
        fmt::format("volume data has {} values, dims imply {}", data_.size(), expected));
  }
  if (!std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); })) {
    throw ValidationError("volume contains non-finite intensities");
  }
}

Mask::Mask(Size3 size) : size_(size) {
  if (!size.positive()) {
    throw ValidationError("mask dims must be positive, got " + to_string(size));
  }
  data_.assign(size.voxels(), 0);
}

Mask::Mask(Size3 size, std::vector<std::uint8_t> data) : size_(size), data_(std::move(data)) {
  if (!size.positive()) {
    throw ValidationError("mask dims must be positive, got " + to_string(size));
  }
  if (data_.size() != size.voxels()) {
    throw ValidationError(
        fmt::format("mask data has {} values, dims imply {}", data_.size(), size.voxels()));
  }
  if (!std::all_of(data_.begin(), data_.end(), [](std::uint8_t v) { return v <= 1; })) {
    throw ValidationError("mask values must be 0 or 1");
  }
}

std::size_t Mask::count() const noexcept {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

void Mask::fill_box(Index3 origin, Size3 extent) {
  const int w1 = std::min(origin.w + extent.w, size_.w);
  const int h1 = std::min(origin.h + extent.h, size_.h);
  const int d1 = std::min(origin.d + extent.d, size_.d);
  const int w0 = std::max(origin.w, 0);
  if (w0 >= w1) return;
  for (int d = std::max(origin.d, 0); d < d1; ++d) {
    for (int h = std::max(origin.h, 0); h < h1; ++h) {
      auto row = data_.begin() + static_cast<std::ptrdiff_t>(index(w0, h, d));
      std::fill(row, row + (w1 - w0), std::uint8_t{1});
    }
  }
}

std::size_t Mask::count_box(Index3 origin, Size3 extent) const {
  const int w1 = std::min(origin.w + extent.w, size_.w);
  const int h1 = std::min(origin.h + extent.h, size_.h);
  const int d1 = std::min(origin.d + extent.d, size_.d);
  const int w0 = std::max(origin.w, 0);
  std::size_t total = 0;
  if (w0 >= w1) return 0;
  for (int d = std::max(origin.d, 0); d < d1; ++d) {
    for (int h = std::max(origin.h, 0); h < h1; ++h) {
      auto row = data_.begin() + static_cast<std::ptrdiff_t>(index(w0, h, d));
      total += static_cast<std::size_t>(std::accumulate(row, row + (w1 - w0), 0));
    }
  }
  return total;
}

Mask& Mask::operator|=(const Mask& other) {
  if (other.size_ != size_) {
    throw DimensionError("mask union needs matching dims: " + to_string(size_) + " vs " +
                         to_string(other.size_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] |= other.data_[i];
  return *this;
}

Index3 crop_origin(Size3 volume, const CropSpec& spec) {
  const Size3 s = spec.size;
  if (!s.positive() || s.w > volume.w || s.h > volume.h || s.d > volume.d) {
    throw DimensionError(
        fmt::format("crop {} does not fit volume {}", to_string(s), to_string(volume)));
  }
  auto axis = [](int center, int size, int dim) {
    return std::clamp(center - size / 2, 0, dim - size);
  };
  return {axis(spec.center.w, s.w, volume.w), axis(spec.center.h, s.h, volume.h),
          axis(spec.center.d, s.d, volume.d)};
}

Crop extract_crop(const Volume& volume, const CropSpec& spec) {
  const Index3 o = crop_origin(volume.size(), spec);
  const Size3 s = spec.size;
  const int channels = volume.channels();
  std::vector<float> data(s.voxels() * static_cast<std::size_t>(channels));
  auto out = data.begin();
  for (int c = 0; c < channels; ++c) {
    for (int d = 0; d < s.d; ++d) {
      for (int h = 0; h < s.h; ++h) {
        const float* row = &volume.data()[volume.index(o.w, o.h + h, o.d + d, c)];
        out = std::copy(row, row + s.w, out);
      }
    }
  }
  return Crop{Volume(s, channels, std::move(data), volume.spacing()), o, spec};
}

}  // namespace promptseg
