#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "promptseg/geometry.hpp"

namespace promptseg {

/// Physical voxel size in millimetres.
struct Spacing {
  double w = 1.0;
  double h = 1.0;
  double d = 1.0;

  bool operator==(const Spacing&) const = default;
};

/// Multi-channel intensity volume. Storage order is w fastest, then h, d, c.
class Volume {
 public:
  Volume() = default;
  /// Zero-filled volume.
  Volume(Size3 size, int channels, Spacing spacing = {}, std::string id = {});
  /// Takes ownership of `data`; throws ValidationError on bad dims or
  /// non-finite values.
  Volume(Size3 size, int channels, std::vector<float> data, Spacing spacing = {},
         std::string id = {});

  Size3 size() const noexcept { return size_; }
  int channels() const noexcept { return channels_; }
  const Spacing& spacing() const noexcept { return spacing_; }
  const std::string& id() const noexcept { return id_; }
  void set_id(std::string id) { id_ = std::move(id); }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }

  std::size_t index(int w, int h, int d, int c) const noexcept {
    return ((static_cast<std::size_t>(c) * size_.d + d) * size_.h + h) * size_.w + w;
  }
  float at(int w, int h, int d, int c = 0) const noexcept { return data_[index(w, h, d, c)]; }
  float& at(int w, int h, int d, int c = 0) noexcept { return data_[index(w, h, d, c)]; }

  bool operator==(const Volume&) const = default;

 private:
  Size3 size_{};
  int channels_ = 0;
  Spacing spacing_{};
  std::string id_;
  std::vector<float> data_;
};

/// Binary voxel mask aligned with a volume's spatial grid.
class Mask {
 public:
  Mask() = default;
  explicit Mask(Size3 size);
  /// Throws ValidationError if any value is not 0 or 1.
  Mask(Size3 size, std::vector<std::uint8_t> data);

  Size3 size() const noexcept { return size_; }
  std::span<const std::uint8_t> data() const noexcept { return data_; }

  std::size_t index(int w, int h, int d) const noexcept {
    return (static_cast<std::size_t>(d) * size_.h + h) * size_.w + w;
  }
  bool at(int w, int h, int d) const noexcept { return data_[index(w, h, d)] != 0; }
  bool at(Index3 p) const noexcept { return at(p.w, p.h, p.d); }
  void set(int w, int h, int d, bool value) noexcept {
    data_[index(w, h, d)] = value ? 1 : 0;
  }

  std::size_t count() const noexcept;
  bool empty() const noexcept { return count() == 0; }

  /// Sets every voxel in the box [origin, origin + extent).
  void fill_box(Index3 origin, Size3 extent);
  /// Number of set voxels inside the box [origin, origin + extent).
  std::size_t count_box(Index3 origin, Size3 extent) const;

  Mask& operator|=(const Mask& other);
  bool operator==(const Mask&) const = default;

 private:
  Size3 size_{};
  std::vector<std::uint8_t> data_;
};

/// Crop request: fixed extent anchored at a center voxel.
struct CropSpec {
  Size3 size{10, 10, 6};
  Index3 center{};
};

struct Crop {
  Volume data;
  Index3 origin{};
  CropSpec spec{};
};

/// Low corner of the crop: center - floor(size / 2), clamped per axis into
/// [0, dim - size]. Throws DimensionError if the crop is larger than the volume.
Index3 crop_origin(Size3 volume, const CropSpec& spec);

Crop extract_crop(const Volume& volume, const CropSpec& spec);

}  // namespace promptseg
