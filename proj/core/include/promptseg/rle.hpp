#pragma once

#include <string>
#include <string_view>

#include "promptseg/volume.hpp"

namespace promptseg {

/// Comma-separated "value:count" runs over the mask in storage order
/// (w fastest), e.g. "0:3,1:1".
std::string rle_encode(const Mask& mask);

/// Throws FormatError on malformed tokens or when the run counts do not sum to
/// size.voxels().
Mask rle_decode(std::string_view rle, Size3 size);

}  // namespace promptseg
