#pragma once

#include <string>

#include "quadfit/image.hpp"

namespace quadfit {

// 8-bit PNG round trip. Gray files load as 1 channel, everything else as RGB.
// Values map linearly between [0,1] and [0,255].
Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& img);

}  // namespace quadfit
