#ifndef AGNOMAP_PNM_HPP
#define AGNOMAP_PNM_HPP

#include <filesystem>

#include "agnomap/core.hpp"

namespace agnomap::pnm {

/// Writes a binary P5 (1 channel) or P6 (3 channels) image, maxval 255.
/// Pixels are clamped to [0, 1] and rounded to the nearest 8-bit level.
void write(const std::filesystem::path& path, const VectorXf& pixels, const ImageShape& shape);

/// Reads a binary P5/P6 image with maxval 255 into [0, 1] floats.
VectorXf read(const std::filesystem::path& path, ImageShape& shape);

}  // namespace agnomap::pnm

#endif  // AGNOMAP_PNM_HPP
