#pragma once

#include <filesystem>

#include "gkmvlp/tensor.hpp"

namespace gkmvlp {

// Grayscale raster, H x W, intensities in [0, 1].
using Image = Matrix;

// Rounds every pixel to the nearest multiple of 1/255 so the image survives
// an 8-bit round trip unchanged.
Image quantize_8bit(const Image& image);

// Binary portable graymap (P5), 8-bit.
void write_pgm(const std::filesystem::path& path, const Image& image);

// Reads an 8-bit grayscale PGM (P5 or P2) or PNG file, chosen by content.
Image read_image(const std::filesystem::path& path);

}  // namespace gkmvlp
