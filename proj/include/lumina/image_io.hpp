#pragma once

#include <filesystem>

#include "lumina/image.hpp"

namespace lumina {

/// Reads binary PPM (P6) or PGM (P5) with maxval 255, or 8-bit PNG when built
/// with PNG support (detected by signature). Samples map linearly to k / 255.
/// Throws IoError when the file cannot be opened, ImageFormatError on bad content.
Image load_image(const std::filesystem::path& path);

/// Writes P6 for 3-channel and P5 for 1-channel images, or PNG for a ".png"
/// path; samples are clamped and rounded to 8 bits.
void save_image(const Image& img, const std::filesystem::path& path);

}  // namespace lumina
