#pragma once

#include <filesystem>

#include "svstitch/image.hpp"

namespace svstitch {

// Decodes an 8-bit PNG or JPEG into [0, 1] floats with an all-ones mask.
// Colour images load as RGB, grayscale as one channel. Throws LoadError.
MaskedImage load_image(const std::filesystem::path& path);

// Writes pixels as 8-bit PNG/JPEG (by extension), rounding half up.
// Pixels with mask 0 are written black.
void save_image(const std::filesystem::path& path, const MaskedImage& img);

// Writes the mask as an 8-bit grayscale PNG.
void save_mask(const std::filesystem::path& path, const MaskedImage& img);

// Reads an 8-bit grayscale PNG written by save_mask into img.mask.
void load_mask_into(const std::filesystem::path& path, MaskedImage& img);

}  // namespace svstitch
