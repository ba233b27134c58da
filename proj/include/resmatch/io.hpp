#pragma once

#include <filesystem>

#include "resmatch/image.hpp"
#include "resmatch/refine.hpp"

namespace resmatch {

/// 16-bit grayscale PNG, stored value round(d * 256), 0 marks an invalid pixel.
void write_disparity_png(const std::filesystem::path& path, const DisparityMap& map);
DisparityMap read_disparity_png(const std::filesystem::path& path);

/// 8-bit grayscale or RGB PNG; values in [0,1] are scaled to [0,255].
void write_image_png(const std::filesystem::path& path, const Image& image);
/// Grayscale, gray+alpha, RGB or RGBA at 8 or 16 bits; alpha is dropped.
Image read_image_png(const std::filesystem::path& path);

/// 16-bit grayscale PNG with values in [0,1] scaled to [0,65535].
void write_confidence_png(const std::filesystem::path& path, const ConfidenceMap& map);
ConfidenceMap read_confidence_png(const std::filesystem::path& path);

/// 8-bit PNG: 0 correct, 128 mismatch, 255 occlusion.
void write_label_png(const std::filesystem::path& path, const PixelLabelMap& labels);

/// Single-channel PFM ("Pf"); non-finite values become invalid pixels. Rows are
/// stored bottom-up as the format requires.
DisparityMap read_pfm(const std::filesystem::path& path);

}  // namespace resmatch
