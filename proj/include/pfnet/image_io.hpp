#pragma once

#include <filesystem>
#include <string>

#include "pfnet/tensor.hpp"

namespace pfnet {

/// PNG or JPEG (by content) as a (1, 3, H, W) tensor in [0, 1].
/// Grayscale sources are replicated to three channels.
Tensor read_image_rgb(const std::string& path);

/// PNG or JPEG as a (1, 1, H, W) tensor in [0, 1]. Colour sources are
/// converted with Rec. 601 luma weights.
Tensor read_image_gray(const std::string& path);

/// 8-bit PNG; values are clipped to [0, 1] and stored as round(v * 255).
void write_png_gray(const std::string& path, const Tensor& map);
void write_png_rgb(const std::string& path, const Tensor& image);

/// 1 where v >= 128/255, else 0.
Tensor binarize_mask(const Tensor& map);

/// Half-pixel-centre bilinear resize of every plane.
Tensor resize_bilinear(const Tensor& x, int height, int width);

/// Extension check: .png, .jpg, .jpeg (case-insensitive).
bool is_image_file(const std::filesystem::path& path);

}  // namespace pfnet
