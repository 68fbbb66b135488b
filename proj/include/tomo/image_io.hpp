#pragma once

#include <string>

#include "tomo/tensor.hpp"

namespace tomo {

// 8-bit grayscale PNG, pixel = round(255 * x).
void write_png_gray(const Tensor& image, const std::string& path);

// Tile a [n,d,d] stack into a grid with `cols` columns and ceil(n/cols)
// rows; unused cells stay black.
Tensor montage_grid(const Tensor& images, int cols);

}  // namespace tomo
