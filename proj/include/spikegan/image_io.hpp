#pragma once

#include <string>
#include <vector>

#include "spikegan/tensor.hpp"

namespace spikegan {

// Binary PPM (P6). Input [C,H,W] bytes with C = 1 (gray, replicated to RGB)
// or C = 3.
void write_ppm(const std::string& path, const Tensor<uint8_t>& image);

// [N,C,H,W] floats in [-1,1] -> one [C, rows*H, cols*W] byte canvas,
// row-major sample order. Slots past N stay black.
Tensor<uint8_t> make_grid(const Tensor<float>& images, int64_t rows, int64_t cols);

// Frames [C,H,W] concatenated left-to-right into [C, H, T*W].
Tensor<uint8_t> make_strip(const std::vector<Tensor<float>>& frames);

}  // namespace spikegan
