#pragma once

#include <filesystem>

#include "twofold/tensor.hpp"

namespace twofold {

// Binary PPM (P6) or PGM (P5), 8-bit. Returns H x W x 3 with values v/maxval;
// graymaps are replicated across the three channels. Throws FormatError on
// bad magic, bad header or short pixel data, LoadError if unreadable.
Tensor load_image(const std::filesystem::path& path);
Tensor decode_pnm(const std::string& bytes, const std::string& origin = "<memory>");

// Quantizes to round(255 v) after clamping to [0, 1].
void save_ppm(const std::filesystem::path& path, const Tensor& image);
std::string encode_ppm(const Tensor& image);

}  // namespace twofold
