#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "e3d/tensor.hpp"

namespace e3d {

// 8-bit image, interleaved rows; channels is 1 (grey) or 3 (RGB).
struct Image8 {
    std::vector<std::uint8_t> pixels;
    index_t h = 0, w = 0;
    int channels = 1;

    std::uint8_t at(index_t y, index_t x, int c = 0) const {
        return pixels[static_cast<size_t>((y * w + x) * channels + c)];
    }
    std::uint8_t& at(index_t y, index_t x, int c = 0) {
        return pixels[static_cast<size_t>((y * w + x) * channels + c)];
    }
};

// Dispatches on extension: .pgm/.ppm or .png.
Image8 read_image(const std::string& path);
void write_image(const std::string& path, const Image8& img);

Image8 read_pnm(const std::string& path);
void write_pnm(const std::string& path, const Image8& img);

Image8 read_png(const std::string& path);
void write_png(const std::string& path, const Image8& img);

}  // namespace e3d
