#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grela/common.hpp"

namespace grela {

// 8-bit RGB image, row-major, 3 bytes per pixel.
struct Image {
    int h = 0;
    int w = 0;
    std::vector<std::uint8_t> rgb;  // h*w*3

    static Image filled(int h, int w, std::uint8_t r, std::uint8_t g, std::uint8_t b);
    std::uint8_t* px(int y, int x) { return rgb.data() + (static_cast<std::size_t>(y) * w + x) * 3; }
    const std::uint8_t* px(int y, int x) const { return rgb.data() + (static_cast<std::size_t>(y) * w + x) * 3; }
};

// Binary mask, one byte per pixel, values 0 or 1.
struct BinaryMask {
    int h = 0;
    int w = 0;
    std::vector<std::uint8_t> fg;  // h*w

    static BinaryMask zeros(int h, int w);
    std::uint8_t& at(int y, int x) { return fg[static_cast<std::size_t>(y) * w + x]; }
    std::uint8_t at(int y, int x) const { return fg[static_cast<std::size_t>(y) * w + x]; }
    long count() const;
    bool empty_mask() const { return count() == 0; }
};

// Binary netpbm: color images as P6, masks as P5 with 0 background and 255
// foreground. Readers accept canonical headers plus '#' comments; a mask
// byte that is neither 0 nor 255 is rejected.
void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);
void write_pgm(const std::string& path, const BinaryMask& mask);
BinaryMask read_pgm(const std::string& path);

// Nearest-neighbor resize: output pixel (y, x) copies source pixel
// (y*h/out_h, x*w/out_w) with integer floor division.
BinaryMask nn_resize(const BinaryMask& mask, int out_h, int out_w);

// Foreground fraction per cell of a rows×cols grid over the mask, row-major.
// Cells follow grid_cell_bounds (near-equal, remainder in the last cell).
std::vector<double> grid_foreground_fractions(const BinaryMask& mask, int rows, int cols);

// Same grid, but integer foreground counts per cell; summing them gives the
// mask's total count exactly.
std::vector<long> grid_foreground_counts(const BinaryMask& mask, int rows, int cols);

}  // namespace grela
