// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rlpt/common.hpp"

namespace rlpt::io {

// Planar float image, channel-major [c][h][w]. Linear radiometric values.
struct Image {
  int h = 0, w = 0, c = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h_, int w_, int c_) : h(h_), w(w_), c(c_), data(std::size_t(h_) * w_ * c_, 0.f) {}

  std::size_t index(int ch, int y, int x) const {
    return (std::size_t(ch) * h + y) * w + x;
  }
  float& at(int ch, int y, int x) { return data[index(ch, y, x)]; }
  const float& at(int ch, int y, int x) const { return data[index(ch, y, x)]; }
};

// PFM, 32-bit float little-endian ("PF" color / "Pf" gray, bottom-up rows).
void write_pfm(const std::string& path, const Image& img);
Image read_pfm(const std::string& path);

// 8-bit PNG with gamma 2.2 and [0,1] clamp; for viewing only.
void write_png8(const std::string& path, const Image& img, double gamma = 2.2);

// 16-bit grayscale PNG; used for sample-count heatmap exports.
void write_png16(const std::string& path, const std::vector<std::uint16_t>& grid,
                 int h, int w);

// Raw little-endian payloads (planar f32 / u16 / u8 grids).
void write_raw_f32(const std::string& path, const float* data, std::size_t count);
std::vector<float> read_raw_f32(const std::string& path, std::size_t expect_count);
void write_raw_u16(const std::string& path, const std::vector<std::uint16_t>& v);
void write_raw_u8(const std::string& path, const std::vector<std::uint8_t>& v);
std::vector<std::uint8_t> read_raw_u8(const std::string& path, std::size_t expect_count);

std::string read_file_bytes(const std::string& path);

}  // namespace rlpt::io
