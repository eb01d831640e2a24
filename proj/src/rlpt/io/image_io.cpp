// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#include "rlpt/io/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace rlpt::io {

static_assert(std::endian::native == std::endian::little,
              "raw/PFM I/O assumes a little-endian host");

void write_pfm(const std::string& path, const Image& img) {
  if (img.c != 1 && img.c != 3) throw DataError("PFM supports 1 or 3 channels");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for write: " + path);
  out << (img.c == 3 ? "PF" : "Pf") << "\n" << img.w << " " << img.h << "\n-1.0\n";
  // PFM rows run bottom-to-top, pixels interleaved.
  std::vector<float> row(std::size_t(img.w) * img.c);
  for (int y = img.h - 1; y >= 0; --y) {
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < img.c; ++ch) row[std::size_t(x) * img.c + ch] = img.at(ch, y, x);
    out.write(reinterpret_cast<const char*>(row.data()),
              std::streamsize(row.size() * sizeof(float)));
  }
  if (!out) throw DataError("short write: " + path);
}

Image read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::string magic;
  int w = 0, h = 0;
  double scale = 0;
  in >> magic >> w >> h >> scale;
  in.get();  // single whitespace after scale
  if ((magic != "PF" && magic != "Pf") || w <= 0 || h <= 0)
    throw DataError("not a PFM file: " + path);
  if (scale > 0) throw DataError("big-endian PFM unsupported: " + path);
  const int c = magic == "PF" ? 3 : 1;
  Image img(h, w, c);
  std::vector<float> row(std::size_t(w) * c);
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()), std::streamsize(row.size() * sizeof(float)));
    if (!in) throw DataError("PFM truncated: " + path);
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) img.at(ch, y, x) = row[std::size_t(x) * c + ch];
  }
  return img;
}

namespace {

struct PngWriter {
  FILE* f = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (f) std::fclose(f);
  }
  void open(const std::string& path) {
    f = std::fopen(path.c_str(), "wb");
    if (!f) throw DataError("cannot open for write: " + path);
    png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) throw DataError("libpng init failed");
    png_init_io(png, f);
  }
};

}  // namespace

void write_png8(const std::string& path, const Image& img, double gamma) {
  if (img.c != 1 && img.c != 3) throw DataError("PNG8 supports 1 or 3 channels");
  PngWriter w;
  w.open(path);
  if (setjmp(png_jmpbuf(w.png))) throw DataError("libpng write failed: " + path);
  png_set_IHDR(w.png, w.info, png_uint_32(img.w), png_uint_32(img.h), 8,
               img.c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  std::vector<png_byte> row(std::size_t(img.w) * img.c);
  const double inv_g = 1.0 / gamma;
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < img.c; ++ch) {
        double v = std::clamp(double(img.at(ch, y, x)), 0.0, 1.0);
        v = std::pow(v, inv_g);
        row[std::size_t(x) * img.c + ch] = png_byte(std::lround(v * 255.0));
      }
    png_write_row(w.png, row.data());
  }
  png_write_end(w.png, nullptr);
}

void write_png16(const std::string& path, const std::vector<std::uint16_t>& grid, int h,
                 int w) {
  if (grid.size() != std::size_t(h) * w) throw DataError("PNG16 grid size mismatch");
  PngWriter wr;
  wr.open(path);
  if (setjmp(png_jmpbuf(wr.png))) throw DataError("libpng write failed: " + path);
  png_set_IHDR(wr.png, wr.info, png_uint_32(w), png_uint_32(h), 16, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(wr.png, wr.info);
  png_set_swap(wr.png);  // our buffers are little-endian
  std::vector<std::uint16_t> row(static_cast<std::size_t>(w), 0);
  for (int y = 0; y < h; ++y) {
    std::memcpy(row.data(), &grid[std::size_t(y) * w], std::size_t(w) * 2);
    png_write_row(wr.png, reinterpret_cast<png_bytep>(row.data()));
  }
  png_write_end(wr.png, nullptr);
}

void write_raw_f32(const std::string& path, const float* data, std::size_t count) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for write: " + path);
  out.write(reinterpret_cast<const char*>(data), std::streamsize(count * sizeof(float)));
  if (!out) throw DataError("short write: " + path);
}

std::vector<float> read_raw_f32(const std::string& path, std::size_t expect_count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::vector<float> v(expect_count);
  in.read(reinterpret_cast<char*>(v.data()), std::streamsize(expect_count * sizeof(float)));
  if (std::size_t(in.gcount()) != expect_count * sizeof(float))
    throw DataError("raw f32 payload truncated: " + path);
  return v;
}

void write_raw_u16(const std::string& path, const std::vector<std::uint16_t>& v) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for write: " + path);
  out.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * 2));
  if (!out) throw DataError("short write: " + path);
}

void write_raw_u8(const std::string& path, const std::vector<std::uint8_t>& v) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for write: " + path);
  out.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size()));
  if (!out) throw DataError("short write: " + path);
}

std::vector<std::uint8_t> read_raw_u8(const std::string& path, std::size_t expect_count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::vector<std::uint8_t> v(expect_count);
  in.read(reinterpret_cast<char*>(v.data()), std::streamsize(expect_count));
  if (std::size_t(in.gcount()) != expect_count)
    throw DataError("raw u8 payload truncated: " + path);
  return v;
}

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace rlpt::io
