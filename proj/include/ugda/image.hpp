// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ugda {

/// Interleaved 8-bit image, row-major. channels is 1 (gray) or 3 (RGB).
struct ImageU8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  ImageU8() = default;
  ImageU8(int w, int h, int c)
      : width(w), height(h), channels(c),
        pixels(static_cast<std::size_t>(w) * h * c, 0) {}

  std::uint8_t& at(int y, int x, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool empty() const { return pixels.empty(); }
};

/// Decodes a PNG or JPEG file (sniffed by magic bytes) to 8-bit gray or RGB.
/// Throws std::runtime_error with the path on any decode failure.
ImageU8 read_image(const std::string& path);

void write_png(const std::string& path, const ImageU8& img);

// Resampling and filtering used by preprocessing and the synthetic generator.
ImageU8 resize_bilinear(const ImageU8& src, int out_w, int out_h);
ImageU8 resize_nearest(const ImageU8& src, int out_w, int out_h);
void hflip_inplace(ImageU8& img);
ImageU8 gaussian_blur(const ImageU8& src, int ksize, double sigma);

}  // namespace ugda
