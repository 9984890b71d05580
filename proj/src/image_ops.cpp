// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "ugda/image.hpp"

namespace ugda {
namespace {

std::uint8_t clamp_u8(double v) {
  return static_cast<std::uint8_t>(std::min(255.0, std::max(0.0, std::round(v))));
}

}  // namespace

ImageU8 resize_bilinear(const ImageU8& src, int out_w, int out_h) {
  if (src.empty()) throw std::runtime_error("resize_bilinear: empty image");
  if (src.width == out_w && src.height == out_h) return src;
  ImageU8 dst(out_w, out_h, src.channels);
  const double sx = static_cast<double>(src.width) / out_w;
  const double sy = static_cast<double>(src.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::max(0.0, std::min(fy, static_cast<double>(src.height - 1)));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::max(0.0, std::min(fx, static_cast<double>(src.width - 1)));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < src.channels; ++c) {
        const double top = src.at(y0, x0, c) + wx * (src.at(y0, x1, c) - src.at(y0, x0, c));
        const double bot = src.at(y1, x0, c) + wx * (src.at(y1, x1, c) - src.at(y1, x0, c));
        dst.at(y, x, c) = clamp_u8(top + wy * (bot - top));
      }
    }
  }
  return dst;
}

ImageU8 resize_nearest(const ImageU8& src, int out_w, int out_h) {
  if (src.empty()) throw std::runtime_error("resize_nearest: empty image");
  if (src.width == out_w && src.height == out_h) return src;
  ImageU8 dst(out_w, out_h, src.channels);
  for (int y = 0; y < out_h; ++y) {
    const int sy = std::min(src.height - 1,
                            static_cast<int>((y + 0.5) * src.height / out_h));
    for (int x = 0; x < out_w; ++x) {
      const int sx = std::min(src.width - 1,
                              static_cast<int>((x + 0.5) * src.width / out_w));
      for (int c = 0; c < src.channels; ++c) dst.at(y, x, c) = src.at(sy, sx, c);
    }
  }
  return dst;
}

void hflip_inplace(ImageU8& img) {
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width / 2; ++x)
      for (int c = 0; c < img.channels; ++c)
        std::swap(img.at(y, x, c), img.at(y, img.width - 1 - x, c));
}

ImageU8 gaussian_blur(const ImageU8& src, int ksize, double sigma) {
  if (src.empty()) throw std::runtime_error("gaussian_blur: empty image");
  if (ksize % 2 == 0 || ksize < 1) throw std::runtime_error("gaussian_blur: kernel must be odd");
  const int r = ksize / 2;
  std::vector<double> kernel(static_cast<std::size_t>(ksize));
  double sum = 0;
  for (int i = -r; i <= r; ++i) {
    kernel[i + r] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += kernel[i + r];
  }
  for (double& k : kernel) k /= sum;

  // Separable passes with edge clamping.
  std::vector<double> tmp(src.pixels.size());
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < src.channels; ++c) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) {
          const int xx = std::min(src.width - 1, std::max(0, x + i));
          acc += kernel[i + r] * src.at(y, xx, c);
        }
        tmp[(static_cast<std::size_t>(y) * src.width + x) * src.channels + c] = acc;
      }
  ImageU8 dst(src.width, src.height, src.channels);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < src.channels; ++c) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) {
          const int yy = std::min(src.height - 1, std::max(0, y + i));
          acc += kernel[i + r] * tmp[(static_cast<std::size_t>(yy) * src.width + x) * src.channels + c];
        }
        dst.at(y, x, c) = clamp_u8(acc);
      }
  return dst;
}

}  // namespace ugda
