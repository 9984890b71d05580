// SPDX-License-Identifier: Apache-2.0
#include "ugda/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "ugda/rng.hpp"

namespace ugda {
namespace {

struct Rgb {
  std::uint8_t r, g, b;
};

void stamp_disc(ImageU8& img, ImageU8& mask, double cx, double cy, double radius, Rgb color) {
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(cx + radius)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(cy + radius)));
  const double r2 = radius * radius;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - cx, dy = y - cy;
      if (dx * dx + dy * dy > r2) continue;
      img.at(y, x, 0) = color.r;
      img.at(y, x, 1) = color.g;
      img.at(y, x, 2) = color.b;
      mask.at(y, x, 0) = 255;
    }
}

void draw_stem(ImageU8& img, ImageU8& mask, std::mt19937_64& rng, double x, double y,
               double angle, double length, double base_radius, Rgb color, int depth) {
  const int steps = std::max(4, static_cast<int>(length));
  for (int s = 0; s < steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    const double radius = std::max(0.5, base_radius * (1.0 - 0.5 * t));
    stamp_disc(img, mask, x, y, radius, color);
    angle += uniform(rng, -0.15, 0.15);
    x += std::cos(angle);
    y += std::sin(angle);
    if (x < 1 || y < 1 || x > img.width - 2 || y > img.height - 2) break;
    // occasional side branch, shorter and thinner
    if (depth > 0 && s > steps / 3 && uniform01(rng) < 0.04) {
      const double side = uniform01(rng) < 0.5 ? 1.0 : -1.0;
      draw_stem(img, mask, rng, x, y, angle + side * uniform(rng, 0.5, 1.1), length * 0.35,
                base_radius * 0.7, color, depth - 1);
    }
  }
  // leaf blob at the tip
  const Rgb leaf{static_cast<std::uint8_t>(std::max(30.0, color.r * 0.8)),
                 static_cast<std::uint8_t>(std::min(255.0, color.g * 1.1)),
                 static_cast<std::uint8_t>(std::max(20.0, color.b * 0.8))};
  if (x >= 1 && y >= 1 && x <= img.width - 2 && y <= img.height - 2)
    stamp_disc(img, mask, x, y, uniform(rng, 1.0, 3.0), leaf);
}

}  // namespace

SyntheticPair generate_synthetic_pair(std::uint64_t seed, int side, int n_plants) {
  if (side < 32) throw std::invalid_argument("synthetic pair: side must be >= 32");
  if (n_plants < 1) throw std::invalid_argument("synthetic pair: n_plants must be >= 1");

  std::mt19937_64 rng(mix_seed(seed, 0x5EEDD,
                               static_cast<std::uint64_t>(side) * 131 + static_cast<std::uint64_t>(n_plants)));
  SyntheticPair out;
  out.image = ImageU8(side, side, 3);
  out.mask = ImageU8(side, side, 1);

  // speckled brown soil with a mild vertical shading gradient
  for (int y = 0; y < side; ++y) {
    const double shade = 1.0 - 0.15 * y / side;
    for (int x = 0; x < side; ++x) {
      const double n = uniform(rng, -22.0, 22.0);
      out.image.at(y, x, 0) = static_cast<std::uint8_t>(std::clamp(118.0 * shade + n, 0.0, 255.0));
      out.image.at(y, x, 1) = static_cast<std::uint8_t>(std::clamp(86.0 * shade + n, 0.0, 255.0));
      out.image.at(y, x, 2) = static_cast<std::uint8_t>(std::clamp(54.0 * shade + n * 0.7, 0.0, 255.0));
    }
  }

  // container rectangle outline
  const int inset = std::max(2, side / 24);
  const int thick = std::max(1, side / 64);
  for (int y = inset; y < side - inset; ++y)
    for (int x = inset; x < side - inset; ++x) {
      const bool edge = y < inset + thick || y >= side - inset - thick || x < inset + thick ||
                        x >= side - inset - thick;
      if (!edge) continue;
      out.image.at(y, x, 0) = 62;
      out.image.at(y, x, 1) = 50;
      out.image.at(y, x, 2) = 40;
    }

  for (int p = 0; p < n_plants; ++p) {
    const Rgb green{static_cast<std::uint8_t>(uniform(rng, 55.0, 105.0)),
                    static_cast<std::uint8_t>(uniform(rng, 145.0, 205.0)),
                    static_cast<std::uint8_t>(uniform(rng, 40.0, 90.0))};
    const double x0 = uniform(rng, side * 0.25, side * 0.75);
    const double y0 = uniform(rng, side * 0.70, side * 0.88);
    const double length = uniform(rng, side * 0.30, side * 0.50);
    const double radius = uniform(rng, 0.6, 2.0);  // stem width 1-4 px
    const double angle = -1.5707963267948966 + uniform(rng, -0.3, 0.3);
    draw_stem(out.image, out.mask, rng, x0, y0, angle, length, radius, green, 2);
  }
  return out;
}

void write_synthetic_dataset(const std::string& root, int count, int side, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("synthetic dataset: count must be >= 1");
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(root) / "images");
  fs::create_directories(fs::path(root) / "masks");
  for (int i = 0; i < count; ++i) {
    std::mt19937_64 pick(mix_seed(seed, 0x9B1CBull, static_cast<std::uint64_t>(i)));
    const int n_plants = 1 + static_cast<int>(uniform_index(pick, 3));
    SyntheticPair pair = generate_synthetic_pair(mix_seed(seed, static_cast<std::uint64_t>(i)),
                                                 side, n_plants);
    char name[32];
    std::snprintf(name, sizeof(name), "synth_%04d.png", i);
    write_png((fs::path(root) / "images" / name).string(), pair.image);
    write_png((fs::path(root) / "masks" / name).string(), pair.mask);
  }
}

}  // namespace ugda
