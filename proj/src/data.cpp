// SPDX-License-Identifier: Apache-2.0
#include "ugda/data.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <iostream>
#include <map>
#include <stdexcept>

#include "ugda/rng.hpp"

namespace fs = std::filesystem;

namespace ugda {
namespace {

bool has_image_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e == ".png" || e == ".jpg" || e == ".jpeg";
}

std::map<std::string, std::string> scan_stems(const fs::path& dir) {
  if (!fs::is_directory(dir))
    throw std::invalid_argument("dataset directory missing: " + dir.string());
  std::map<std::string, std::string> stems;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || !has_image_ext(entry.path())) continue;
    stems[entry.path().stem().string()] = entry.path().string();
  }
  return stems;
}

ImageU8 to_rgb(const ImageU8& img) {
  if (img.channels == 3) return img;
  ImageU8 out(img.width, img.height, 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, x, 0);
  return out;
}

ImageU8 to_gray(const ImageU8& img) {
  if (img.channels == 1) return img;
  ImageU8 out(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) out.at(y, x, 0) = img.at(y, x, 0);
  return out;
}

/// Augments (train mode) and normalizes already-resized planes.
PreprocessedExample finish_preprocess(const std::string& id, ImageU8 img, ImageU8 mask,
                                      bool train_mode, std::mt19937_64& rng) {
  if (train_mode) {
    if (uniform01(rng) < 0.5) {
      hflip_inplace(img);
      hflip_inplace(mask);
    }
    if (uniform01(rng) < 0.3) {
      const double contrast = uniform(rng, 0.8, 1.2);
      const double bright = uniform(rng, -0.2, 0.2) * 255.0;
      for (auto& v : img.pixels)
        v = static_cast<std::uint8_t>(std::clamp(v * contrast + bright, 0.0, 255.0));
    }
    if (uniform01(rng) < 0.2) {
      const int k = 3 + 2 * static_cast<int>(uniform_index(rng, 3));  // 3, 5 or 7
      img = gaussian_blur(img, k, uniform(rng, 0.1, 2.0));
    }
  }

  const int S = img.width;
  PreprocessedExample out;
  out.id = id;
  out.image = Tensor<float>(1, 3, S, S);
  for (int c = 0; c < 3; ++c) {
    float* plane = out.image.data() + static_cast<Index>(c) * S * S;
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x)
        plane[y * S + x] = static_cast<float>(
            (img.at(y, x, c) / 255.0 - kChannelMean[c]) / kChannelStd[c]);
  }
  out.mask = binarize_mask(mask);
  return out;
}

}  // namespace

std::vector<SamplePair> discover_dataset(const std::string& root, DiscoveryReport* report) {
  const auto images = scan_stems(fs::path(root) / "images");
  const auto masks = scan_stems(fs::path(root) / "masks");
  std::vector<SamplePair> pairs;
  DiscoveryReport local;
  for (const auto& [stem, path] : images) {
    auto it = masks.find(stem);
    if (it == masks.end()) {
      local.images_without_mask.push_back(path);
      continue;
    }
    pairs.push_back({path, it->second, stem});
  }
  for (const auto& [stem, path] : masks)
    if (!images.count(stem)) local.masks_without_image.push_back(path);
  for (const auto& p : local.images_without_mask)
    std::cerr << "warning: image without mask, skipped: " << p << "\n";
  for (const auto& p : local.masks_without_image)
    std::cerr << "warning: mask without image, skipped: " << p << "\n";
  if (report) *report = std::move(local);
  // std::map iteration already sorted by stem
  return pairs;
}

DatasetSplit split_dataset(std::vector<SamplePair> pairs, std::uint64_t seed) {
  const std::size_t n = pairs.size();
  check(n >= 3, "split: need at least 3 pairs, got " + std::to_string(n));
  std::mt19937_64 rng(mix_seed(seed, 0x5B117));
  shuffle_inplace(pairs, rng);
  const std::size_t n_train = static_cast<std::size_t>(0.70 * static_cast<double>(n));
  const std::size_t rem = n - n_train;
  const std::size_t n_val = (rem + 1) / 2;
  DatasetSplit split;
  split.seed = seed;
  split.train.assign(pairs.begin(), pairs.begin() + n_train);
  split.val.assign(pairs.begin() + n_train, pairs.begin() + n_train + n_val);
  split.test.assign(pairs.begin() + n_train + n_val, pairs.end());
  return split;
}

std::uint64_t split_hash(const DatasetSplit& split) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto eat = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
  };
  for (const auto* part : {&split.train, &split.val, &split.test}) {
    eat("#");
    for (const auto& p : *part) {
      eat(p.id);
      eat("|");
    }
  }
  return h;
}

Tensor<float> binarize_mask(const ImageU8& raw, int threshold) {
  check(raw.channels == 1, "binarize_mask: expected single-channel input");
  Tensor<float> out(1, 1, raw.height, raw.width);
  float* p = out.data();
  for (std::size_t i = 0; i < raw.pixels.size(); ++i)
    p[i] = raw.pixels[i] > threshold ? 1.0f : 0.0f;
  return out;
}

PreprocessedExample preprocess(const SamplePair& pair, bool train_mode, std::mt19937_64& rng,
                               int side) {
  ImageU8 img = to_rgb(read_image(pair.image_path));
  ImageU8 mask = to_gray(read_image(pair.mask_path));
  check(img.width == mask.width && img.height == mask.height,
        "preprocess: image and mask sizes differ for id " + pair.id);
  return finish_preprocess(pair.id, resize_bilinear(img, side, side),
                           resize_nearest(mask, side, side), train_mode, rng);
}

const ImageU8& ExampleStore::resized_image(const SamplePair& pair) {
  const std::string key = "i:" + pair.image_path;
  auto it = cache_.find(key);
  if (it == cache_.end())
    it = cache_.emplace(key, resize_bilinear(to_rgb(read_image(pair.image_path)), side_, side_))
             .first;
  return it->second;
}

const ImageU8& ExampleStore::resized_mask(const SamplePair& pair) {
  const std::string key = "m:" + pair.mask_path;
  auto it = cache_.find(key);
  if (it == cache_.end())
    it = cache_.emplace(key, resize_nearest(to_gray(read_image(pair.mask_path)), side_, side_))
             .first;
  return it->second;
}

PreprocessedExample ExampleStore::get(const SamplePair& pair, bool train_mode,
                                      std::mt19937_64& rng) {
  return finish_preprocess(pair.id, resized_image(pair), resized_mask(pair), train_mode, rng);
}

Batch make_batch(const std::vector<PreprocessedExample>& examples) {
  check(!examples.empty(), "make_batch: empty example list");
  const Shape is = examples[0].image.shape();
  const Shape ms = examples[0].mask.shape();
  const Index B = static_cast<Index>(examples.size());
  Batch b;
  b.images = Tensor<float>(B, is.c, is.h, is.w);
  b.masks = Tensor<float>(B, ms.c, ms.h, ms.w);
  for (Index i = 0; i < B; ++i) {
    check_same_shape(examples[i].image.shape(), is, "make_batch images");
    check_same_shape(examples[i].mask.shape(), ms, "make_batch masks");
    std::copy_n(examples[i].image.data(), examples[i].image.size(), b.images.image_ptr(i));
    std::copy_n(examples[i].mask.data(), examples[i].mask.size(), b.masks.image_ptr(i));
    b.ids.push_back(examples[i].id);
  }
  return b;
}

}  // namespace ugda
