// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "ugda/image.hpp"
#include "ugda/tensor.hpp"

namespace ugda {

struct SamplePair {
  std::string image_path;
  std::string mask_path;
  std::string id;  // shared filename stem
};

struct DiscoveryReport {
  std::vector<std::string> images_without_mask;
  std::vector<std::string> masks_without_image;
};

/// Scans root/images and root/masks, pairing files by stem. Unmatched files
/// go to the report (and stderr) and are excluded. Result sorted by id.
std::vector<SamplePair> discover_dataset(const std::string& root,
                                         DiscoveryReport* report = nullptr);

struct DatasetSplit {
  std::vector<SamplePair> train, val, test;
  std::uint64_t seed = 0;
};

/// Seeded shuffle, then 70/15/15: |train| = floor(0.7 n), |val| = ceil of
/// half the remainder, |test| = the rest. Needs n >= 3.
DatasetSplit split_dataset(std::vector<SamplePair> pairs, std::uint64_t seed);

/// Order-independent digest of the three membership lists.
std::uint64_t split_hash(const DatasetSplit& split);

/// 1 where raw > threshold else 0, as a (1,1,H,W) float tensor.
Tensor<float> binarize_mask(const ImageU8& raw, int threshold = 127);

inline constexpr double kChannelMean[3] = {0.485, 0.456, 0.406};
inline constexpr double kChannelStd[3] = {0.229, 0.224, 0.225};

struct PreprocessedExample {
  std::string id;
  Tensor<float> image;  // (1,3,S,S), unit-scaled then channel-normalized
  Tensor<float> mask;   // (1,1,S,S), values {0,1}
};

/// Deterministic resize + normalize in eval mode; training mode first applies
/// horizontal flip (p=0.5, image and mask together), brightness/contrast
/// jitter (p=0.3, image only), and Gaussian blur (p=0.2, image only).
/// Masks resize nearest-neighbor and binarize at 127.
PreprocessedExample preprocess(const SamplePair& pair, bool train_mode, std::mt19937_64& rng,
                               int side = 256);

/// Decode-and-resize cache so epochs beyond the first skip codec work.
class ExampleStore {
 public:
  explicit ExampleStore(int side) : side_(side) {}

  PreprocessedExample get(const SamplePair& pair, bool train_mode, std::mt19937_64& rng);
  int side() const { return side_; }

 private:
  const ImageU8& resized_image(const SamplePair& pair);
  const ImageU8& resized_mask(const SamplePair& pair);

  int side_;
  std::unordered_map<std::string, ImageU8> cache_;
};

struct Batch {
  Tensor<float> images;  // (B,3,S,S)
  Tensor<float> masks;   // (B,1,S,S)
  std::vector<std::string> ids;
};

Batch make_batch(const std::vector<PreprocessedExample>& examples);

}  // namespace ugda
