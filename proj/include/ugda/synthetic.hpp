// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "ugda/image.hpp"

namespace ugda {

struct SyntheticPair {
  ImageU8 image;  // RGB
  ImageU8 mask;   // gray, values {0, 255}
};

/// Renders green branching seedlings (stems 1-4 px wide with leaf blobs)
/// over a speckled brown tray background. The mask is the exact plant
/// support. Deterministic per (seed, side, n_plants).
SyntheticPair generate_synthetic_pair(std::uint64_t seed, int side, int n_plants);

/// Writes `count` pairs as root/images/synth_NNNN.png + root/masks/synth_NNNN.png,
/// with 1-3 plants per image drawn from the per-image stream.
void write_synthetic_dataset(const std::string& root, int count, int side, std::uint64_t seed);

}  // namespace ugda
