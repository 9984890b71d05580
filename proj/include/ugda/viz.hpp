// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ugda/image.hpp"
#include "ugda/tensor.hpp"

namespace ugda {

/// Error overlay: true positives green (0,255,0), false positives red
/// (255,0,0), false negatives blue (0,0,255), true negatives the
/// denormalized input pixel. `image` is a normalized (1,3,S,S) tensor;
/// `pred` and `gt` are {0,1} masks of matching spatial size.
ImageU8 render_overlay(const Tensor<float>& image, const Tensor<float>& pred,
                       const Tensor<float>& gt);

/// Per-pixel binary entropy of `probs` (1,1,S,S), mapped linearly from
/// (0,0,255) at H=0 to (255,0,0) at H=1.
ImageU8 render_entropy_heatmap(const Tensor<float>& probs);

/// Inverts the channel normalization back to 8-bit RGB.
ImageU8 denormalize_image(const Tensor<float>& image);

}  // namespace ugda
