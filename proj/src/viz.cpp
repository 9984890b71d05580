// SPDX-License-Identifier: Apache-2.0
#include "ugda/viz.hpp"

#include <algorithm>
#include <cmath>

#include "ugda/data.hpp"
#include "ugda/losses.hpp"

namespace ugda {

ImageU8 denormalize_image(const Tensor<float>& image) {
  const Shape& s = image.shape();
  check(s.n == 1 && s.c == 3, "denormalize_image: expected (1,3,H,W), got " + s.str());
  ImageU8 out(static_cast<int>(s.w), static_cast<int>(s.h), 3);
  for (Index c = 0; c < 3; ++c) {
    const float* plane = image.data() + c * s.h * s.w;
    for (Index y = 0; y < s.h; ++y)
      for (Index x = 0; x < s.w; ++x) {
        const double v =
            (static_cast<double>(plane[y * s.w + x]) * kChannelStd[c] + kChannelMean[c]) * 255.0;
        out.at(static_cast<int>(y), static_cast<int>(x), static_cast<int>(c)) =
            static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
      }
  }
  return out;
}

ImageU8 render_overlay(const Tensor<float>& image, const Tensor<float>& pred,
                       const Tensor<float>& gt) {
  check_same_shape(pred.shape(), gt.shape(), "render_overlay masks");
  const Shape& ms = pred.shape();
  check(image.shape().h == ms.h && image.shape().w == ms.w,
        "render_overlay: image and mask sizes differ");
  ImageU8 out = denormalize_image(image);
  const float* pp = pred.data();
  const float* pg = gt.data();
  for (Index y = 0; y < ms.h; ++y)
    for (Index x = 0; x < ms.w; ++x) {
      const bool p = pp[y * ms.w + x] > 0.5f;
      const bool g = pg[y * ms.w + x] > 0.5f;
      if (!p && !g) continue;
      std::uint8_t r = 0, gr = 0, b = 0;
      if (p && g)
        gr = 255;  // true positive
      else if (p)
        r = 255;  // false positive
      else
        b = 255;  // false negative
      out.at(static_cast<int>(y), static_cast<int>(x), 0) = r;
      out.at(static_cast<int>(y), static_cast<int>(x), 1) = gr;
      out.at(static_cast<int>(y), static_cast<int>(x), 2) = b;
    }
  return out;
}

ImageU8 render_entropy_heatmap(const Tensor<float>& probs) {
  const Shape& s = probs.shape();
  check(s.n == 1 && s.c == 1, "render_entropy_heatmap: expected (1,1,H,W), got " + s.str());
  const Tensor<float> h = pixel_entropy(probs);
  ImageU8 out(static_cast<int>(s.w), static_cast<int>(s.h), 3);
  for (Index y = 0; y < s.h; ++y)
    for (Index x = 0; x < s.w; ++x) {
      const double e = std::clamp(static_cast<double>(h.data()[y * s.w + x]), 0.0, 1.0);
      out.at(static_cast<int>(y), static_cast<int>(x), 0) =
          static_cast<std::uint8_t>(std::round(255.0 * e));
      out.at(static_cast<int>(y), static_cast<int>(x), 1) = 0;
      out.at(static_cast<int>(y), static_cast<int>(x), 2) =
          static_cast<std::uint8_t>(std::round(255.0 * (1.0 - e)));
    }
  return out;
}

}  // namespace ugda
