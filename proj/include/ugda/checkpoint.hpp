// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "ugda/models.hpp"

namespace ugda {

struct CheckpointMeta {
  VariantConfig variant;
  int epoch = 0;
  double best_val_dice = 0.0;
};

/// `{backbone}_{variant}_best.ckpt`
std::string checkpoint_name(const std::string& backbone, const std::string& variant_token);

/// Binary format: magic, JSON header (variant, epoch, best dice, named
/// parameter/buffer shapes), then one float32 blob in header order.
void save_checkpoint(const std::string& path, SegModel<float>& model, const CheckpointMeta& meta);

/// Header only; use it to construct a matching model before load_checkpoint.
CheckpointMeta read_checkpoint_meta(const std::string& path);

/// Restores parameters and buffers into `model`. Names and shapes must match
/// the file exactly.
CheckpointMeta load_checkpoint(const std::string& path, SegModel<float>& model);

}  // namespace ugda
