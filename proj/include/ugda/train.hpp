// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ugda/data.hpp"
#include "ugda/deep_supervision.hpp"
#include "ugda/losses.hpp"
#include "ugda/metrics.hpp"
#include "ugda/models.hpp"
#include "ugda/optim.hpp"

namespace ugda {

struct TrainConfig {
  int epochs = 40;
  int batch_size = 16;
  double learning_rate = 1e-4;
  double weight_decay = 1e-2;
  bool mixed_precision = false;  // accepted but inert in this CPU build
  std::uint64_t seed = 42;
  int side = 256;
  LossConfig loss;
  DSConfig ds;
};

struct TrainingRecord {
  struct EpochRow {
    int epoch;
    double train_loss;
    double val_dice;
    double val_iou;
  };
  std::vector<EpochRow> epochs;
  int best_epoch = -1;
  double best_val_dice = 0.0;
  std::string checkpoint_path;
};

/// One optimizer step on one batch: forward in train mode, warm-up-aware
/// main (+ weighted aux) loss, backward, AdamW update. Returns the total
/// loss at the pre-step parameters.
double train_step(SegModel<float>& model, const Batch& batch, int epoch, const TrainConfig& cfg,
                  AdamW<float>& opt);

/// Full protocol: seeded shuffling, per-example augmentation streams,
/// per-epoch validation at threshold 0.5, checkpoint on strict val-Dice
/// improvement, line-delimited JSON log in `run_dir`. Aborts on non-finite
/// loss with the epoch and batch index.
TrainingRecord fit(SegModel<float>& model, const DatasetSplit& split, const TrainConfig& cfg,
                   const std::string& run_dir);

}  // namespace ugda
