// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ugda/train.hpp"

namespace ugda {

struct RunManifest {
  std::string data_root;    // empty -> generate synthetic data under out_dir
  int synthetic_count = 64;
  std::vector<std::string> backbones = {"unet", "linknet"};
  std::vector<std::string> variants = {"baseline", "loss", "attn", "ds", "full"};
  TrainConfig train;
  std::string out_dir = "runs";
  int viz_count = 3;  // fixed leading sample set from the test split
};

/// Presets: "desk" = 64 synthetic images, side 128, 5 epochs, warm-up 1;
/// "paper" = side 256, 40 epochs, batch 16, lr 1e-4, warm-up 3.
void apply_preset(RunManifest& manifest, const std::string& preset);

struct RunResult {
  std::string backbone;
  std::string variant_token;
  std::string display;
  bool ok = false;
  std::string error;
  double dsc = 0.0;
  double iou = 0.0;
  std::uint64_t split_digest = 0;
};

struct AblationResults {
  std::vector<RunResult> rows;
  std::uint64_t split_digest = 0;
  bool any_failed = false;
};

/// Trains and evaluates every (backbone, variant) pair on one shared split,
/// continuing past per-run failures. Writes per-run logs, checkpoints and
/// viz under out_dir, plus the aggregate outputs below.
AblationResults run_ablation(const RunManifest& manifest);

/// results.csv, results.txt and run_summary.json (rows plus split digest).
void write_ablation_outputs(const std::string& out_dir, const AblationResults& results);

/// CSV rows `backbone,variant,dsc,iou` at 4 decimals, successful runs only.
std::string format_table_csv(const std::vector<RunResult>& rows);

/// Aligned text table; the top-DSC row per backbone is starred, ties broken
/// by variant declaration order. Failed runs are listed below the table.
std::string format_table_text(const std::vector<RunResult>& rows);

}  // namespace ugda
