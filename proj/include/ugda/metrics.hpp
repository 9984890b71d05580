// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ugda/data.hpp"
#include "ugda/models.hpp"

namespace ugda {

struct ConfusionCounts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

/// Pixel confusion between two {0,1} masks of equal length.
ConfusionCounts confusion(const float* pred, const float* gt, Index n);

double dice_from_counts(const ConfusionCounts& c);  // empty/empty -> 1.0
double iou_from_counts(const ConfusionCounts& c);   // empty/empty -> 1.0

/// Per-mask scores; shapes must match, values in {0,1}.
double dice_score(const Tensor<float>& pred, const Tensor<float>& gt);
double iou_score(const Tensor<float>& pred, const Tensor<float>& gt);

struct MetricsRecord {
  struct Row {
    std::string id;
    double dsc = 0;
    double iou = 0;
  };
  std::vector<Row> per_image;
  double mean_dsc = 0;
  double mean_iou = 0;
};

/// Eval-mode pass over examples: threshold sigmoid(main logits), score each
/// image, average. Fatal on an empty example list.
MetricsRecord evaluate(SegModel<float>& model, const std::vector<PreprocessedExample>& examples,
                       double threshold = 0.5);

/// (B,1,H,W) probabilities -> per-image {0,1} masks at `threshold`.
Tensor<float> threshold_mask(const Tensor<float>& probs, double threshold);

void write_metrics_csv(const std::string& path, const MetricsRecord& rec);

}  // namespace ugda
