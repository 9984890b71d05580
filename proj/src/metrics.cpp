// SPDX-License-Identifier: Apache-2.0
#include "ugda/metrics.hpp"

#include <fstream>

#include "ugda/ops.hpp"

namespace ugda {

ConfusionCounts confusion(const float* pred, const float* gt, Index n) {
  ConfusionCounts c;
  for (Index i = 0; i < n; ++i) {
    const bool p = pred[i] > 0.5f;
    const bool g = gt[i] > 0.5f;
    if (p && g)
      ++c.tp;
    else if (p)
      ++c.fp;
    else if (g)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

double dice_from_counts(const ConfusionCounts& c) {
  const std::int64_t den = 2 * c.tp + c.fp + c.fn;
  return den == 0 ? 1.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(den);
}

double iou_from_counts(const ConfusionCounts& c) {
  const std::int64_t den = c.tp + c.fp + c.fn;
  return den == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(den);
}

double dice_score(const Tensor<float>& pred, const Tensor<float>& gt) {
  check_same_shape(pred.shape(), gt.shape(), "dice_score");
  return dice_from_counts(confusion(pred.data(), gt.data(), pred.size()));
}

double iou_score(const Tensor<float>& pred, const Tensor<float>& gt) {
  check_same_shape(pred.shape(), gt.shape(), "iou_score");
  return iou_from_counts(confusion(pred.data(), gt.data(), pred.size()));
}

Tensor<float> threshold_mask(const Tensor<float>& probs, double threshold) {
  Tensor<float> out(probs.shape());
  const float* p = probs.data();
  float* o = out.data();
  for (Index i = 0; i < probs.size(); ++i)
    o[i] = static_cast<double>(p[i]) > threshold ? 1.0f : 0.0f;
  return out;
}

MetricsRecord evaluate(SegModel<float>& model, const std::vector<PreprocessedExample>& examples,
                       double threshold) {
  check(!examples.empty(), "evaluate: empty example list");
  MetricsRecord rec;
  const Index chunk = 8;  // eval-mode BN makes chunking result-neutral
  for (std::size_t at = 0; at < examples.size(); at += chunk) {
    const std::size_t end = std::min(examples.size(), at + chunk);
    std::vector<PreprocessedExample> part(examples.begin() + at, examples.begin() + end);
    Batch batch = make_batch(part);
    Tape<float> tape(false);
    Var<float> x = tape.constant(std::move(batch.images));
    ModelOutputs<float> out = model.forward(tape, x, false);
    Tensor<float> probs = sigmoid_values(out.main_logits.value());
    const Index hw = probs.shape().h * probs.shape().w;
    for (Index i = 0; i < static_cast<Index>(part.size()); ++i) {
      Tensor<float> pm(1, 1, probs.shape().h, probs.shape().w);
      const float* pp = probs.image_ptr(i);
      for (Index j = 0; j < hw; ++j) pm.data()[j] = static_cast<double>(pp[j]) > threshold ? 1.0f : 0.0f;
      const ConfusionCounts c = confusion(pm.data(), part[i].mask.data(), hw);
      rec.per_image.push_back({part[i].id, dice_from_counts(c), iou_from_counts(c)});
    }
  }
  double sd = 0, si = 0;
  for (const auto& r : rec.per_image) {
    sd += r.dsc;
    si += r.iou;
  }
  rec.mean_dsc = sd / static_cast<double>(rec.per_image.size());
  rec.mean_iou = si / static_cast<double>(rec.per_image.size());
  return rec;
}

void write_metrics_csv(const std::string& path, const MetricsRecord& rec) {
  std::ofstream f(path);
  check(f.good(), "cannot write metrics file: " + path);
  f << "id,dsc,iou\n";
  char buf[64];
  for (const auto& r : rec.per_image) {
    std::snprintf(buf, sizeof(buf), "%.4f,%.4f", r.dsc, r.iou);
    f << r.id << "," << buf << "\n";
  }
  std::snprintf(buf, sizeof(buf), "%.4f,%.4f", rec.mean_dsc, rec.mean_iou);
  f << "mean," << buf << "\n";
}

}  // namespace ugda
