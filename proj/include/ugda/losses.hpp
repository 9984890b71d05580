// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ugda/autograd.hpp"
#include "ugda/ops.hpp"

namespace ugda {

struct LossConfig {
  double beta = 0.3;
  double lambda_bce = 0.7;
  double lambda_dice = 0.3;
  int warmup_epochs = 3;
  double prob_clamp_eps = 1e-7;
  double dice_smooth = 1.0;
};

/// Binary entropy in bits, elementwise: H = -(p*log2 p + (1-p)*log2(1-p)),
/// with p clamped to [eps, 1-eps]. H(0.5) = 1, H(0) = H(1) ~ 0.
template <typename S>
Tensor<S> pixel_entropy(const Tensor<S>& p, double eps = 1e-7);

/// W = 1 + beta * pixel_entropy(p); values in [1, 1+beta]. The map is a
/// plain tensor, so no gradient ever flows through it.
template <typename S>
Tensor<S> entropy_weight_map(const Tensor<S>& p, double beta, double eps = 1e-7);

/// Mean of W_i * BCE_i from logits; `weights` null means all-ones.
template <typename S>
Var<S> weighted_bce(Var<S> logits, const Tensor<S>& target, const Tensor<S>* weights);

/// Batch-aggregated soft Dice on probabilities.
template <typename S>
Var<S> dice_loss(Var<S> probs, const Tensor<S>& target, double smooth);

/// lambda_bce * entropy-weighted BCE + lambda_dice * Dice, with the weight
/// map computed from detached sigmoid(logits).
template <typename S>
Var<S> hybrid_loss(Var<S> logits, const Tensor<S>& target, const LossConfig& cfg);

enum class LossKind { plain_bce, hybrid };

/// Warm-up schedule: plain BCE for epochs [0, warmup_epochs), hybrid after.
/// Zero-based epochs; the same selection applies to main and aux heads.
inline LossKind active_loss(int epoch, const LossConfig& cfg) {
  return epoch < cfg.warmup_epochs ? LossKind::plain_bce : LossKind::hybrid;
}

template <typename S>
Var<S> compute_loss(Var<S> logits, const Tensor<S>& target, LossKind kind, const LossConfig& cfg);

}  // namespace ugda
