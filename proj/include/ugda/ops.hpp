// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ugda/autograd.hpp"
#include "ugda/tensor.hpp"

namespace ugda {

// Differentiable free functions over tape variables. Binary ops broadcast
// NumPy-style across the four axes (each axis equal or 1); gradients are
// sum-reduced back over the broadcast axes.

template <typename S> Var<S> add(Var<S> a, Var<S> b);
template <typename S> Var<S> mul(Var<S> a, Var<S> b);
template <typename S> Var<S> add_const(Var<S> x, S c);
template <typename S> Var<S> mul_const(Var<S> x, S c);
template <typename S> Var<S> relu(Var<S> x);
template <typename S> Var<S> sigmoid(Var<S> x);
template <typename S> Var<S> sum_all(Var<S> x);

/// 2-D convolution, NCHW. `w` is (Cout,Cin,kh,kw); `bias`, when valid,
/// is (1,Cout,1,1). Zero padding, floor output size.
template <typename S> Var<S> conv2d(Var<S> x, Var<S> w, Var<S> bias, int stride, int pad);

/// Max pooling with implicit -inf padding (padded positions never win).
template <typename S> Var<S> max_pool(Var<S> x, int k, int stride, int pad);

template <typename S> Var<S> global_avg_pool(Var<S> x);   // (N,C,H,W) -> (N,C,1,1)
template <typename S> Var<S> channel_mean(Var<S> x);      // (N,C,H,W) -> (N,1,H,W)
template <typename S> Var<S> channel_max(Var<S> x);       // (N,C,H,W) -> (N,1,H,W)

/// Population standard deviation over the channel axis (divide by C).
/// Requires C >= 2.
template <typename S> Var<S> channel_std(Var<S> x);

template <typename S> Var<S> concat_channels(Var<S> a, Var<S> b);

/// Bilinear resize, half-pixel centers (align_corners=false convention).
template <typename S> Var<S> upsample_bilinear(Var<S> x, Index out_h, Index out_w);

/// Batch normalization over (N,H,W) per channel; `gamma`/`beta` are (1,C,1,1).
/// Training mode normalizes with batch statistics (biased variance) and
/// updates the running buffers in place: new = (1-momentum)*old + momentum*batch,
/// with the unbiased variance going into `running_var`. Eval mode normalizes
/// with the running buffers.
template <typename S>
Var<S> batch_norm(Var<S> x, Var<S> gamma, Var<S> beta, Tensor<S>& running_mean,
                  Tensor<S>& running_var, bool training, S momentum, S eps);

/// Mean over all elements of `weights * bce(logits, target)`, computed from
/// logits in the log-sum-exp stable form. `target` and `weights` are
/// non-differentiable tape constants; invalid `weights` means all-ones.
template <typename S> Var<S> bce_with_logits(Var<S> logits, Var<S> target, Var<S> weights);

/// Batch-aggregated soft Dice loss: 1 - (2*sum(p*g)+smooth)/(sum(p)+sum(g)+smooth).
template <typename S> Var<S> soft_dice_loss(Var<S> probs, Var<S> target, S smooth);

// Tensor-level (non-differentiable) helpers.
template <typename S> Tensor<S> sigmoid_values(const Tensor<S>& x);

}  // namespace ugda
