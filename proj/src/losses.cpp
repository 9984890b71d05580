// SPDX-License-Identifier: Apache-2.0
#include "ugda/losses.hpp"

#include <cmath>

namespace ugda {

template <typename S>
Tensor<S> pixel_entropy(const Tensor<S>& p, double eps) {
  Tensor<S> h(p.shape());
  const S* pp = p.data();
  S* ph = h.data();
  constexpr double inv_log2 = 1.4426950408889634;  // 1/ln 2
  for (Index i = 0; i < p.size(); ++i) {
    const double q = std::min(1.0 - eps, std::max(eps, static_cast<double>(pp[i])));
    ph[i] = static_cast<S>(-(q * std::log(q) + (1.0 - q) * std::log(1.0 - q)) * inv_log2);
  }
  return h;
}

template <typename S>
Tensor<S> entropy_weight_map(const Tensor<S>& p, double beta, double eps) {
  check(beta >= 0, "entropy_weight_map: beta must be nonnegative");
  Tensor<S> w = pixel_entropy(p, eps);
  w.flat() = w.flat() * static_cast<S>(beta) + S(1);
  return w;
}

template <typename S>
Var<S> weighted_bce(Var<S> logits, const Tensor<S>& target, const Tensor<S>* weights) {
  Tape<S>& t = *logits.tape;
  Var<S> tv = t.constant(target);
  Var<S> wv = weights ? t.constant(*weights) : Var<S>{};
  return bce_with_logits(logits, tv, wv);
}

template <typename S>
Var<S> dice_loss(Var<S> probs, const Tensor<S>& target, double smooth) {
  Tape<S>& t = *probs.tape;
  return soft_dice_loss(probs, t.constant(target), static_cast<S>(smooth));
}

template <typename S>
Var<S> hybrid_loss(Var<S> logits, const Tensor<S>& target, const LossConfig& cfg) {
  const Tensor<S> probs_detached = sigmoid_values(logits.value());
  const Tensor<S> w = entropy_weight_map(probs_detached, cfg.beta, cfg.prob_clamp_eps);
  Var<S> wbce = weighted_bce(logits, target, &w);
  Var<S> dice = dice_loss(sigmoid(logits), target, cfg.dice_smooth);
  return add(mul_const(wbce, static_cast<S>(cfg.lambda_bce)),
             mul_const(dice, static_cast<S>(cfg.lambda_dice)));
}

template <typename S>
Var<S> compute_loss(Var<S> logits, const Tensor<S>& target, LossKind kind, const LossConfig& cfg) {
  if (kind == LossKind::plain_bce)
    return weighted_bce(logits, target, static_cast<const Tensor<S>*>(nullptr));
  return hybrid_loss(logits, target, cfg);
}

#define UGDA_INSTANTIATE_LOSSES(S)                                                    \
  template Tensor<S> pixel_entropy<S>(const Tensor<S>&, double);                      \
  template Tensor<S> entropy_weight_map<S>(const Tensor<S>&, double, double);         \
  template Var<S> weighted_bce<S>(Var<S>, const Tensor<S>&, const Tensor<S>*);        \
  template Var<S> dice_loss<S>(Var<S>, const Tensor<S>&, double);                     \
  template Var<S> hybrid_loss<S>(Var<S>, const Tensor<S>&, const LossConfig&);        \
  template Var<S> compute_loss<S>(Var<S>, const Tensor<S>&, LossKind, const LossConfig&);

UGDA_INSTANTIATE_LOSSES(float)
UGDA_INSTANTIATE_LOSSES(double)

#undef UGDA_INSTANTIATE_LOSSES

}  // namespace ugda
