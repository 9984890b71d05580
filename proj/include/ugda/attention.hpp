// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <string>
#include <vector>

#include "ugda/layers.hpp"

namespace ugda {

/// U(x) = sigmoid(population std over channels), shape (N,1,H,W).
/// Std is nonnegative, so values land in [0.5, 1). Parameter-free.
template <typename S>
Var<S> uncertainty_map(Var<S> x);

/// Uncertainty-guided dual attention with residual fusion:
///   A = channel ⊗ spatial ⊗ (1 + U),  Y = X + gamma * (X ⊙ A).
template <typename S>
class UGDAModule {
 public:
  UGDAModule() = default;
  UGDAModule(const std::string& name, Index channels, Index reduction, std::mt19937_64& rng);

  /// GAP -> 1x1 conv (C -> C/r) -> ReLU -> 1x1 conv (C/r -> C) -> sigmoid.
  Var<S> channel_gate(Tape<S>& t, Var<S> x);

  /// concat(channel mean, channel max) -> 7x7 conv pad 3 -> sigmoid.
  Var<S> spatial_gate(Tape<S>& t, Var<S> x);

  Var<S> forward(Tape<S>& t, Var<S> x);

  void collect(std::vector<Parameter<S>*>& ps);

  Index channels() const { return reduce.weight.value.shape().c; }

  Conv2d<S> reduce;
  Conv2d<S> expand;
  Conv2d<S> spatial;
  Parameter<S> gamma;
};

}  // namespace ugda
