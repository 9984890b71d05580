// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "ugda/autograd.hpp"

namespace ugda {

struct OptimConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

/// Adam with decoupled weight decay: the decay term is lr*wd*p, applied
/// outside the adaptive update, on every parameter.
template <typename S>
class AdamW {
 public:
  AdamW() = default;
  AdamW(std::vector<Parameter<S>*> params, const OptimConfig& cfg);

  void zero_grad();
  void step();
  long steps_taken() const { return t_; }

 private:
  std::vector<Parameter<S>*> params_;
  std::vector<Tensor<S>> m_, v_;
  OptimConfig cfg_;
  long t_ = 0;
};

}  // namespace ugda
