// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <string>
#include <vector>

#include "ugda/autograd.hpp"
#include "ugda/ops.hpp"

namespace ugda {

/// Named view of a persistent non-trainable tensor (running statistics).
template <typename S>
struct BufferRef {
  std::string name;
  Tensor<S>* tensor;
};

/// Glorot uniform fill: limit = sqrt(6 / (fan_in + fan_out)).
template <typename S>
void glorot_uniform(Tensor<S>& w, Index fan_in, Index fan_out, std::mt19937_64& rng);

template <typename S>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, Index in_ch, Index out_ch, int k, int stride, int pad,
         bool with_bias, std::mt19937_64& rng);

  Var<S> forward(Tape<S>& t, Var<S> x);
  void collect(std::vector<Parameter<S>*>& ps);
  Index out_channels() const { return weight.value.shape().n; }

  Parameter<S> weight;
  Parameter<S> bias;
  int stride = 1;
  int pad = 0;
  bool with_bias = false;
};

template <typename S>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(const std::string& name, Index channels);

  Var<S> forward(Tape<S>& t, Var<S> x, bool training);
  void collect(std::vector<Parameter<S>*>& ps);
  void collect_buffers(std::vector<BufferRef<S>>& bs);

  Parameter<S> gamma;
  Parameter<S> beta;
  Tensor<S> running_mean;
  Tensor<S> running_var;
  S momentum = S(0.1);
  S eps = static_cast<S>(1e-5);

 private:
  std::string name_;
};

/// conv -> batch norm -> ReLU. The conv carries no bias; BN's shift covers it.
template <typename S>
struct ConvBnRelu {
  Conv2d<S> conv;
  BatchNorm2d<S> bn;

  ConvBnRelu() = default;
  ConvBnRelu(const std::string& name, Index in_ch, Index out_ch, int k, int stride, int pad,
             std::mt19937_64& rng);

  Var<S> forward(Tape<S>& t, Var<S> x, bool training);
  void collect(std::vector<Parameter<S>*>& ps);
  void collect_buffers(std::vector<BufferRef<S>>& bs);
};

}  // namespace ugda
