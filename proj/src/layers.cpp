// SPDX-License-Identifier: Apache-2.0
#include "ugda/layers.hpp"

#include <cmath>

#include "ugda/rng.hpp"

namespace ugda {

template <typename S>
void glorot_uniform(Tensor<S>& w, Index fan_in, Index fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  S* p = w.data();
  for (Index i = 0; i < w.size(); ++i) p[i] = static_cast<S>(uniform(rng, -limit, limit));
}

template <typename S>
Conv2d<S>::Conv2d(const std::string& name, Index in_ch, Index out_ch, int k, int stride_, int pad_,
                  bool with_bias_, std::mt19937_64& rng)
    : stride(stride_), pad(pad_), with_bias(with_bias_) {
  Tensor<S> w(out_ch, in_ch, k, k);
  glorot_uniform(w, in_ch * k * k, out_ch * k * k, rng);
  weight = Parameter<S>(name + ".weight", std::move(w));
  if (with_bias) bias = Parameter<S>(name + ".bias", Tensor<S>(1, out_ch, 1, 1));
}

template <typename S>
Var<S> Conv2d<S>::forward(Tape<S>& t, Var<S> x) {
  Var<S> w = t.param(weight);
  Var<S> b = with_bias ? t.param(bias) : Var<S>{};
  return conv2d(x, w, b, stride, pad);
}

template <typename S>
void Conv2d<S>::collect(std::vector<Parameter<S>*>& ps) {
  ps.push_back(&weight);
  if (with_bias) ps.push_back(&bias);
}

template <typename S>
BatchNorm2d<S>::BatchNorm2d(const std::string& name, Index channels)
    : running_mean(1, channels, 1, 1), running_var(1, channels, 1, 1), name_(name) {
  Tensor<S> g(1, channels, 1, 1);
  g.fill(S(1));
  gamma = Parameter<S>(name + ".gamma", std::move(g));
  beta = Parameter<S>(name + ".beta", Tensor<S>(1, channels, 1, 1));
  running_var.fill(S(1));
}

template <typename S>
Var<S> BatchNorm2d<S>::forward(Tape<S>& t, Var<S> x, bool training) {
  return batch_norm(x, t.param(gamma), t.param(beta), running_mean, running_var, training, momentum,
                    eps);
}

template <typename S>
void BatchNorm2d<S>::collect(std::vector<Parameter<S>*>& ps) {
  ps.push_back(&gamma);
  ps.push_back(&beta);
}

template <typename S>
void BatchNorm2d<S>::collect_buffers(std::vector<BufferRef<S>>& bs) {
  bs.push_back({name_ + ".running_mean", &running_mean});
  bs.push_back({name_ + ".running_var", &running_var});
}

template <typename S>
ConvBnRelu<S>::ConvBnRelu(const std::string& name, Index in_ch, Index out_ch, int k, int stride,
                          int pad, std::mt19937_64& rng)
    : conv(name + ".conv", in_ch, out_ch, k, stride, pad, false, rng), bn(name + ".bn", out_ch) {}

template <typename S>
Var<S> ConvBnRelu<S>::forward(Tape<S>& t, Var<S> x, bool training) {
  return relu(bn.forward(t, conv.forward(t, x), training));
}

template <typename S>
void ConvBnRelu<S>::collect(std::vector<Parameter<S>*>& ps) {
  conv.collect(ps);
  bn.collect(ps);
}

template <typename S>
void ConvBnRelu<S>::collect_buffers(std::vector<BufferRef<S>>& bs) {
  bn.collect_buffers(bs);
}

#define UGDA_INSTANTIATE_LAYERS(S)                                                  \
  template void glorot_uniform<S>(Tensor<S>&, Index, Index, std::mt19937_64&);      \
  template class Conv2d<S>;                                                         \
  template class BatchNorm2d<S>;                                                    \
  template struct ConvBnRelu<S>;

UGDA_INSTANTIATE_LAYERS(float)
UGDA_INSTANTIATE_LAYERS(double)

#undef UGDA_INSTANTIATE_LAYERS

}  // namespace ugda
