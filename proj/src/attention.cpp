// SPDX-License-Identifier: Apache-2.0
#include "ugda/attention.hpp"

namespace ugda {

template <typename S>
Var<S> uncertainty_map(Var<S> x) {
  return sigmoid(channel_std(x));
}

template <typename S>
UGDAModule<S>::UGDAModule(const std::string& name, Index channels, Index reduction,
                          std::mt19937_64& rng) {
  check(reduction >= 1 && channels % reduction == 0,
        "attention: reduction " + std::to_string(reduction) + " must divide channel count " +
            std::to_string(channels));
  reduce = Conv2d<S>(name + ".reduce", channels, channels / reduction, 1, 1, 0, true, rng);
  expand = Conv2d<S>(name + ".expand", channels / reduction, channels, 1, 1, 0, true, rng);
  spatial = Conv2d<S>(name + ".spatial", 2, 1, 7, 1, 3, true, rng);
  gamma = Parameter<S>(name + ".gamma", Tensor<S>::full({1, 1, 1, 1}, S(0.1)));
}

template <typename S>
Var<S> UGDAModule<S>::channel_gate(Tape<S>& t, Var<S> x) {
  Var<S> g = global_avg_pool(x);
  return sigmoid(expand.forward(t, relu(reduce.forward(t, g))));
}

template <typename S>
Var<S> UGDAModule<S>::spatial_gate(Tape<S>& t, Var<S> x) {
  Var<S> planes = concat_channels(channel_mean(x), channel_max(x));
  return sigmoid(spatial.forward(t, planes));
}

template <typename S>
Var<S> UGDAModule<S>::forward(Tape<S>& t, Var<S> x) {
  check(x.value().all_finite(), "attention: non-finite input");
  Var<S> ch = channel_gate(t, x);
  Var<S> sp = spatial_gate(t, x);
  Var<S> u = uncertainty_map(x);
  Var<S> a = mul(ch, mul(sp, add_const(u, S(1))));
  Var<S> scaled = mul(mul(x, a), t.param(gamma));
  return add(x, scaled);
}

template <typename S>
void UGDAModule<S>::collect(std::vector<Parameter<S>*>& ps) {
  reduce.collect(ps);
  expand.collect(ps);
  spatial.collect(ps);
  ps.push_back(&gamma);
}

template Var<float> uncertainty_map<float>(Var<float>);
template Var<double> uncertainty_map<double>(Var<double>);
template class UGDAModule<float>;
template class UGDAModule<double>;

}  // namespace ugda
