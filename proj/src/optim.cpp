// SPDX-License-Identifier: Apache-2.0
#include "ugda/optim.hpp"

#include <cmath>

namespace ugda {

template <typename S>
AdamW<S>::AdamW(std::vector<Parameter<S>*> params, const OptimConfig& cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

template <typename S>
void AdamW<S>::zero_grad() {
  for (auto* p : params_) p->grad.set_zero();
}

template <typename S>
void AdamW<S>::step() {
  ++t_;
  const S b1 = static_cast<S>(cfg_.beta1);
  const S b2 = static_cast<S>(cfg_.beta2);
  const S lr = static_cast<S>(cfg_.lr);
  const S eps = static_cast<S>(cfg_.eps);
  const S wd = static_cast<S>(cfg_.weight_decay);
  const S bc1 = static_cast<S>(1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
  const S bc2 = static_cast<S>(1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter<S>& p = *params_[i];
    S* pv = p.value.data();
    const S* pg = p.grad.data();
    S* pm = m_[i].data();
    S* pvv = v_[i].data();
    const Index n = p.value.size();
    for (Index j = 0; j < n; ++j) {
      const S g = pg[j];
      pm[j] = b1 * pm[j] + (S(1) - b1) * g;
      pvv[j] = b2 * pvv[j] + (S(1) - b2) * g * g;
      const S mhat = pm[j] / bc1;
      const S vhat = pvv[j] / bc2;
      pv[j] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * pv[j]);
    }
  }
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace ugda
