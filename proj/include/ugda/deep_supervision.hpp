// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "ugda/ops.hpp"

namespace ugda {

struct DSConfig {
  double alpha = 0.05;
  double w_shallow = 0.3;
  double w_deep = 0.7;
};

/// Total objective: main + alpha * (w_shallow*aux[0] + w_deep*aux[1]).
/// Aux must be empty (returns main unchanged) or exactly (shallow, deep).
template <typename S>
Var<S> total_loss(Var<S> main, const std::vector<Var<S>>& aux, const DSConfig& cfg) {
  if (aux.empty()) return main;
  check(aux.size() == 2, "total_loss: expected 0 or 2 auxiliary losses, got " +
                             std::to_string(aux.size()));
  Var<S> weighted = add(mul_const(aux[0], static_cast<S>(cfg.w_shallow)),
                        mul_const(aux[1], static_cast<S>(cfg.w_deep)));
  return add(main, mul_const(weighted, static_cast<S>(cfg.alpha)));
}

inline double total_loss(double main, const std::vector<double>& aux, const DSConfig& cfg) {
  if (aux.empty()) return main;
  check(aux.size() == 2, "total_loss: expected 0 or 2 auxiliary losses, got " +
                             std::to_string(aux.size()));
  return main + cfg.alpha * (cfg.w_shallow * aux[0] + cfg.w_deep * aux[1]);
}

}  // namespace ugda
