#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "cmfplan/tensor.hpp"

namespace cmf {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const AdamHyper&, const AdamHyper&) = default;
};

/// Bias-corrected adaptive-moment optimizer state, one moment buffer pair
/// per parameter buffer.
struct AdamState {
  AdamHyper hyper;
  long step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  AdamState() = default;
  AdamState(AdamHyper h, const std::vector<ParamRef>& params);
};

/// One in-place update. `params` and `grads` must match the state's shapes.
void adam_step(const std::vector<ParamRef>& params, const std::vector<ParamRef>& grads,
               AdamState& state);

/// max over parameters of |a - n| / max(|a|, |n|, 1e-6), a analytic, n the
/// central difference. The floor keeps roundoff in the difference (about
/// eps |loss| / h) from dominating entries whose true gradient is ~0.
/// `loss` re-evaluates the objective at the current parameter values; every
/// parameter is restored before returning.
double finite_diff_check(const std::function<double()>& loss, const std::vector<ParamRef>& params,
                         const std::vector<ParamRef>& analytic, double h);

}  // namespace cmf
