#pragma once

#include "quadfit/types.hpp"

namespace quadfit {

struct AdamParams {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  VecX m;
  VecX v;
  long t = 0;

  explicit AdamState(Eigen::Index n = 0) : m(VecX::Zero(n)), v(VecX::Zero(n)) {}
};

// Standard bias-corrected first/second moment update, applied in place.
void adam_step(AdamState& state, VecX& params, const VecX& grad, const AdamParams& hyper);

}  // namespace quadfit
