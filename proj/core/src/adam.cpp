#include "quadfit/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace quadfit {

void adam_step(AdamState& state, VecX& params, const VecX& grad, const AdamParams& hyper) {
  if (params.size() != grad.size()) throw std::invalid_argument("adam_step: shape mismatch");
  if (state.m.size() != params.size()) {
    state.m = VecX::Zero(params.size());
    state.v = VecX::Zero(params.size());
    state.t = 0;
  }
  ++state.t;
  state.m = hyper.beta1 * state.m + (1.0 - hyper.beta1) * grad;
  state.v = hyper.beta2 * state.v + (1.0 - hyper.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.eps);
  }
}

}  // namespace quadfit
