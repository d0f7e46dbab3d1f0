#pragma once

#include <cmath>

#include "cmg/nmt/params.hpp"

namespace cmg::nmt {

/// Running averages of squared gradients and squared updates, shaped like
/// the parameters.
template <typename Scalar>
struct AdadeltaState {
  ModelParams<Scalar> sq_grad;
  ModelParams<Scalar> sq_update;

  AdadeltaState() = default;
  explicit AdadeltaState(const ModelDims& dims) : sq_grad(dims), sq_update(dims) {}
};

/// One Adadelta step, coordinate-wise:
///   E[g^2]  <- rho E[g^2] + (1 - rho) g^2
///   delta    = -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
///   E[dx^2] <- rho E[dx^2] + (1 - rho) delta^2
///   x       += delta
template <typename Scalar>
void adadelta_update(ModelParams<Scalar>& params, const ModelParams<Scalar>& grads, AdadeltaState<Scalar>& state,
                     Scalar rho, Scalar eps) {
  if (!(params.dims == grads.dims) || !(params.dims == state.sq_grad.dims))
    throw ModelError("adadelta: parameter, gradient and state shapes differ");
  ModelParams<Scalar>::zip(
      [&](const std::string&, auto& x, const auto& g, auto& eg, auto& ed) {
        auto xa = x.array();
        const auto ga = g.array();
        auto ega = eg.array();
        auto eda = ed.array();
        ega = rho * ega + (Scalar(1) - rho) * ga.square();
        const auto delta = (-((eda + eps).sqrt() / (ega + eps).sqrt()) * ga).eval();
        eda = rho * eda + (Scalar(1) - rho) * delta.square();
        xa += delta;
      },
      params, grads, state.sq_grad, state.sq_update);
}

}  // namespace cmg::nmt
