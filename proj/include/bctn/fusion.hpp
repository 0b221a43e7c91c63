#pragma once

#include <cmath>
#include <string>

#include "bctn/config.hpp"
#include "bctn/errors.hpp"
#include "bctn/params.hpp"
#include "bctn/tensor.hpp"

namespace bctn {

// Gated fusion of the scaled inertial memory x and reverse memory y into
// the decoder memory r. Per column l, with a = alpha*x_l and b = beta*y_l:
//   k_l = sigma(w_f . [a; b; a*b; a-b] + bias)
//   r_l = k_l * a + (1 - k_l) * b
// so either side can be ablated cleanly by zeroing its mixing weight.
template <typename Real>
struct FusionWeights {
  TensorT<Real> w_f;   // 4h
  TensorT<Real> bias;  // scalar
};

template <typename Real>
FusionWeights<Real> init_fusion(ParameterStore<Real>& ps, const std::string& prefix,
                                const ModelConfig& cfg, Rng& rng) {
  FusionWeights<Real> w;
  w.w_f = ps.add_uniform(prefix + ".w_f", {4 * cfg.h}, rng, 1.0 / std::sqrt(4.0 * cfg.h));
  w.bias = ps.add_const(prefix + ".bias", {1}, Real(0));
  return w;
}

template <typename Real>
FusionWeights<Real> attach_fusion(ParameterStore<Real>& ps, const std::string& prefix,
                                  const ModelConfig& cfg) {
  FusionWeights<Real> w;
  w.w_f = ps.get_checked(prefix + ".w_f", {4 * cfg.h});
  w.bias = ps.get_checked(prefix + ".bias", {1});
  return w;
}

template <typename Real>
TensorT<Real> fuse(const TensorT<Real>& x, const TensorT<Real>& y, const FusionWeights<Real>& w,
                   Real alpha, Real beta) {
  if (x.shape() != y.shape() || x.rank() != 2)
    throw ShapeMismatch("fuse: x and y must be equal h x L matrices");
  auto a = scale(x, alpha);
  auto b = scale(y, beta);
  auto feats = concat_rows<Real>({a, b, mul(a, b), sub(a, b)});  // 4h x L
  auto k = sigmoid(add_scalar_broadcast(vecmat(w.w_f, feats), w.bias));
  auto one_minus_k = sub(TensorT<Real>::full({x.dim(1)}, Real(1)), k);
  return add(scale_columns(a, k), scale_columns(b, one_minus_k));
}

}  // namespace bctn
