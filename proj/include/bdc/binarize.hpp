#pragma once

#include <utility>

#include "bdc/tensor.hpp"

namespace bdc {

/// Per-channel redistribution parameters: out = k[c]*x + b[c]. k is the
/// learnable density, b the learnable bias.
template <typename T>
struct RedistParams {
  Tensor<T> k;  // length C
  Tensor<T> b;  // length C

  static RedistParams identity(std::int64_t channels) {
    return {Tensor<T>(Shape{channels}, T(1)), Tensor<T>(Shape{channels}, T(0))};
  }
};

/// Latent full-precision conv weights plus the derived per-layer scale and
/// packed sign bits. scale = mean|latent|; signs follow sign(x<=0) = -1.
template <typename T>
struct BinaryConvParams {
  Tensor<T> latent;  // (C_out, C_in, k, k)
  T scale = T(0);
  BitTensor packed_signs;
  T alpha = T(1);  // surrogate sharpness

  /// Recomputes scale and packed_signs from latent. Call after every
  /// optimizer step.
  void refresh();
};

/// out[c,h,w] = p.k[c]*x[c,h,w] + p.b[c]. x is (C,H,W).
template <typename T>
Tensor<T> redistribute(const Tensor<T>& x, const RedistParams<T>& p);

/// Hard sign: +1 where x > 0, -1 where x <= 0 (zero maps to -1).
template <typename T>
Tensor<T> sign_forward(const Tensor<T>& x);

/// Returns (tanh(alpha*x), alpha*(1 - tanh^2(alpha*x))). alpha must be > 0.
template <typename T>
std::pair<T, T> tanh_surrogate(T x, T alpha);

/// scale = mean|w|, signs = packed sign(w). The effective binarized weight is
/// scale*sign(w). An all-zero tensor is legal: scale 0, all signs -1.
template <typename T>
std::pair<T, BitTensor> binarize_weights(const Tensor<T>& w);

/// Straight-through weight gradient: grad latent w_i =
/// upstream_i * scale * 1{|w_i| <= 1}, with scale detached.
template <typename T>
Tensor<T> weight_ste_grad(const Tensor<T>& upstream_grad_wrt_wb, const BinaryConvParams<T>& params);

}  // namespace bdc
