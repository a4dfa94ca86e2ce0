#pragma once

#include <cstdint>

#include "bdc/binarize.hpp"
#include "bdc/tensor.hpp"

namespace bdc {

/// 2-D convolution geometry. Output dims follow the floor convention
/// floor((H + 2*pad - k)/stride) + 1; 3x3 stride-2 pad-1 downsampling on even
/// H needs the floor.
struct ConvGeometry {
  std::int64_t c_in = 1;
  std::int64_t c_out = 1;
  int kernel = 3;   // k in {1,3}
  int stride = 1;   // in {1,2}
  int padding = 0;  // >= 0
  std::int64_t h = 1;
  std::int64_t w = 1;

  std::int64_t h_out() const { return (h + 2 * padding - kernel) / stride + 1; }
  std::int64_t w_out() const { return (w + 2 * padding - kernel) / stride + 1; }
  void validate() const;
};

/// Reference cross-correlation (no kernel flip, no bias) with constant
/// pad_value outside bounds. x is (C_in,H,W), w is (C_out,C_in,k,k).
template <typename T>
Tensor<T> conv2d_fp(const Tensor<T>& x, const Tensor<T>& w, const ConvGeometry& g, T pad_value);

/// XNOR/popcount convolution on a packed +-1 activation. Padding positions
/// are -1 (zero-padding the pre-sign activation and sign(0) = -1). Output is
/// scale * (integer +-1 cross-correlation); the scale multiply is the only
/// float operation.
template <typename T>
Tensor<T> conv2d_bit(const BitTensor& xb, const BitTensor& packed_signs, T scale,
                     const ConvGeometry& g);

template <typename T>
Tensor<T> conv2d_bit(const BitTensor& xb, const BinaryConvParams<T>& params, const ConvGeometry& g) {
  return conv2d_bit(xb, params.packed_signs, params.scale, g);
}

struct EquivalenceReport {
  double max_abs_deviation = 0.0;
  std::int64_t outputs_checked = 0;
};

/// Random +-1 activation and random latent weights through both paths; the
/// deviation must be exactly 0 (identical final rounding).
EquivalenceReport check_equivalence(const ConvGeometry& g, std::uint64_t seed);

}  // namespace bdc
