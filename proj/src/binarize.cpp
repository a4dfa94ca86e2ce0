#include "bdc/binarize.hpp"

#include <cmath>

namespace bdc {

template <typename T>
void BinaryConvParams<T>::refresh() {
  auto [s, bits] = binarize_weights(latent);
  scale = s;
  packed_signs = std::move(bits);
}

template <typename T>
Tensor<T> redistribute(const Tensor<T>& x, const RedistParams<T>& p) {
  if (x.shape().rank() != 3)
    throw Error(ErrorKind::kShapeMismatch, "redistribute expects (C,H,W), got " + x.shape().to_string());
  const std::int64_t c_count = x.shape().dim(0);
  if (p.k.size() != c_count || p.b.size() != c_count)
    throw Error(ErrorKind::kChannelMismatch,
                "params length " + std::to_string(p.k.size()) + " vs C=" + std::to_string(c_count));
  Tensor<T> out(x.shape());
  const std::int64_t hw = x.shape().dim(1) * x.shape().dim(2);
  for (std::int64_t c = 0; c < c_count; ++c) {
    const T kc = p.k[c], bc = p.b[c];
    for (std::int64_t i = 0; i < hw; ++i) out[c * hw + i] = kc * x[c * hw + i] + bc;
  }
  return out;
}

template <typename T>
Tensor<T> sign_forward(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? T(1) : T(-1);
  return out;
}

template <typename T>
std::pair<T, T> tanh_surrogate(T x, T alpha) {
  if (!(alpha > T(0))) throw Error(ErrorKind::kNonPositiveAlpha, std::to_string(static_cast<double>(alpha)));
  T t = std::tanh(alpha * x);
  return {t, alpha * (T(1) - t * t)};
}

template <typename T>
std::pair<T, BitTensor> binarize_weights(const Tensor<T>& w) {
  if (w.size() == 0 || w.empty()) throw Error(ErrorKind::kEmptyTensor, "binarize_weights");
  // Mean of |w| accumulated in double so float tensors keep full precision.
  double acc = 0.0;
  for (std::int64_t i = 0; i < w.size(); ++i) acc += std::abs(static_cast<double>(w[i]));
  T scale = static_cast<T>(acc / static_cast<double>(w.size()));
  BitTensor signs(w.shape());
  for (std::int64_t i = 0; i < w.size(); ++i)
    if (w[i] > T(0)) signs.set(i, true);
  return {scale, std::move(signs)};
}

template <typename T>
Tensor<T> weight_ste_grad(const Tensor<T>& upstream_grad_wrt_wb, const BinaryConvParams<T>& params) {
  if (upstream_grad_wrt_wb.shape() != params.latent.shape())
    throw Error(ErrorKind::kShapeMismatch, "upstream " + upstream_grad_wrt_wb.shape().to_string() +
                                               " vs latent " + params.latent.shape().to_string());
  Tensor<T> grad(params.latent.shape());
  for (std::int64_t i = 0; i < grad.size(); ++i) {
    const T w = params.latent[i];
    grad[i] = (std::abs(w) <= T(1)) ? upstream_grad_wrt_wb[i] * params.scale : T(0);
  }
  return grad;
}

template struct BinaryConvParams<float>;
template struct BinaryConvParams<double>;
template Tensor<float> redistribute(const Tensor<float>&, const RedistParams<float>&);
template Tensor<double> redistribute(const Tensor<double>&, const RedistParams<double>&);
template Tensor<float> sign_forward(const Tensor<float>&);
template Tensor<double> sign_forward(const Tensor<double>&);
template std::pair<float, float> tanh_surrogate(float, float);
template std::pair<double, double> tanh_surrogate(double, double);
template std::pair<float, BitTensor> binarize_weights(const Tensor<float>&);
template std::pair<double, BitTensor> binarize_weights(const Tensor<double>&);
template Tensor<float> weight_ste_grad(const Tensor<float>&, const BinaryConvParams<float>&);
template Tensor<double> weight_ste_grad(const Tensor<double>&, const BinaryConvParams<double>&);

}  // namespace bdc
