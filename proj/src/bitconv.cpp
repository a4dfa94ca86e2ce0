#include "bdc/bitconv.hpp"

#include <bit>
#include <cmath>
#include <vector>

#include "bdc/rng.hpp"

namespace bdc {

void ConvGeometry::validate() const {
  if (kernel != 1 && kernel != 3)
    throw Error(ErrorKind::kGeometryMismatch, "kernel must be 1 or 3, got " + std::to_string(kernel));
  if (stride != 1 && stride != 2)
    throw Error(ErrorKind::kGeometryMismatch, "stride must be 1 or 2, got " + std::to_string(stride));
  if (padding < 0) throw Error(ErrorKind::kGeometryMismatch, "negative padding");
  if (c_in < 1 || c_out < 1 || h < 1 || w < 1)
    throw Error(ErrorKind::kGeometryMismatch, "channels and spatial dims must be >= 1");
  if (h + 2 * padding < kernel || w + 2 * padding < kernel || h_out() < 1 || w_out() < 1)
    throw Error(ErrorKind::kGeometryMismatch, "empty output for H=" + std::to_string(h) +
                                                  " W=" + std::to_string(w));
}

template <typename T>
Tensor<T> conv2d_fp(const Tensor<T>& x, const Tensor<T>& w, const ConvGeometry& g, T pad_value) {
  g.validate();
  if (x.shape() != Shape{g.c_in, g.h, g.w})
    throw Error(ErrorKind::kGeometryMismatch, "input " + x.shape().to_string());
  if (w.shape() != Shape{g.c_out, g.c_in, g.kernel, g.kernel})
    throw Error(ErrorKind::kGeometryMismatch, "weights " + w.shape().to_string());
  const std::int64_t ho = g.h_out(), wo = g.w_out();
  Tensor<T> out(Shape{g.c_out, ho, wo});
  for (std::int64_t o = 0; o < g.c_out; ++o) {
    for (std::int64_t oh = 0; oh < ho; ++oh) {
      for (std::int64_t ow = 0; ow < wo; ++ow) {
        T acc = T(0);
        for (std::int64_t c = 0; c < g.c_in; ++c) {
          for (int u = 0; u < g.kernel; ++u) {
            const std::int64_t ih = oh * g.stride + u - g.padding;
            for (int v = 0; v < g.kernel; ++v) {
              const std::int64_t iw = ow * g.stride + v - g.padding;
              const T xv = (ih >= 0 && ih < g.h && iw >= 0 && iw < g.w) ? x.at(c, ih, iw) : pad_value;
              acc += xv * w.at4(o, c, u, v);
            }
          }
        }
        out.at(o, oh, ow) = acc;
      }
    }
  }
  return out;
}

namespace {

// Channel-innermost repack: one zero-padded word run of ceil(C/64) words per
// spatial position, so every sliding-window slot is word-aligned.
struct AlignedRuns {
  std::vector<std::uint64_t> words;
  std::int64_t words_per_run = 0;
};

AlignedRuns repack_activation_hwc(const BitTensor& xb, const ConvGeometry& g) {
  AlignedRuns r;
  r.words_per_run = (g.c_in + 63) / 64;
  r.words.assign(static_cast<std::size_t>(g.h * g.w * r.words_per_run), 0ull);
  for (std::int64_t c = 0; c < g.c_in; ++c) {
    for (std::int64_t h = 0; h < g.h; ++h) {
      for (std::int64_t w = 0; w < g.w; ++w) {
        if (xb.get((c * g.h + h) * g.w + w)) {
          const std::int64_t run = h * g.w + w;
          r.words[static_cast<std::size_t>(run * r.words_per_run + c / 64)] |= 1ull << (c % 64);
        }
      }
    }
  }
  return r;
}

// Weight rows in the same layout: per (o,u,v) one aligned channel run.
AlignedRuns repack_weights(const BitTensor& signs, const ConvGeometry& g) {
  AlignedRuns r;
  r.words_per_run = (g.c_in + 63) / 64;
  r.words.assign(static_cast<std::size_t>(g.c_out * g.kernel * g.kernel * r.words_per_run), 0ull);
  for (std::int64_t o = 0; o < g.c_out; ++o) {
    for (std::int64_t c = 0; c < g.c_in; ++c) {
      for (int u = 0; u < g.kernel; ++u) {
        for (int v = 0; v < g.kernel; ++v) {
          if (signs.get(((o * g.c_in + c) * g.kernel + u) * g.kernel + v)) {
            const std::int64_t run = (o * g.kernel + u) * g.kernel + v;
            r.words[static_cast<std::size_t>(run * r.words_per_run + c / 64)] |= 1ull << (c % 64);
          }
        }
      }
    }
  }
  return r;
}

}  // namespace

template <typename T>
Tensor<T> conv2d_bit(const BitTensor& xb, const BitTensor& packed_signs, T scale,
                     const ConvGeometry& g) {
  g.validate();
  if (xb.shape() != Shape{g.c_in, g.h, g.w})
    throw Error(ErrorKind::kGeometryMismatch, "packed input " + xb.shape().to_string());
  if (packed_signs.shape() != Shape{g.c_out, g.c_in, g.kernel, g.kernel})
    throw Error(ErrorKind::kGeometryMismatch, "packed signs " + packed_signs.shape().to_string());

  const AlignedRuns act = repack_activation_hwc(xb, g);
  const AlignedRuns wts = repack_weights(packed_signs, g);
  const std::int64_t wpr = act.words_per_run;
  const std::uint64_t tail_mask = (g.c_in % 64 == 0) ? ~0ull : ((1ull << (g.c_in % 64)) - 1ull);
  const std::vector<std::uint64_t> pad_run(static_cast<std::size_t>(wpr), 0ull);  // all -1

  const std::int64_t ho = g.h_out(), wo = g.w_out();
  const std::int64_t n_window = static_cast<std::int64_t>(g.kernel) * g.kernel * g.c_in;
  Tensor<T> out(Shape{g.c_out, ho, wo});
  for (std::int64_t o = 0; o < g.c_out; ++o) {
    for (std::int64_t oh = 0; oh < ho; ++oh) {
      for (std::int64_t ow = 0; ow < wo; ++ow) {
        std::int64_t pop = 0;
        for (int u = 0; u < g.kernel; ++u) {
          const std::int64_t ih = oh * g.stride + u - g.padding;
          for (int v = 0; v < g.kernel; ++v) {
            const std::int64_t iw = ow * g.stride + v - g.padding;
            const bool inside = ih >= 0 && ih < g.h && iw >= 0 && iw < g.w;
            const std::uint64_t* xr =
                inside ? &act.words[static_cast<std::size_t>((ih * g.w + iw) * wpr)] : pad_run.data();
            const std::uint64_t* wr =
                &wts.words[static_cast<std::size_t>(((o * g.kernel + u) * g.kernel + v) * wpr)];
            for (std::int64_t wd = 0; wd < wpr; ++wd) {
              std::uint64_t m = ~(xr[wd] ^ wr[wd]);
              if (wd + 1 == wpr) m &= tail_mask;
              pop += std::popcount(m);
            }
          }
        }
        out.at(o, oh, ow) = scale * static_cast<T>(2 * pop - n_window);
      }
    }
  }
  return out;
}

EquivalenceReport check_equivalence(const ConvGeometry& g, std::uint64_t seed) {
  g.validate();
  Rng rng(seed);
  Tensor<double> x(Shape{g.c_in, g.h, g.w});
  for (std::int64_t i = 0; i < x.size(); ++i) x[i] = rng.sign_unit();
  BinaryConvParams<double> params;
  params.latent = Tensor<double>(Shape{g.c_out, g.c_in, g.kernel, g.kernel});
  for (std::int64_t i = 0; i < params.latent.size(); ++i) params.latent[i] = rng.normal();
  params.refresh();

  Tensor<double> fast = conv2d_bit(bit_pack(x), params, g);
  // +-1 integer oracle (exact in double), scaled with the same single multiply.
  Tensor<double> signs = sign_forward(params.latent);
  Tensor<double> ref = conv2d_fp(x, signs, g, -1.0);
  EquivalenceReport report;
  report.outputs_checked = ref.size();
  for (std::int64_t i = 0; i < ref.size(); ++i) {
    const double dev = std::abs(fast[i] - params.scale * ref[i]);
    if (dev > report.max_abs_deviation) report.max_abs_deviation = dev;
  }
  return report;
}

template Tensor<float> conv2d_fp(const Tensor<float>&, const Tensor<float>&, const ConvGeometry&, float);
template Tensor<double> conv2d_fp(const Tensor<double>&, const Tensor<double>&, const ConvGeometry&,
                                  double);
template Tensor<float> conv2d_bit(const BitTensor&, const BitTensor&, float, const ConvGeometry&);
template Tensor<double> conv2d_bit(const BitTensor&, const BitTensor&, double, const ConvGeometry&);

}  // namespace bdc
