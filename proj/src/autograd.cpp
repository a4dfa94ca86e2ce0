#include "bdc/autograd.hpp"

#include <algorithm>
#include <cmath>

namespace bdc {

namespace {

template <typename T>
Tensor<T> conv_input_grad(const Tensor<T>& gout, const Tensor<T>& w, const ConvGeometry& g) {
  Tensor<T> gx(Shape{g.c_in, g.h, g.w});
  for (std::int64_t o = 0; o < g.c_out; ++o) {
    for (std::int64_t oh = 0; oh < g.h_out(); ++oh) {
      for (std::int64_t ow = 0; ow < g.w_out(); ++ow) {
        const T go = gout.at(o, oh, ow);
        if (go == T(0)) continue;
        for (std::int64_t c = 0; c < g.c_in; ++c) {
          for (int u = 0; u < g.kernel; ++u) {
            const std::int64_t ih = oh * g.stride + u - g.padding;
            if (ih < 0 || ih >= g.h) continue;
            for (int v = 0; v < g.kernel; ++v) {
              const std::int64_t iw = ow * g.stride + v - g.padding;
              if (iw < 0 || iw >= g.w) continue;
              gx.at(c, ih, iw) += go * w.at4(o, c, u, v);
            }
          }
        }
      }
    }
  }
  return gx;
}

// Constant padding contributes pad_value * gout to the weight gradient.
template <typename T>
Tensor<T> conv_weight_grad(const Tensor<T>& x, const Tensor<T>& gout, const ConvGeometry& g,
                           T pad_value) {
  Tensor<T> gw(Shape{g.c_out, g.c_in, g.kernel, g.kernel});
  for (std::int64_t o = 0; o < g.c_out; ++o) {
    for (std::int64_t c = 0; c < g.c_in; ++c) {
      for (int u = 0; u < g.kernel; ++u) {
        for (int v = 0; v < g.kernel; ++v) {
          T acc = T(0);
          for (std::int64_t oh = 0; oh < g.h_out(); ++oh) {
            const std::int64_t ih = oh * g.stride + u - g.padding;
            for (std::int64_t ow = 0; ow < g.w_out(); ++ow) {
              const std::int64_t iw = ow * g.stride + v - g.padding;
              const T xv =
                  (ih >= 0 && ih < g.h && iw >= 0 && iw < g.w) ? x.at(c, ih, iw) : pad_value;
              acc += xv * gout.at(o, oh, ow);
            }
          }
          gw.at4(o, c, u, v) = acc;
        }
      }
    }
  }
  return gw;
}

template <typename T>
Tensor<T> clip_scaled(const Tensor<T>& latent, T scale) {
  Tensor<T> out(latent.shape());
  for (std::int64_t i = 0; i < latent.size(); ++i) {
    T w = latent[i];
    if (w > T(1)) w = T(1);
    if (w < T(-1)) w = T(-1);
    out[i] = scale * w;
  }
  return out;
}

template <typename T>
void check_chw(const Tensor<T>& x, const char* what) {
  if (x.shape().rank() != 3)
    throw Error(ErrorKind::kShapeMismatch, std::string(what) + " expects (C,H,W), got " +
                                               x.shape().to_string());
}

}  // namespace

// ---------------------------------------------------------------------------
// Layer builders
// ---------------------------------------------------------------------------

template <typename T>
RedistLayer<T> RedistLayer<T>::create(ParamStore<T>& store, const std::string& prefix,
                                      std::int64_t channels) {
  RedistLayer layer;
  layer.k = store.add(prefix + ".k", Tensor<T>(Shape{channels}, T(1)));
  layer.b = store.add(prefix + ".b", Tensor<T>(Shape{channels}, T(0)));
  return layer;
}

template <typename T>
RPReLULayer<T> RPReLULayer<T>::create(ParamStore<T>& store, const std::string& prefix,
                                      std::int64_t channels) {
  RPReLULayer layer;
  layer.beta = store.add(prefix + ".beta", Tensor<T>(Shape{channels}, T(0.25)));
  layer.gamma = store.add(prefix + ".gamma", Tensor<T>(Shape{channels}, T(0)));
  layer.zeta = store.add(prefix + ".zeta", Tensor<T>(Shape{channels}, T(0)));
  return layer;
}

template <typename T>
BatchNormLayer<T> BatchNormLayer<T>::create(ParamStore<T>& store, const std::string& prefix,
                                            std::int64_t channels) {
  BatchNormLayer layer;
  layer.weight = store.add(prefix + ".bn_w", Tensor<T>(Shape{channels}, T(1)));
  layer.bias = store.add(prefix + ".bn_b", Tensor<T>(Shape{channels}, T(0)));
  layer.run_mean = store.add(prefix + ".bn_rm", Tensor<T>(Shape{channels}, T(0)), false);
  layer.run_var = store.add(prefix + ".bn_rv", Tensor<T>(Shape{channels}, T(1)), false);
  return layer;
}

template <typename T>
void BatchNormLayer<T>::freeze_identity(ParamStore<T>& store) const {
  store.value(weight) = Tensor<T>(store.value(weight).shape(), T(1));
  store.value(bias) = Tensor<T>(store.value(bias).shape(), T(0));
  store.value(run_mean) = Tensor<T>(store.value(run_mean).shape(), T(0));
  store.value(run_var) = Tensor<T>(store.value(run_var).shape(), T(1));
}

template <typename T>
BinConvLayer<T> BinConvLayer<T>::create(ParamStore<T>& store, const std::string& prefix,
                                        std::int64_t c_in, std::int64_t c_out, int kernel,
                                        int stride, int padding, Rng& rng) {
  BinConvLayer layer;
  layer.c_in = c_in;
  layer.c_out = c_out;
  layer.kernel = kernel;
  layer.stride = stride;
  layer.padding = padding;
  Tensor<T> w(Shape{c_out, c_in, kernel, kernel});
  const double std_dev = std::sqrt(2.0 / static_cast<double>(c_in * kernel * kernel));
  for (std::int64_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(std_dev * rng.normal());
  layer.w = store.add(prefix + ".w", std::move(w));
  layer.refresh(store);
  return layer;
}

template <typename T>
void BinConvLayer<T>::refresh(const ParamStore<T>& store) {
  const Tensor<T>& latent = store.value(w);
  auto [s, bits] = binarize_weights(latent);
  scale = s;
  signs = std::move(bits);
  eff_w = Tensor<T>(latent.shape());
  for (std::int64_t i = 0; i < latent.size(); ++i)
    eff_w[i] = signs.get(i) ? scale : -scale;
}

template <typename T>
FpConvLayer<T> FpConvLayer<T>::create(ParamStore<T>& store, const std::string& prefix,
                                      std::int64_t c_in, std::int64_t c_out, int kernel, int stride,
                                      int padding, Rng& rng) {
  FpConvLayer layer;
  layer.c_in = c_in;
  layer.c_out = c_out;
  layer.kernel = kernel;
  layer.stride = stride;
  layer.padding = padding;
  Tensor<T> w(Shape{c_out, c_in, kernel, kernel});
  const double std_dev = std::sqrt(2.0 / static_cast<double>(c_in * kernel * kernel));
  for (std::int64_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(std_dev * rng.normal());
  layer.w = store.add(prefix + ".w", std::move(w));
  layer.bias = store.add(prefix + ".bias", Tensor<T>(Shape{c_out}, T(0)));
  return layer;
}

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

template <typename T>
Value<T> Ctx<T>::input(Tensor<T> x) {
  Value<T> v;
  if (recording()) v.id = tape->new_var(x.shape());
  v.t = std::move(x);
  return v;
}

template <typename T>
Value<T> Ctx<T>::redistribute(const Value<T>& x, const RedistLayer<T>& layer) {
  const Tensor<T>& k = store->value(layer.k);
  const Tensor<T>& b = store->value(layer.b);
  Value<T> out;
  out.t = bdc::redistribute(x.t, RedistParams<T>{k, b});
  if (!recording()) return out;
  out.id = tape->new_var(out.t.shape());
  tape->touch_param(layer.k, k.shape());
  tape->touch_param(layer.b, b.shape());
  tape->push_node([xid = x.id, oid = out.id, xt = x.t, k, kid = layer.k, bid = layer.b](Tape<T>& tp) {
    const Tensor<T>* g = tp.var_grad(oid);
    if (!g) return;
    const std::int64_t c_count = xt.shape().dim(0);
    const std::int64_t hw = xt.shape().dim(1) * xt.shape().dim(2);
    Tensor<T> gk(Shape{c_count}), gb(Shape{c_count});
    for (std::int64_t c = 0; c < c_count; ++c) {
      T sk = T(0), sb = T(0);
      for (std::int64_t i = 0; i < hw; ++i) {
        const T gi = (*g)[c * hw + i];
        sk += xt[c * hw + i] * gi;
        sb += gi;
        tp.accum_var(xid, c * hw + i, k[c] * gi);
      }
      gk[c] = sk;
      gb[c] = sb;
    }
    tp.accum_param(kid, gk);
    tp.accum_param(bid, gb);
  });
  return out;
}

template <typename T>
Value<T> Ctx<T>::sign(const Value<T>& x, T alpha) {
  if (!(alpha > T(0))) throw Error(ErrorKind::kNonPositiveAlpha, "sign alpha");
  Value<T> out;
  if (mode == BinarizeMode::kHard) {
    out.t = sign_forward(x.t);
  } else {
    out.t = Tensor<T>(x.t.shape());
    for (std::int64_t i = 0; i < x.t.size(); ++i) out.t[i] = std::tanh(alpha * x.t[i]);
  }
  if (!recording()) return out;
  out.id = tape->new_var(out.t.shape());
  // Surrogate derivative at the saved pre-activation, identical in both modes.
  tape->push_node([xid = x.id, oid = out.id, xt = x.t, alpha](Tape<T>& tp) {
    const Tensor<T>* g = tp.var_grad(oid);
    if (!g) return;
    for (std::int64_t i = 0; i < xt.size(); ++i) {
      const T t = std::tanh(alpha * xt[i]);
      tp.accum_var(xid, i, (*g)[i] * alpha * (T(1) - t * t));
    }
  });
  return out;
}

template <typename T>
Value<T> Ctx<T>::binconv(const Value<T>& x, const BinConvLayer<T>& layer) {
  check_chw(x.t, "binconv");
  const ConvGeometry g = layer.geometry(x.t.shape().dim(1), x.t.shape().dim(2));
  Value<T> out;
  Tensor<T> w_used;  // effective weights seen by this forward
  T pad_value;
  if (mode == BinarizeMode::kHard) {
    out.t = conv2d_bit(bit_pack(x.t), layer.signs, layer.scale, g);
    w_used = layer.eff_w;
    pad_value = T(-1);
  } else {
    // Frozen scale, clipped latent: the forward whose exact derivative is the
    // hard-clip STE rule.
    w_used = clip_scaled(store->value(layer.w), layer.scale);
    pad_value = T(0);
    out.t = conv2d_fp(x.t, w_used, g, pad_value);
  }
  if (!recording()) return out;
  out.id = tape->new_var(out.t.shape());
  tape->touch_param(layer.w, store->value(layer.w).shape());
  tape->push_node([xid = x.id, oid = out.id, xt = x.t, w_used = std::move(w_used), g, pad_value,
                   latent = store->value(layer.w), scale = layer.scale, wid = layer.w](Tape<T>& tp) {
    const Tensor<T>* gout = tp.var_grad(oid);
    if (!gout) return;
    Tensor<T> gx = conv_input_grad(*gout, w_used, g);
    Tensor<T>& buf = tp.grad_buffer(xid);
    for (std::int64_t i = 0; i < gx.size(); ++i) buf[i] += gx[i];
    // dL/dw_b then the straight-through clip back to the latent weights.
    Tensor<T> gwb = conv_weight_grad(xt, *gout, g, pad_value);
    Tensor<T> gw(latent.shape());
    for (std::int64_t i = 0; i < latent.size(); ++i)
      gw[i] = (std::abs(latent[i]) <= T(1)) ? gwb[i] * scale : T(0);
    tp.accum_param(wid, gw);
  });
  return out;
}

template <typename T>
Value<T> Ctx<T>::batchnorm(const Value<T>& x, const BatchNormLayer<T>& layer) {
  check_chw(x.t, "batchnorm");
  const std::int64_t c_count = x.t.shape().dim(0);
  const std::int64_t hw = x.t.shape().dim(1) * x.t.shape().dim(2);
  const Tensor<T>& wgt = store->value(layer.weight);
  const Tensor<T>& bias = store->value(layer.bias);
  if (wgt.size() != c_count) throw Error(ErrorKind::kChannelMismatch, "batchnorm channels");

  Value<T> out;
  out.t = Tensor<T>(x.t.shape());
  Tensor<T> xhat(x.t.shape());
  Tensor<T> inv(Shape{c_count});
  const bool batch = use_batch_stats;
  if (batch) {
    Tensor<T>& rm = store->value(layer.run_mean);
    Tensor<T>& rv = store->value(layer.run_var);
    for (std::int64_t c = 0; c < c_count; ++c) {
      T mu = T(0);
      for (std::int64_t i = 0; i < hw; ++i) mu += x.t[c * hw + i];
      mu /= static_cast<T>(hw);
      T var = T(0);
      for (std::int64_t i = 0; i < hw; ++i) {
        const T d = x.t[c * hw + i] - mu;
        var += d * d;
      }
      var /= static_cast<T>(hw);
      inv[c] = T(1) / std::sqrt(var + layer.eps);
      for (std::int64_t i = 0; i < hw; ++i) {
        xhat[c * hw + i] = (x.t[c * hw + i] - mu) * inv[c];
        out.t[c * hw + i] = wgt[c] * xhat[c * hw + i] + bias[c];
      }
      if (update_running_stats) {
        rm[c] = (T(1) - layer.momentum) * rm[c] + layer.momentum * mu;
        rv[c] = (T(1) - layer.momentum) * rv[c] + layer.momentum * var;
      }
    }
  } else {
    const Tensor<T>& rm = store->value(layer.run_mean);
    const Tensor<T>& rv = store->value(layer.run_var);
    for (std::int64_t c = 0; c < c_count; ++c) {
      inv[c] = T(1) / std::sqrt(rv[c] + layer.eps);
      for (std::int64_t i = 0; i < hw; ++i) {
        xhat[c * hw + i] = (x.t[c * hw + i] - rm[c]) * inv[c];
        out.t[c * hw + i] = wgt[c] * xhat[c * hw + i] + bias[c];
      }
    }
  }
  if (!recording()) return out;
  out.id = tape->new_var(out.t.shape());
  tape->touch_param(layer.weight, wgt.shape());
  tape->touch_param(layer.bias, bias.shape());
  tape->push_node([xid = x.id, oid = out.id, xhat = std::move(xhat), inv = std::move(inv), wgt,
                   batch, hw, c_count, wid = layer.weight, bid = layer.bias](Tape<T>& tp) {
    const Tensor<T>* g = tp.var_grad(oid);
    if (!g) return;
    Tensor<T> gw(Shape{c_count}), gb(Shape{c_count});
    for (std::int64_t c = 0; c < c_count; ++c) {
      T sum_g = T(0), sum_gx = T(0);
      for (std::int64_t i = 0; i < hw; ++i) {
        sum_g += (*g)[c * hw + i];
        sum_gx += (*g)[c * hw + i] * xhat[c * hw + i];
      }
      gw[c] = sum_gx;
      gb[c] = sum_g;
      const T a = wgt[c] * inv[c];
      if (batch) {
        const T n = static_cast<T>(hw);
        for (std::int64_t i = 0; i < hw; ++i) {
          const T gi = (*g)[c * hw + i];
          tp.accum_var(xid, c * hw + i, a * (gi - sum_g / n - xhat[c * hw + i] * sum_gx / n));
        }
      } else {
        for (std::int64_t i = 0; i < hw; ++i) tp.accum_var(xid, c * hw + i, a * (*g)[c * hw + i]);
      }
    }
    tp.accum_param(wid, gw);
    tp.accum_param(bid, gb);
  });
  return out;
}

template <typename T>
Value<T> Ctx<T>::rprelu(const Value<T>& x, const RPReLULayer<T>& layer) {
  check_chw(x.t, "rprelu");
  const std::int64_t c_count = x.t.shape().dim(0);
  const std::int64_t hw = x.t.shape().dim(1) * x.t.shape().dim(2);
  const Tensor<T>& beta = store->value(layer.beta);
  const Tensor<T>& gamma = store->value(layer.gamma);
  const Tensor<T>& zeta = store->value(layer.zeta);
  if (beta.size() != c_count) throw Error(ErrorKind::kChannelMismatch, "rprelu channels");
  Value<T> out;
  out.t = Tensor<T>(x.t.shape());
  for (std::int64_t c = 0; c < c_count; ++c) {
    for (std::int64_t i = 0; i < hw; ++i) {
      const T y = x.t[c * hw + i];
      out.t[c * hw + i] =
          y > gamma[c] ? (y - gamma[c]) + zeta[c] : beta[c] * (y - gamma[c]) + zeta[c];
    }
  }
  if (!recording()) return out;
  out.id = tape->new_var(out.t.shape());
  tape->touch_param(layer.beta, beta.shape());
  tape->touch_param(layer.gamma, gamma.shape());
  tape->touch_param(layer.zeta, zeta.shape());
  tape->push_node([xid = x.id, oid = out.id, xt = x.t, beta, gamma, hw, c_count,
                   bid = layer.beta, gid = layer.gamma, zid = layer.zeta](Tape<T>& tp) {
    const Tensor<T>* g = tp.var_grad(oid);
    if (!g) return;
    Tensor<T> gbeta(Shape{c_count}), ggamma(Shape{c_count}), gzeta(Shape{c_count});
    for (std::int64_t c = 0; c < c_count; ++c) {
      T sb = T(0), sg = T(0), sz = T(0);
      for (std::int64_t i = 0; i < hw; ++i) {
        const T y = xt[c * hw + i];
        const T gi = (*g)[c * hw + i];
        sz += gi;
        if (y > gamma[c]) {
          sg -= gi;
          tp.accum_var(xid, c * hw + i, gi);
        } else {
          // kink at y == gamma takes the y <= gamma branch
          sb += (y - gamma[c]) * gi;
          sg -= beta[c] * gi;
          tp.accum_var(xid, c * hw + i, beta[c] * gi);
        }
      }
      gbeta[c] = sb;
      ggamma[c] = sg;
      gzeta[c] = sz;
    }
    tp.accum_param(bid, gbeta);
    tp.accum_param(gid, ggamma);
    tp.accum_param(zid, gzeta);
  });
  return out;
}

template <typename T>
Value<T> Ctx<T>::fpconv(const Value<T>& x, const FpConvLayer<T>& layer) {
  check_chw(x.t, "fpconv");
  const ConvGeometry g = layer.geometry(x.t.shape().dim(1), x.t.shape().dim(2));
  const Tensor<T>& w = store->value(layer.w);
  const Tensor<T>& bias = store->value(layer.bias);
  Value<T> out;
  out.t = conv2d_fp(x.t, w, g, T(0));
  const std::int64_t ohw = g.h_out() * g.w_out();
  for (std::int64_t o = 0; o < g.c_out; ++o)
    for (std::int64_t i = 0; i < ohw; ++i) out.t[o * ohw + i] += bias[o];
  if (!recording()) return out;
  out.id = tape->new_var(out.t.shape());
  tape->touch_param(layer.w, w.shape());
  tape->touch_param(layer.bias, bias.shape());
  tape->push_node([xid = x.id, oid = out.id, xt = x.t, w, g, ohw, wid = layer.w,
                   bid = layer.bias](Tape<T>& tp) {
    const Tensor<T>* gout = tp.var_grad(oid);
    if (!gout) return;
    Tensor<T> gx = conv_input_grad(*gout, w, g);
    Tensor<T>& buf = tp.grad_buffer(xid);
    for (std::int64_t i = 0; i < gx.size(); ++i) buf[i] += gx[i];
    tp.accum_param(wid, conv_weight_grad(xt, *gout, g, T(0)));
    Tensor<T> gb(Shape{g.c_out});
    for (std::int64_t o = 0; o < g.c_out; ++o) {
      T s = T(0);
      for (std::int64_t i = 0; i < ohw; ++i) s += (*gout)[o * ohw + i];
      gb[o] = s;
    }
    tp.accum_param(bid, gb);
  });
  return out;
}

template <typename T>
Value<T> Ctx<T>::add(const Value<T>& a, const Value<T>& b) {
  if (a.t.shape() != b.t.shape())
    throw Error(ErrorKind::kShapeMismatch,
                "add " + a.t.shape().to_string() + " vs " + b.t.shape().to_string());
  Value<T> out;
  out.t = Tensor<T>(a.t.shape());
  for (std::int64_t i = 0; i < a.t.size(); ++i) out.t[i] = a.t[i] + b.t[i];
  if (!recording()) return out;
  out.id = tape->new_var(out.t.shape());
  tape->push_node([aid = a.id, bid = b.id, oid = out.id](Tape<T>& tp) {
    const Tensor<T>* g = tp.var_grad(oid);
    if (!g) return;
    for (std::int64_t i = 0; i < g->size(); ++i) {
      tp.accum_var(aid, i, (*g)[i]);
      tp.accum_var(bid, i, (*g)[i]);
    }
  });
  return out;
}

template <typename T>
Value<T> Ctx<T>::sigmoid(const Value<T>& x) {
  Value<T> out;
  out.t = Tensor<T>(x.t.shape());
  for (std::int64_t i = 0; i < x.t.size(); ++i) out.t[i] = T(1) / (T(1) + std::exp(-x.t[i]));
  if (!recording()) return out;
  out.id = tape->new_var(out.t.shape());
  tape->push_node([xid = x.id, oid = out.id, st = out.t](Tape<T>& tp) {
    const Tensor<T>* g = tp.var_grad(oid);
    if (!g) return;
    for (std::int64_t i = 0; i < st.size(); ++i)
      tp.accum_var(xid, i, (*g)[i] * st[i] * (T(1) - st[i]));
  });
  return out;
}

template <typename T>
Value<T> Ctx<T>::global_avg_pool(const Value<T>& x) {
  check_chw(x.t, "global_avg_pool");
  const std::int64_t c_count = x.t.shape().dim(0);
  const std::int64_t hw = x.t.shape().dim(1) * x.t.shape().dim(2);
  Value<T> out;
  out.t = Tensor<T>(Shape{c_count, 1, 1});
  for (std::int64_t c = 0; c < c_count; ++c) {
    T s = T(0);
    for (std::int64_t i = 0; i < hw; ++i) s += x.t[c * hw + i];
    out.t[c] = s / static_cast<T>(hw);
  }
  if (!recording()) return out;
  out.id = tape->new_var(out.t.shape());
  tape->push_node([xid = x.id, oid = out.id, c_count, hw](Tape<T>& tp) {
    const Tensor<T>* g = tp.var_grad(oid);
    if (!g) return;
    for (std::int64_t c = 0; c < c_count; ++c)
      for (std::int64_t i = 0; i < hw; ++i)
        tp.accum_var(xid, c * hw + i, (*g)[c] / static_cast<T>(hw));
  });
  return out;
}

template <typename T>
Value<T> Ctx<T>::channel_gate(const Value<T>& x, const Value<T>& gate) {
  check_chw(x.t, "channel_gate");
  const std::int64_t c_count = x.t.shape().dim(0);
  if (gate.t.shape() != Shape{c_count, 1, 1})
    throw Error(ErrorKind::kChannelMismatch, "gate shape " + gate.t.shape().to_string());
  const std::int64_t hw = x.t.shape().dim(1) * x.t.shape().dim(2);
  Value<T> out;
  out.t = Tensor<T>(x.t.shape());
  for (std::int64_t c = 0; c < c_count; ++c)
    for (std::int64_t i = 0; i < hw; ++i) out.t[c * hw + i] = gate.t[c] * x.t[c * hw + i];
  if (!recording()) return out;
  out.id = tape->new_var(out.t.shape());
  tape->push_node([xid = x.id, gid = gate.id, oid = out.id, xt = x.t, gt = gate.t, c_count,
                   hw](Tape<T>& tp) {
    const Tensor<T>* g = tp.var_grad(oid);
    if (!g) return;
    for (std::int64_t c = 0; c < c_count; ++c) {
      T gs = T(0);
      for (std::int64_t i = 0; i < hw; ++i) {
        const T gi = (*g)[c * hw + i];
        tp.accum_var(xid, c * hw + i, gt[c] * gi);
        gs += xt[c * hw + i] * gi;
      }
      tp.accum_var(gid, c, gs);
    }
  });
  return out;
}

template <typename T>
Value<T> Ctx<T>::upsample_nn2x(const Value<T>& x) {
  check_chw(x.t, "upsample_nn2x");
  const std::int64_t c_count = x.t.shape().dim(0), h = x.t.shape().dim(1), w = x.t.shape().dim(2);
  Value<T> out;
  out.t = Tensor<T>(Shape{c_count, 2 * h, 2 * w});
  for (std::int64_t c = 0; c < c_count; ++c)
    for (std::int64_t i = 0; i < h; ++i)
      for (std::int64_t j = 0; j < w; ++j) {
        const T v = x.t.at(c, i, j);
        out.t.at(c, 2 * i, 2 * j) = v;
        out.t.at(c, 2 * i, 2 * j + 1) = v;
        out.t.at(c, 2 * i + 1, 2 * j) = v;
        out.t.at(c, 2 * i + 1, 2 * j + 1) = v;
      }
  if (!recording()) return out;
  out.id = tape->new_var(out.t.shape());
  tape->push_node([xid = x.id, oid = out.id, c_count, h, w](Tape<T>& tp) {
    const Tensor<T>* g = tp.var_grad(oid);
    if (!g) return;
    for (std::int64_t c = 0; c < c_count; ++c)
      for (std::int64_t i = 0; i < h; ++i)
        for (std::int64_t j = 0; j < w; ++j) {
          const std::int64_t base = (c * 2 * h + 2 * i) * 2 * w + 2 * j;
          const T s = (*g)[base] + (*g)[base + 1] + (*g)[base + 2 * w] + (*g)[base + 2 * w + 1];
          tp.accum_var(xid, (c * h + i) * w + j, s);
        }
  });
  return out;
}

template <typename T>
Value<T> Ctx<T>::avgpool2x2(const Value<T>& x) {
  check_chw(x.t, "avgpool2x2");
  const std::int64_t c_count = x.t.shape().dim(0), h = x.t.shape().dim(1), w = x.t.shape().dim(2);
  if (h % 2 != 0 || w % 2 != 0)
    throw Error(ErrorKind::kIndivisibleShape, "avgpool2x2 needs even H,W, got " + x.t.shape().to_string());
  Value<T> out;
  out.t = Tensor<T>(Shape{c_count, h / 2, w / 2});
  for (std::int64_t c = 0; c < c_count; ++c)
    for (std::int64_t i = 0; i < h / 2; ++i)
      for (std::int64_t j = 0; j < w / 2; ++j)
        out.t.at(c, i, j) = (x.t.at(c, 2 * i, 2 * j) + x.t.at(c, 2 * i, 2 * j + 1) +
                             x.t.at(c, 2 * i + 1, 2 * j) + x.t.at(c, 2 * i + 1, 2 * j + 1)) /
                            T(4);
  if (!recording()) return out;
  out.id = tape->new_var(out.t.shape());
  tape->push_node([xid = x.id, oid = out.id, c_count, h, w](Tape<T>& tp) {
    const Tensor<T>* g = tp.var_grad(oid);
    if (!g) return;
    for (std::int64_t c = 0; c < c_count; ++c)
      for (std::int64_t i = 0; i < h / 2; ++i)
        for (std::int64_t j = 0; j < w / 2; ++j) {
          const T q = (*g)[(c * (h / 2) + i) * (w / 2) + j] / T(4);
          tp.accum_var(xid, (c * h + 2 * i) * w + 2 * j, q);
          tp.accum_var(xid, (c * h + 2 * i) * w + 2 * j + 1, q);
          tp.accum_var(xid, (c * h + 2 * i + 1) * w + 2 * j, q);
          tp.accum_var(xid, (c * h + 2 * i + 1) * w + 2 * j + 1, q);
        }
  });
  return out;
}

template <typename T>
Value<T> Ctx<T>::concat_channels(const Value<T>& a, const Value<T>& b) {
  check_chw(a.t, "concat_channels");
  if (a.t.shape().dim(1) != b.t.shape().dim(1) || a.t.shape().dim(2) != b.t.shape().dim(2))
    throw Error(ErrorKind::kShapeMismatch, "concat spatial mismatch");
  const std::int64_t ca = a.t.shape().dim(0), cb = b.t.shape().dim(0);
  const std::int64_t hw = a.t.shape().dim(1) * a.t.shape().dim(2);
  Value<T> out;
  out.t = Tensor<T>(Shape{ca + cb, a.t.shape().dim(1), a.t.shape().dim(2)});
  for (std::int64_t i = 0; i < ca * hw; ++i) out.t[i] = a.t[i];
  for (std::int64_t i = 0; i < cb * hw; ++i) out.t[ca * hw + i] = b.t[i];
  if (!recording()) return out;
  out.id = tape->new_var(out.t.shape());
  tape->push_node([aid = a.id, bid = b.id, oid = out.id, ca, cb, hw](Tape<T>& tp) {
    const Tensor<T>* g = tp.var_grad(oid);
    if (!g) return;
    for (std::int64_t i = 0; i < ca * hw; ++i) tp.accum_var(aid, i, (*g)[i]);
    for (std::int64_t i = 0; i < cb * hw; ++i) tp.accum_var(bid, i, (*g)[ca * hw + i]);
  });
  return out;
}

template <typename T>
Value<T> Ctx<T>::channel_pair_mean(const Value<T>& x) {
  check_chw(x.t, "channel_pair_mean");
  const std::int64_t c_count = x.t.shape().dim(0);
  if (c_count % 2 != 0)
    throw Error(ErrorKind::kIndivisibleShape, "channel_pair_mean needs even C, got " +
                                                  std::to_string(c_count));
  const std::int64_t hw = x.t.shape().dim(1) * x.t.shape().dim(2);
  Value<T> out;
  out.t = Tensor<T>(Shape{c_count / 2, x.t.shape().dim(1), x.t.shape().dim(2)});
  for (std::int64_t c = 0; c < c_count / 2; ++c)
    for (std::int64_t i = 0; i < hw; ++i)
      out.t[c * hw + i] = (x.t[(2 * c) * hw + i] + x.t[(2 * c + 1) * hw + i]) / T(2);
  if (!recording()) return out;
  out.id = tape->new_var(out.t.shape());
  tape->push_node([xid = x.id, oid = out.id, c_count, hw](Tape<T>& tp) {
    const Tensor<T>* g = tp.var_grad(oid);
    if (!g) return;
    for (std::int64_t c = 0; c < c_count / 2; ++c)
      for (std::int64_t i = 0; i < hw; ++i) {
        const T q = (*g)[c * hw + i] / T(2);
        tp.accum_var(xid, (2 * c) * hw + i, q);
        tp.accum_var(xid, (2 * c + 1) * hw + i, q);
      }
  });
  return out;
}

template <typename T>
Value<T> Ctx<T>::channel_to_height(const Value<T>& x, std::int64_t z, std::int64_t n_class) {
  check_chw(x.t, "channel_to_height");
  const std::int64_t c_count = x.t.shape().dim(0);
  const std::int64_t gx = x.t.shape().dim(1), gy = x.t.shape().dim(2);
  if (c_count != z * n_class)
    throw Error(ErrorKind::kChannelPlanMismatch, "C=" + std::to_string(c_count) + " != Z*n_class=" +
                                                     std::to_string(z * n_class));
  Value<T> out;
  out.t = Tensor<T>(Shape{n_class, gx, gy, z});
  for (std::int64_t zi = 0; zi < z; ++zi)
    for (std::int64_t n = 0; n < n_class; ++n)
      for (std::int64_t xi = 0; xi < gx; ++xi)
        for (std::int64_t yi = 0; yi < gy; ++yi)
          out.t.at4(n, xi, yi, zi) = x.t.at(zi * n_class + n, xi, yi);
  if (!recording()) return out;
  out.id = tape->new_var(out.t.shape());
  tape->push_node([xid = x.id, oid = out.id, z, n_class, gx, gy](Tape<T>& tp) {
    const Tensor<T>* g = tp.var_grad(oid);
    if (!g) return;
    for (std::int64_t zi = 0; zi < z; ++zi)
      for (std::int64_t n = 0; n < n_class; ++n)
        for (std::int64_t xi = 0; xi < gx; ++xi)
          for (std::int64_t yi = 0; yi < gy; ++yi)
            tp.accum_var(xid, ((zi * n_class + n) * gx + xi) * gy + yi,
                         (*g)[((n * gx + xi) * gy + yi) * z + zi]);
  });
  return out;
}

template <typename T>
Value<T> Ctx<T>::ortho_project(const std::vector<Value<T>>& views, std::int64_t grid_x,
                               std::int64_t grid_y, std::int64_t z_bands) {
  if (views.empty() || views.size() > 2)
    throw Error(ErrorKind::kShapeMismatch, "ortho_project expects 1 or 2 views");
  for (const auto& v : views) check_chw(v.t, "ortho_project");
  const std::int64_t c_count = views[0].t.shape().dim(0);
  const std::int64_t h2d = views[0].t.shape().dim(1);
  const std::int64_t w2d = views[0].t.shape().dim(2);
  if (z_bands < 1 || h2d % z_bands != 0 || c_count % z_bands != 0)
    throw Error(ErrorKind::kChannelPlanMismatch,
                "z_bands " + std::to_string(z_bands) + " must divide image rows " +
                    std::to_string(h2d) + " and channels " + std::to_string(c_count));
  // Channels are partitioned across height bands: channel c averages its
  // projecting column over the rows of band c / (C/z_bands).
  const std::int64_t band_rows = h2d / z_bands;
  const std::int64_t band_channels = c_count / z_bands;
  const std::int64_t n_view = static_cast<std::int64_t>(views.size());
  const T norm = T(1) / static_cast<T>(n_view * band_rows);

  Value<T> out;
  out.t = Tensor<T>(Shape{c_count, grid_x, grid_y});
  for (std::int64_t c = 0; c < c_count; ++c) {
    const std::int64_t row0 = (c / band_channels) * band_rows;
    for (std::int64_t xi = 0; xi < grid_x; ++xi) {
      const std::int64_t col0 = xi * w2d / grid_x;
      T colsum0 = T(0);
      for (std::int64_t hh = row0; hh < row0 + band_rows; ++hh)
        colsum0 += views[0].t.at(c, hh, col0);
      for (std::int64_t yi = 0; yi < grid_y; ++yi) {
        T acc = colsum0;
        if (n_view == 2) {
          const std::int64_t col1 = yi * w2d / grid_y;
          for (std::int64_t hh = row0; hh < row0 + band_rows; ++hh)
            acc += views[1].t.at(c, hh, col1);
        }
        out.t.at(c, xi, yi) = acc * norm;
      }
    }
  }
  if (!recording()) return out;
  out.id = tape->new_var(out.t.shape());
  std::vector<int> vids;
  for (const auto& v : views) vids.push_back(v.id);
  tape->push_node([vids, oid = out.id, c_count, h2d, w2d, grid_x, grid_y, band_rows,
                   band_channels, norm](Tape<T>& tp) {
    const Tensor<T>* g = tp.var_grad(oid);
    if (!g) return;
    for (std::int64_t c = 0; c < c_count; ++c) {
      const std::int64_t row0 = (c / band_channels) * band_rows;
      for (std::int64_t xi = 0; xi < grid_x; ++xi)
        for (std::int64_t yi = 0; yi < grid_y; ++yi) {
          const T gi = (*g)[(c * grid_x + xi) * grid_y + yi] * norm;
          const std::int64_t col0 = xi * w2d / grid_x;
          for (std::int64_t hh = row0; hh < row0 + band_rows; ++hh)
            tp.accum_var(vids[0], (c * h2d + hh) * w2d + col0, gi);
          if (vids.size() == 2) {
            const std::int64_t col1 = yi * w2d / grid_y;
            for (std::int64_t hh = row0; hh < row0 + band_rows; ++hh)
              tp.accum_var(vids[1], (c * h2d + hh) * w2d + col1, gi);
          }
        }
    }
  });
  return out;
}

template <typename T>
Value<T> Ctx<T>::cross_entropy(const Value<T>& logits, const IntTensor& labels) {
  if (logits.t.shape().rank() != 4)
    throw Error(ErrorKind::kShapeMismatch, "cross_entropy expects (N_class,X,Y,Z)");
  const std::int64_t n_class = logits.t.shape().dim(0);
  const std::int64_t n_vox = logits.t.size() / n_class;
  if (labels.size() != n_vox)
    throw Error(ErrorKind::kShapeMismatch, "labels " + labels.shape.to_string());
  Tensor<T> probs(logits.t.shape());
  double loss_acc = 0.0;
  for (std::int64_t v = 0; v < n_vox; ++v) {
    const std::int32_t label = labels[v];
    if (label < 0 || label >= n_class)
      throw Error(ErrorKind::kLabelOutOfRange, std::to_string(label));
    T max_logit = logits.t[v];
    for (std::int64_t n = 1; n < n_class; ++n)
      max_logit = std::max(max_logit, logits.t[n * n_vox + v]);
    T denom = T(0);
    for (std::int64_t n = 0; n < n_class; ++n) {
      const T e = std::exp(logits.t[n * n_vox + v] - max_logit);
      probs[n * n_vox + v] = e;
      denom += e;
    }
    for (std::int64_t n = 0; n < n_class; ++n) probs[n * n_vox + v] /= denom;
    loss_acc -= std::log(static_cast<double>(probs[label * n_vox + v]));
  }
  Value<T> out;
  out.t = Tensor<T>::scalar(static_cast<T>(loss_acc / static_cast<double>(n_vox)));
  if (!recording()) return out;
  out.id = tape->new_var(out.t.shape());
  tape->push_node([lid = logits.id, oid = out.id, probs = std::move(probs), labels, n_class,
                   n_vox](Tape<T>& tp) {
    const Tensor<T>* g = tp.var_grad(oid);
    if (!g) return;
    const T gs = (*g)[0] / static_cast<T>(n_vox);
    for (std::int64_t v = 0; v < n_vox; ++v)
      for (std::int64_t n = 0; n < n_class; ++n)
        tp.accum_var(lid, n * n_vox + v,
                     gs * (probs[n * n_vox + v] - (labels[v] == n ? T(1) : T(0))));
  });
  return out;
}

// ---------------------------------------------------------------------------
// AdamW
// ---------------------------------------------------------------------------

template <typename T>
void adamw_step(ParamStore<T>& store, const GradMap<T>& grads, OptimState<T>& state) {
  if (state.slots.size() < store.size()) state.slots.resize(store.size());
  state.step += 1;
  const T bc1 = T(1) - std::pow(state.beta1, static_cast<T>(state.step));
  const T bc2 = T(1) - std::pow(state.beta2, static_cast<T>(state.step));
  for (ParamId id : grads.keys()) {
    auto& param = store.at(id);
    if (!param.trainable) continue;
    const Tensor<T>& g = grads.at(id);
    if (g.shape() != param.value.shape())
      throw Error(ErrorKind::kShapeMismatch, "grad shape for " + param.name);
    auto& slot = state.slots[static_cast<std::size_t>(id)];
    if (!slot) slot.emplace(typename OptimState<T>::Slot{Tensor<T>(g.shape()), Tensor<T>(g.shape())});
    Tensor<T>& m = slot->m;
    Tensor<T>& v = slot->v;
    for (std::int64_t i = 0; i < g.size(); ++i) {
      m[i] = state.beta1 * m[i] + (T(1) - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (T(1) - state.beta2) * g[i] * g[i];
      const T mhat = m[i] / bc1;
      const T vhat = v[i] / bc2;
      param.value[i] -= state.lr * (mhat / (std::sqrt(vhat) + state.eps) +
                                    state.weight_decay * param.value[i]);
    }
  }
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

template <typename T>
FdReport<T> finite_diff_check(ParamStore<T>& store,
                              const std::function<Value<T>(Ctx<T>&)>& forward,
                              const Tensor<T>& loss_weights, T epsilon) {
  auto loss_of = [&](Ctx<T>& ctx) -> double {
    Value<T> out = forward(ctx);
    if (out.t.shape() != loss_weights.shape())
      throw Error(ErrorKind::kShapeMismatch, "loss weights shape");
    double acc = 0.0;
    for (std::int64_t i = 0; i < out.t.size(); ++i)
      acc += static_cast<double>(loss_weights[i]) * static_cast<double>(out.t[i]);
    return acc;
  };

  Tape<T> tape;
  Ctx<T> rec{&store, &tape, BinarizeMode::kSurrogate, true, false};
  Value<T> y = forward(rec);
  GradMap<T> analytic = tape.backward(y.id, loss_weights, store.size());

  FdReport<T> report;
  Ctx<T> pure{&store, nullptr, BinarizeMode::kSurrogate, true, false};
  for (ParamId id : analytic.keys()) {
    if (!store.at(id).trainable) continue;
    Tensor<T>& value = store.value(id);
    for (std::int64_t i = 0; i < value.size(); ++i) {
      const T keep = value[i];
      value[i] = keep + epsilon;
      const double up = loss_of(pure);
      value[i] = keep - epsilon;
      const double down = loss_of(pure);
      value[i] = keep;
      const double numeric = (up - down) / (2.0 * static_cast<double>(epsilon));
      const double a = static_cast<double>(analytic.at(id)[i]);
      const double denom = std::abs(a) + std::abs(numeric);
      report.checked += 1;
      if (denom <= 1e-8) continue;
      const double rel = std::abs(a - numeric) / denom;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = id;
        report.worst_index = i;
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------

template struct RedistLayer<float>;
template struct RedistLayer<double>;
template struct RPReLULayer<float>;
template struct RPReLULayer<double>;
template struct BatchNormLayer<float>;
template struct BatchNormLayer<double>;
template struct BinConvLayer<float>;
template struct BinConvLayer<double>;
template struct FpConvLayer<float>;
template struct FpConvLayer<double>;
template struct Ctx<float>;
template struct Ctx<double>;
template void adamw_step(ParamStore<float>&, const GradMap<float>&, OptimState<float>&);
template void adamw_step(ParamStore<double>&, const GradMap<double>&, OptimState<double>&);
template FdReport<float> finite_diff_check(ParamStore<float>&,
                                           const std::function<Value<float>(Ctx<float>&)>&,
                                           const Tensor<float>&, float);
template FdReport<double> finite_diff_check(ParamStore<double>&,
                                            const std::function<Value<double>(Ctx<double>&)>&,
                                            const Tensor<double>&, double);

}  // namespace bdc
