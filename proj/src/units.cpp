#include "bdc/units.hpp"

#include <sstream>

namespace bdc {

template <typename T>
Tensor<T> rprelu(const Tensor<T>& y, const RPReLUParams<T>& p) {
  if (y.shape().rank() != 3)
    throw Error(ErrorKind::kShapeMismatch, "rprelu expects (C,H,W)");
  const std::int64_t c_count = y.shape().dim(0);
  if (p.beta.size() != c_count || p.gamma.size() != c_count || p.zeta.size() != c_count)
    throw Error(ErrorKind::kChannelMismatch, "rprelu params vs C=" + std::to_string(c_count));
  Tensor<T> out(y.shape());
  const std::int64_t hw = y.shape().dim(1) * y.shape().dim(2);
  for (std::int64_t c = 0; c < c_count; ++c)
    for (std::int64_t i = 0; i < hw; ++i) {
      const T v = y[c * hw + i];
      out[c * hw + i] =
          v > p.gamma[c] ? (v - p.gamma[c]) + p.zeta[c] : p.beta[c] * (v - p.gamma[c]) + p.zeta[c];
    }
  return out;
}

const char* to_string(BDCVariant v) {
  switch (v) {
    case BDCVariant::kV0: return "V0";
    case BDCVariant::kV1: return "V1";
    case BDCVariant::kV2: return "V2";
    case BDCVariant::kV3: return "V3";
  }
  return "?";
}

BDCVariant variant_from_string(const std::string& s) {
  if (s == "V0" || s == "v0") return BDCVariant::kV0;
  if (s == "V1" || s == "v1") return BDCVariant::kV1;
  if (s == "V2" || s == "v2") return BDCVariant::kV2;
  if (s == "V3" || s == "v3") return BDCVariant::kV3;
  throw Error(ErrorKind::kConfig, "unknown variant '" + s + "'");
}

std::string BDCUnitConfig::plan_string() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < kernel_plan.size(); ++i) os << (i ? "-" : "") << kernel_plan[i];
  return os.str();
}

void BDCUnitConfig::validate() const {
  if (channels < 1) throw Error(ErrorKind::kConfig, "channels must be >= 1");
  if (n_mulbiconv < 0) throw Error(ErrorKind::kConfig, "n_mulbiconv must be >= 0");
  if (kernel_plan.empty()) throw Error(ErrorKind::kConfig, "empty kernel plan");
  for (int k : kernel_plan)
    if (k != 1 && k != 3) throw Error(ErrorKind::kInvalidKernel, std::to_string(k));
  if (variant != BDCVariant::kV0 && kernel_plan.size() < 2)
    throw Error(ErrorKind::kConfig, "V1-V3 need at least two convs in the kernel plan");
}

// ---------------------------------------------------------------------------

template <typename T>
BinConvStage<T> BinConvStage<T>::create(ParamStore<T>& store, const std::string& prefix,
                                        std::int64_t c_in, std::int64_t c_out, int kernel,
                                        int stride, Rng& rng) {
  BinConvStage stage;
  stage.redist = RedistLayer<T>::create(store, prefix + ".redist", c_in);
  stage.conv = BinConvLayer<T>::create(store, prefix + ".conv", c_in, c_out, kernel, stride,
                                       kernel / 2, rng);
  stage.bn = BatchNormLayer<T>::create(store, prefix, c_out);
  return stage;
}

template <typename T>
Value<T> BinConvStage<T>::forward(Ctx<T>& ctx, const Value<T>& x) const {
  Value<T> v = ctx.redistribute(x, redist);
  v = ctx.sign(v, conv.alpha);
  v = ctx.binconv(v, conv);
  return ctx.batchnorm(v, bn);
}

template <typename T>
MulBiconvStage<T> MulBiconvStage<T>::create(ParamStore<T>& store, const std::string& prefix,
                                            std::int64_t channels, Rng& rng) {
  MulBiconvStage stage;
  stage.act = RPReLULayer<T>::create(store, prefix + ".act", channels);
  stage.redist = RedistLayer<T>::create(store, prefix + ".redist", channels);
  stage.conv = BinConvLayer<T>::create(store, prefix + ".conv", channels, channels, 1, 1, 0, rng);
  return stage;
}

template <typename T>
Value<T> MulBiconvStage<T>::forward(Ctx<T>& ctx, const Value<T>& x) const {
  Value<T> v = ctx.rprelu(x, act);
  v = ctx.redistribute(v, redist);
  v = ctx.sign(v, conv.alpha);
  return ctx.binconv(v, conv);
}

template <typename T>
Value<T> mulbiconv(Ctx<T>& ctx, const Value<T>& x, const std::vector<MulBiconvStage<T>>& stack,
                   int n) {
  if (static_cast<int>(stack.size()) != n)
    throw Error(ErrorKind::kStackLengthMismatch,
                std::to_string(stack.size()) + " stages for N=" + std::to_string(n));
  Value<T> v = x;
  for (const auto& stage : stack) {
    if (stage.conv.kernel != 1) throw Error(ErrorKind::kKernelNotOne, "mulbiconv conv");
    v = stage.forward(ctx, v);
  }
  return v;
}

template <typename T>
Value<T> channel_weight_branch(Ctx<T>& ctx, const Value<T>& x1,
                               const std::vector<MulBiconvStage<T>>& branch, int n) {
  Value<T> s = ctx.global_avg_pool(x1);
  s = mulbiconv(ctx, s, branch, n);
  s = ctx.sigmoid(s);
  return ctx.channel_gate(x1, s);
}

// ---------------------------------------------------------------------------

template <typename T>
BDCUnit<T> BDCUnit<T>::build(ParamStore<T>& store, const BDCUnitConfig& cfg, std::int64_t c_in,
                             std::int64_t c_out, Residual residual, const std::string& prefix,
                             Rng& rng) {
  cfg.validate();
  BDCUnit unit;
  unit.cfg = cfg;
  unit.c_in = c_in;
  unit.c_out = c_out;
  unit.residual = residual;
  unit.first = BinConvStage<T>::create(store, prefix + ".s0", c_in, c_out, cfg.kernel_plan[0], 1, rng);
  if (cfg.variant == BDCVariant::kV0) {
    unit.v0_act = RPReLULayer<T>::create(store, prefix + ".act0", c_out);
    return unit;
  }
  for (std::size_t i = 1; i < cfg.kernel_plan.size(); ++i) {
    Extra extra;
    const std::string sp = prefix + ".s" + std::to_string(i);
    extra.act = RPReLULayer<T>::create(store, sp + ".act", c_out);
    extra.stage = BinConvStage<T>::create(store, sp, c_out, c_out, cfg.kernel_plan[i], 1, rng);
    unit.extras.push_back(std::move(extra));
  }
  if (cfg.variant == BDCVariant::kV2 || cfg.variant == BDCVariant::kV3) {
    for (int i = 0; i < cfg.n_mulbiconv; ++i)
      unit.mul.push_back(
          MulBiconvStage<T>::create(store, prefix + ".mul" + std::to_string(i), c_out, rng));
  }
  return unit;
}

template <typename T>
Value<T> BDCUnit<T>::forward(Ctx<T>& ctx, const Value<T>& x) const {
  if (x.t.shape().rank() != 3 || x.t.shape().dim(0) != c_in)
    throw Error(ErrorKind::kShapeMismatch, "unit input " + x.t.shape().to_string());
  Value<T> path = first.forward(ctx, x);
  if (cfg.variant == BDCVariant::kV0) {
    path = ctx.rprelu(path, *v0_act);
  } else {
    for (const auto& extra : extras) {
      path = ctx.rprelu(path, extra.act);
      path = extra.stage.forward(ctx, path);
    }
    if (cfg.variant == BDCVariant::kV2) {
      path = mulbiconv(ctx, path, mul, cfg.n_mulbiconv);
    } else if (cfg.variant == BDCVariant::kV3) {
      path = channel_weight_branch(ctx, path, mul, cfg.n_mulbiconv);
    }
  }
  Value<T> res = residual == Residual::kIdentity ? x : ctx.channel_pair_mean(x);
  return ctx.add(path, res);
}

template <typename T>
void BDCUnit<T>::refresh(const ParamStore<T>& store) {
  first.refresh(store);
  for (auto& extra : extras) extra.stage.refresh(store);
  for (auto& stage : mul) stage.refresh(store);
}

// ---------------------------------------------------------------------------

template <typename T>
DownSampleModule<T> DownSampleModule<T>::build(ParamStore<T>& store, std::int64_t c_in,
                                               bool binarized, const std::string& prefix,
                                               Rng& rng) {
  DownSampleModule mod;
  mod.binarized = binarized;
  mod.c_in = c_in;
  auto make_branch = [&](const std::string& bp) {
    Branch branch;
    if (binarized) {
      branch.redist = RedistLayer<T>::create(store, bp + ".redist", c_in);
      branch.bconv = BinConvLayer<T>::create(store, bp + ".conv", c_in, c_in, 3, 2, 1, rng);
    } else {
      branch.fconv = FpConvLayer<T>::create(store, bp + ".conv", c_in, c_in, 3, 2, 1, rng);
    }
    branch.bn = BatchNormLayer<T>::create(store, bp, c_in);
    branch.act = RPReLULayer<T>::create(store, bp + ".act", c_in);
    return branch;
  };
  mod.a = make_branch(prefix + ".a");
  mod.b = make_branch(prefix + ".b");
  return mod;
}

template <typename T>
Value<T> DownSampleModule<T>::forward(Ctx<T>& ctx, const Value<T>& x) const {
  if (x.t.shape().dim(1) % 2 != 0 || x.t.shape().dim(2) % 2 != 0)
    throw Error(ErrorKind::kIndivisibleShape, "DownSample needs even H,W");
  auto run_branch = [&](const Branch& branch) {
    Value<T> v;
    if (binarized) {
      v = ctx.redistribute(x, branch.redist);
      v = ctx.sign(v, branch.bconv.alpha);
      v = ctx.binconv(v, branch.bconv);
    } else {
      v = ctx.fpconv(x, branch.fconv);
    }
    v = ctx.batchnorm(v, branch.bn);
    return ctx.rprelu(v, branch.act);
  };
  Value<T> path = ctx.concat_channels(run_branch(a), run_branch(b));
  Value<T> pooled = ctx.avgpool2x2(x);
  Value<T> res = ctx.concat_channels(pooled, pooled);
  return ctx.add(path, res);
}

template <typename T>
void DownSampleModule<T>::refresh(const ParamStore<T>& store) {
  if (binarized) {
    a.bconv.refresh(store);
    b.bconv.refresh(store);
  }
}

// ---------------------------------------------------------------------------

template <typename T>
Module<T> Module<T>::build(ParamStore<T>& store, ModuleKind kind, const BDCUnitConfig& base_cfg,
                           std::int64_t c_in, bool binarized, const std::string& prefix, Rng& rng) {
  Module mod;
  mod.kind = kind;
  BDCUnitConfig cfg = base_cfg;
  cfg.channels = c_in;
  switch (kind) {
    case ModuleKind::kBasic:
    case ModuleKind::kUpSample:
      mod.unit = BDCUnit<T>::build(store, cfg, c_in, c_in, BDCUnit<T>::Residual::kIdentity, prefix, rng);
      break;
    case ModuleKind::kChannelReduce:
      if (c_in % 2 != 0) throw Error(ErrorKind::kIndivisibleShape, "ChannelReduce needs even C");
      mod.unit =
          BDCUnit<T>::build(store, cfg, c_in, c_in / 2, BDCUnit<T>::Residual::kPairMean, prefix, rng);
      break;
    case ModuleKind::kDownSample:
      mod.down = DownSampleModule<T>::build(store, c_in, binarized, prefix, rng);
      break;
  }
  return mod;
}

template <typename T>
Value<T> Module<T>::forward(Ctx<T>& ctx, const Value<T>& x) const {
  switch (kind) {
    case ModuleKind::kBasic:
    case ModuleKind::kChannelReduce:
      return unit->forward(ctx, x);
    case ModuleKind::kUpSample: {
      Value<T> up = ctx.upsample_nn2x(x);
      return unit->forward(ctx, up);
    }
    case ModuleKind::kDownSample:
      return down->forward(ctx, x);
  }
  throw Error(ErrorKind::kConfig, "bad module kind");
}

template <typename T>
void Module<T>::refresh(const ParamStore<T>& store) {
  if (unit) unit->refresh(store);
  if (down) down->refresh(store);
}

// ---------------------------------------------------------------------------

template Tensor<float> rprelu(const Tensor<float>&, const RPReLUParams<float>&);
template Tensor<double> rprelu(const Tensor<double>&, const RPReLUParams<double>&);
template struct BinConvStage<float>;
template struct BinConvStage<double>;
template struct MulBiconvStage<float>;
template struct MulBiconvStage<double>;
template Value<float> mulbiconv(Ctx<float>&, const Value<float>&,
                                const std::vector<MulBiconvStage<float>>&, int);
template Value<double> mulbiconv(Ctx<double>&, const Value<double>&,
                                 const std::vector<MulBiconvStage<double>>&, int);
template Value<float> channel_weight_branch(Ctx<float>&, const Value<float>&,
                                            const std::vector<MulBiconvStage<float>>&, int);
template Value<double> channel_weight_branch(Ctx<double>&, const Value<double>&,
                                             const std::vector<MulBiconvStage<double>>&, int);
template struct BDCUnit<float>;
template struct BDCUnit<double>;
template struct DownSampleModule<float>;
template struct DownSampleModule<double>;
template struct Module<float>;
template struct Module<double>;

}  // namespace bdc
