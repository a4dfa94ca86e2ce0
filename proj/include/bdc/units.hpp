#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bdc/autograd.hpp"

namespace bdc {

/// RPReLU parameters: per-channel beta (leak), gamma (threshold), zeta (shift).
template <typename T>
struct RPReLUParams {
  Tensor<T> beta, gamma, zeta;
};

/// Pure RPReLU: (y - gamma) + zeta where y > gamma, beta*(y - gamma) + zeta
/// where y <= gamma, channel-broadcast over (C,H,W).
template <typename T>
Tensor<T> rprelu(const Tensor<T>& y, const RPReLUParams<T>& p);

enum class BDCVariant { kV0, kV1, kV2, kV3 };

const char* to_string(BDCVariant v);
BDCVariant variant_from_string(const std::string& s);

struct BDCUnitConfig {
  BDCVariant variant = BDCVariant::kV3;
  int n_mulbiconv = 2;  // N; 0 means the MulBiconv is the identity
  std::int64_t channels = 32;
  // kernel_plan[0] is the first conv; the rest are the appended convs
  // (default 3 -> 1). V0 uses only kernel_plan[0].
  std::vector<int> kernel_plan = {3, 1};

  int first_kernel() const { return kernel_plan.at(0); }
  int second_kernel() const { return kernel_plan.size() > 1 ? kernel_plan[1] : 1; }
  std::string plan_string() const;
  void validate() const;
};

enum class ModuleKind { kBasic, kDownSample, kUpSample, kChannelReduce };

// ---------------------------------------------------------------------------
// Composite layers
// ---------------------------------------------------------------------------

/// redistribute -> sign -> binarized conv -> BN.
template <typename T>
struct BinConvStage {
  RedistLayer<T> redist;
  BinConvLayer<T> conv;
  BatchNormLayer<T> bn;

  static BinConvStage create(ParamStore<T>& store, const std::string& prefix, std::int64_t c_in,
                             std::int64_t c_out, int kernel, int stride, Rng& rng);
  Value<T> forward(Ctx<T>& ctx, const Value<T>& x) const;
  void refresh(const ParamStore<T>& store) { conv.refresh(store); }
};

/// One MulBiconv repetition: RPReLU -> redistribute -> sign -> 1x1 bitconv.
template <typename T>
struct MulBiconvStage {
  RPReLULayer<T> act;
  RedistLayer<T> redist;
  BinConvLayer<T> conv;  // 1x1, C -> C

  static MulBiconvStage create(ParamStore<T>& store, const std::string& prefix,
                               std::int64_t channels, Rng& rng);
  Value<T> forward(Ctx<T>& ctx, const Value<T>& x) const;
  void refresh(const ParamStore<T>& store) { conv.refresh(store); }
};

/// Applies the N-stage MulBiconv stack. N = 0 returns the input unchanged.
/// Every conv must be 1x1 (KernelNotOne otherwise) and the stack length must
/// equal n (StackLengthMismatch).
template <typename T>
Value<T> mulbiconv(Ctx<T>& ctx, const Value<T>& x, const std::vector<MulBiconvStage<T>>& stack,
                   int n);

/// Squeeze-excitation style per-channel weight branch:
/// s = Sigmoid(MulBiconv_N(AvgPool(x1))), out = s (.) x1.
template <typename T>
Value<T> channel_weight_branch(Ctx<T>& ctx, const Value<T>& x1,
                               const std::vector<MulBiconvStage<T>>& branch, int n);

// ---------------------------------------------------------------------------
// BDC unit (variants V0-V3)
// ---------------------------------------------------------------------------

template <typename T>
struct BDCUnit {
  enum class Residual { kIdentity, kPairMean };

  BDCUnitConfig cfg;
  std::int64_t c_in = 0, c_out = 0;
  Residual residual = Residual::kIdentity;

  BinConvStage<T> first;
  struct Extra {
    RPReLULayer<T> act;
    BinConvStage<T> stage;
  };
  std::vector<Extra> extras;                 // kernel_plan[1..] (V1+)
  std::optional<RPReLULayer<T>> v0_act;      // trailing RPReLU (V0 only)
  std::vector<MulBiconvStage<T>> mul;        // V2 main path / V3 branch

  static BDCUnit build(ParamStore<T>& store, const BDCUnitConfig& cfg, std::int64_t c_in,
                       std::int64_t c_out, Residual residual, const std::string& prefix, Rng& rng);
  Value<T> forward(Ctx<T>& ctx, const Value<T>& x) const;
  void refresh(const ParamStore<T>& store);
};

// ---------------------------------------------------------------------------
// The four convolution modules
// ---------------------------------------------------------------------------

/// DownSample: two parallel binarized 3x3 stride-2 conv branches concatenated
/// channel-wise; residual is the stride-2 average pool of the input
/// concatenated to itself. The full-precision twin swaps each
/// redistribute/sign/bitconv chain for a plain conv.
template <typename T>
struct DownSampleModule {
  bool binarized = true;
  std::int64_t c_in = 0;

  struct Branch {
    RedistLayer<T> redist;  // binarized only
    BinConvLayer<T> bconv;  // binarized only
    FpConvLayer<T> fconv;   // fp only
    BatchNormLayer<T> bn;
    RPReLULayer<T> act;
  };
  Branch a, b;

  static DownSampleModule build(ParamStore<T>& store, std::int64_t c_in, bool binarized,
                                const std::string& prefix, Rng& rng);
  Value<T> forward(Ctx<T>& ctx, const Value<T>& x) const;
  void refresh(const ParamStore<T>& store);
};

/// A module of any ModuleKind, dispatching on the shape contract:
/// Basic (C,H,W)->(C,H,W); DownSample -> (2C,H/2,W/2); UpSample -> (C,2H,2W);
/// ChannelReduce -> (C/2,H,W).
template <typename T>
struct Module {
  ModuleKind kind = ModuleKind::kBasic;
  std::optional<BDCUnit<T>> unit;              // Basic / UpSample / ChannelReduce
  std::optional<DownSampleModule<T>> down;

  static Module build(ParamStore<T>& store, ModuleKind kind, const BDCUnitConfig& cfg,
                      std::int64_t c_in, bool binarized, const std::string& prefix, Rng& rng);
  Value<T> forward(Ctx<T>& ctx, const Value<T>& x) const;
  void refresh(const ParamStore<T>& store);
};

}  // namespace bdc
