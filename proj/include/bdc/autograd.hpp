#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bdc/binarize.hpp"
#include "bdc/bitconv.hpp"
#include "bdc/rng.hpp"
#include "bdc/tensor.hpp"

namespace bdc {

using ParamId = std::int32_t;

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  bool trainable = true;
};

/// Owns every learnable/state tensor of a network; layers hold ParamIds.
template <typename T>
class ParamStore {
 public:
  ParamId add(std::string name, Tensor<T> value, bool trainable = true) {
    params_.push_back({std::move(name), std::move(value), trainable});
    return static_cast<ParamId>(params_.size() - 1);
  }
  Param<T>& at(ParamId id) { return params_[static_cast<std::size_t>(id)]; }
  const Param<T>& at(ParamId id) const { return params_[static_cast<std::size_t>(id)]; }
  const Tensor<T>& value(ParamId id) const { return params_[static_cast<std::size_t>(id)].value; }
  Tensor<T>& value(ParamId id) { return params_[static_cast<std::size_t>(id)].value; }
  std::size_t size() const { return params_.size(); }

  std::int64_t trainable_element_count() const {
    std::int64_t n = 0;
    for (const auto& p : params_)
      if (p.trainable) n += p.value.size();
    return n;
  }
  std::vector<ParamId> trainable_ids() const {
    std::vector<ParamId> ids;
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (params_[i].trainable) ids.push_back(static_cast<ParamId>(i));
    return ids;
  }

 private:
  std::vector<Param<T>> params_;
};

/// Gradient accumulator keyed by ParamId. A slot exists exactly when the
/// parameter was touched in the recorded forward.
template <typename T>
class GradMap {
 public:
  explicit GradMap(std::size_t n_params = 0) : slots_(n_params) {}

  void ensure(ParamId id, const Shape& shape) {
    auto& s = slots_[static_cast<std::size_t>(id)];
    if (!s) s.emplace(shape);
  }
  void accum(ParamId id, const Tensor<T>& g) {
    ensure(id, g.shape());
    auto& t = *slots_[static_cast<std::size_t>(id)];
    for (std::int64_t i = 0; i < g.size(); ++i) t[i] += g[i];
  }
  bool has(ParamId id) const {
    return static_cast<std::size_t>(id) < slots_.size() &&
           slots_[static_cast<std::size_t>(id)].has_value();
  }
  const Tensor<T>& at(ParamId id) const { return *slots_[static_cast<std::size_t>(id)]; }
  std::vector<ParamId> keys() const {
    std::vector<ParamId> out;
    for (std::size_t i = 0; i < slots_.size(); ++i)
      if (slots_[i]) out.push_back(static_cast<ParamId>(i));
    return out;
  }

 private:
  std::vector<std::optional<Tensor<T>>> slots_;
};

/// Ordered record of executed primitive ops. Backward replays nodes in exact
/// reverse execution order; closures capture the tensors they need, so the
/// backward never consults the binarize mode.
template <typename T>
class Tape {
 public:
  int new_var(const Shape& shape) {
    shapes_.push_back(shape);
    grads_.emplace_back();
    return static_cast<int>(shapes_.size() - 1);
  }
  const Shape& var_shape(int id) const { return shapes_[static_cast<std::size_t>(id)]; }

  void push_node(std::function<void(Tape&)> back) { nodes_.push_back(std::move(back)); }
  void touch_param(ParamId id, const Shape& shape) { touched_.push_back({id, shape}); }

  // Backward-time accessors for node closures.
  const Tensor<T>* var_grad(int id) const {
    const auto& g = grads_[static_cast<std::size_t>(id)];
    return g.empty() ? nullptr : &g;
  }
  void accum_var(int id, std::int64_t index, T v) {
    auto& g = grads_[static_cast<std::size_t>(id)];
    if (g.empty()) g = Tensor<T>(shapes_[static_cast<std::size_t>(id)]);
    g[index] += v;
  }
  Tensor<T>& grad_buffer(int id) {
    auto& g = grads_[static_cast<std::size_t>(id)];
    if (g.empty()) g = Tensor<T>(shapes_[static_cast<std::size_t>(id)]);
    return g;
  }
  void accum_param(ParamId id, const Tensor<T>& g) { pg_->accum(id, g); }

  /// Runs reverse-mode accumulation from dL/dy and returns the gradient map
  /// (one slot per parameter touched in forward).
  GradMap<T> backward(int y, const Tensor<T>& dl_dy, std::size_t n_params) {
    if (dl_dy.shape() != var_shape(y))
      throw Error(ErrorKind::kTapeMismatch, "dL/dy shape " + dl_dy.shape().to_string() +
                                                " vs output " + var_shape(y).to_string());
    GradMap<T> grads(n_params);
    pg_ = &grads;
    for (const auto& [id, shape] : touched_) grads.ensure(id, shape);
    grad_buffer(y) = dl_dy;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)(*this);
    pg_ = nullptr;
    return grads;
  }

 private:
  std::vector<Shape> shapes_;
  std::vector<Tensor<T>> grads_;
  std::vector<std::function<void(Tape&)>> nodes_;
  std::vector<std::pair<ParamId, Shape>> touched_;
  GradMap<T>* pg_ = nullptr;
};

/// Hard: forward uses true sign so packed kernels run in training.
/// Surrogate: sign is replaced by tanh(alpha x) and binarized weights by
/// scale*clip(w), making the network plainly differentiable for gradient
/// checking. Backward rules are identical in both modes.
enum class BinarizeMode { kHard, kSurrogate };

// ---------------------------------------------------------------------------
// Layer parameter bundles
// ---------------------------------------------------------------------------

template <typename T>
struct RedistLayer {
  ParamId k{-1}, b{-1};
  static RedistLayer create(ParamStore<T>& store, const std::string& prefix, std::int64_t channels);
};

template <typename T>
struct RPReLULayer {
  ParamId beta{-1}, gamma{-1}, zeta{-1};
  static RPReLULayer create(ParamStore<T>& store, const std::string& prefix, std::int64_t channels);
};

template <typename T>
struct BatchNormLayer {
  ParamId weight{-1}, bias{-1};
  ParamId run_mean{-1}, run_var{-1};  // non-trainable state
  T momentum = T(0.1);
  T eps = T(1e-5);
  static BatchNormLayer create(ParamStore<T>& store, const std::string& prefix, std::int64_t channels);
  /// Eval-mode identity: running mean 0, var 1, weight 1, bias 0.
  void freeze_identity(ParamStore<T>& store) const;
};

template <typename T>
struct BinConvLayer {
  std::int64_t c_in = 0, c_out = 0;
  int kernel = 3, stride = 1, padding = 0;
  ParamId w{-1};
  T alpha = T(1);
  // Derived from the latent weights; recomputed by refresh() after every
  // optimizer step and treated as detached constants in between.
  T scale = T(0);
  BitTensor signs;
  Tensor<T> eff_w;  // scale * sign(latent)

  static BinConvLayer create(ParamStore<T>& store, const std::string& prefix, std::int64_t c_in,
                             std::int64_t c_out, int kernel, int stride, int padding, Rng& rng);
  void refresh(const ParamStore<T>& store);
  ConvGeometry geometry(std::int64_t h, std::int64_t w_in) const {
    return ConvGeometry{c_in, c_out, kernel, stride, padding, h, w_in};
  }
  BinaryConvParams<T> as_params(const ParamStore<T>& store) const {
    return BinaryConvParams<T>{store.value(w), scale, signs, alpha};
  }
};

template <typename T>
struct FpConvLayer {
  std::int64_t c_in = 0, c_out = 0;
  int kernel = 3, stride = 1, padding = 0;
  ParamId w{-1}, bias{-1};
  static FpConvLayer create(ParamStore<T>& store, const std::string& prefix, std::int64_t c_in,
                            std::int64_t c_out, int kernel, int stride, int padding, Rng& rng);
  ConvGeometry geometry(std::int64_t h, std::int64_t w_in) const {
    return ConvGeometry{c_in, c_out, kernel, stride, padding, h, w_in};
  }
};

// ---------------------------------------------------------------------------
// Recording context and primitive ops
// ---------------------------------------------------------------------------

template <typename T>
struct Value {
  Tensor<T> t;
  int id = -1;
};

template <typename T>
struct Ctx {
  ParamStore<T>* store = nullptr;
  Tape<T>* tape = nullptr;  // nullptr -> pure forward
  BinarizeMode mode = BinarizeMode::kHard;
  bool use_batch_stats = true;
  bool update_running_stats = true;

  bool recording() const { return tape != nullptr; }

  Value<T> input(Tensor<T> x);

  Value<T> redistribute(const Value<T>& x, const RedistLayer<T>& layer);
  Value<T> sign(const Value<T>& x, T alpha);
  Value<T> binconv(const Value<T>& x, const BinConvLayer<T>& layer);
  Value<T> batchnorm(const Value<T>& x, const BatchNormLayer<T>& layer);
  Value<T> rprelu(const Value<T>& x, const RPReLULayer<T>& layer);
  Value<T> fpconv(const Value<T>& x, const FpConvLayer<T>& layer);

  Value<T> add(const Value<T>& a, const Value<T>& b);
  Value<T> sigmoid(const Value<T>& x);
  Value<T> global_avg_pool(const Value<T>& x);
  /// out[c,h,w] = gate[c,0,0] * x[c,h,w]; gradient flows into both operands.
  Value<T> channel_gate(const Value<T>& x, const Value<T>& gate);
  Value<T> upsample_nn2x(const Value<T>& x);
  Value<T> avgpool2x2(const Value<T>& x);
  Value<T> concat_channels(const Value<T>& a, const Value<T>& b);
  Value<T> channel_pair_mean(const Value<T>& x);
  /// (Z*n_class, X, Y) -> (n_class, X, Y, Z), channel c = z*n_class + n.
  Value<T> channel_to_height(const Value<T>& x, std::int64_t z, std::int64_t n_class);
  /// Fixed orthographic scatter of per-view image features onto the BEV grid.
  /// View 0 columns map along X, view 1 columns along Y; each projecting
  /// column is averaged within z_bands row bands so the output channels
  /// (band-major, C*z_bands of them) keep height structure. No learnable
  /// state.
  Value<T> ortho_project(const std::vector<Value<T>>& views, std::int64_t grid_x,
                         std::int64_t grid_y, std::int64_t z_bands);
  /// Mean voxel-wise cross entropy; returns a scalar value.
  Value<T> cross_entropy(const Value<T>& logits, const IntTensor& labels);
};

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

template <typename T>
struct OptimState {
  struct Slot {
    Tensor<T> m, v;
  };
  std::vector<std::optional<Slot>> slots;
  std::int64_t step = 0;
  T lr = T(1e-4);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  T weight_decay = T(1e-2);
};

/// Decoupled-weight-decay Adam. Updates exactly the parameters present in the
/// gradient map; the caller refreshes derived conv state afterwards.
template <typename T>
void adamw_step(ParamStore<T>& store, const GradMap<T>& grads, OptimState<T>& state);

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

template <typename T>
struct FdReport {
  double max_rel_error = 0.0;
  ParamId worst_param = -1;
  std::int64_t worst_index = -1;
  std::int64_t checked = 0;
};

/// Central-difference check of every trainable parameter against backward().
/// `forward` must build the graph through the given Ctx (surrogate mode is
/// forced); loss = sum(loss_weights * output). Relative error is
/// |a-n| / (|a|+|n|), counted where |a|+|n| > 1e-8.
template <typename T>
FdReport<T> finite_diff_check(ParamStore<T>& store,
                              const std::function<Value<T>(Ctx<T>&)>& forward,
                              const Tensor<T>& loss_weights, T epsilon);

}  // namespace bdc
