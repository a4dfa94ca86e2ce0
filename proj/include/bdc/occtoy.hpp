#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bdc/analysis.hpp"
#include "bdc/units.hpp"

namespace bdc::toy {

/// Synthetic desk-scale scene: deterministic orthographic renders plus voxel
/// labels. Class 0 is free space.
struct ToyScene {
  Tensor<float> views;  // (N_view, C_img, H, W); ch 0 depth, ch 1 class intensity
  IntTensor labels;     // (X, Y, Z), values in [0, n_class)
};

struct SceneRenderSpec {
  std::int64_t n_view = 2;
  std::int64_t img_c = 2;
  std::int64_t img_h = 32;
  std::int64_t img_w = 32;
};

/// Orthographic ray-marched renders of a label grid: view 0 marches along +y,
/// view 1 along +x. Channel 0 is the normalized first-hit depth (background
/// 1.0), channel 1 the hit class scaled to [0,1].
Tensor<float> render_views(const IntTensor& labels, int n_class, const SceneRenderSpec& render);

/// Places n_boxes axis-aligned boxes of random class at random positions and
/// renders them. Bitwise identical for identical seeds.
ToyScene generate_scene(std::uint64_t seed, const Shape& grid, int n_boxes, int n_class,
                        const SceneRenderSpec& render = {});

// ---------------------------------------------------------------------------
// Network assembly
// ---------------------------------------------------------------------------

enum class BinarizeScope { kBase, kTiny };

/// Pipeline plan: fp stem -> DownSample x2 -> fixed orthographic projection
/// (z-banded, so BEV channels carry height) -> Basic x2 (BEV encoder) ->
/// ChannelReduce + channel-to-height head. Base scope binarizes the BEV
/// encoder and head; Tiny also binarizes the image DownSample modules. The
/// stem and the projection stay full-precision.
struct NetSpec {
  BDCUnitConfig unit;
  BinarizeScope scope = BinarizeScope::kBase;
  std::int64_t grid_x = 16, grid_y = 16, grid_z = 4;
  std::int64_t n_class = 4;
  std::int64_t n_view = 2;
  std::int64_t img_c = 2, img_h = 32, img_w = 32;
  std::int64_t stem_channels = 8;
  int n_boxes = 3;

  std::int64_t c2d() const { return stem_channels * 4; }
  std::int64_t c_bev() const { return c2d(); }
  void validate() const;
  SceneRenderSpec render_spec() const { return {n_view, img_c, img_h, img_w}; }
};

template <typename T>
struct OccNet {
  NetSpec spec;
  ParamStore<T> store;
  FpConvLayer<T> stem;
  BatchNormLayer<T> stem_bn;
  RPReLULayer<T> stem_act;
  Module<T> ds1, ds2;    // image neck analogue
  Module<T> bev1, bev2;  // BEV encoder
  Module<T> head;        // ChannelReduce before channel-to-height

  static OccNet build(const NetSpec& spec, std::uint64_t seed);
  /// Logits (n_class, X, Y, Z).
  Value<T> forward(Ctx<T>& ctx, const std::vector<Value<T>>& views) const;
  Value<T> forward_scene(Ctx<T>& ctx, const ToyScene& scene) const;
  Value<T> loss(Ctx<T>& ctx, const ToyScene& scene) const;
  void refresh();
  NetworkCost cost() const;
};

/// Per-module cost mirroring the forward walk; the fixed projection has no
/// parameters and contributes no conv ops.
template <typename T>
NetworkCost network_cost(const OccNet<T>& net);

// ---------------------------------------------------------------------------
// Metric
// ---------------------------------------------------------------------------

struct MiouResult {
  std::vector<double> per_class;  // 0 where the class is absent from both
  std::vector<bool> present;      // class appears in pred or gt
  double mean = 0.0;              // over present classes
};

/// IoU_c = |pred==c && gt==c| / |pred==c || gt==c|; classes absent from both
/// are excluded from the mean.
MiouResult miou(const IntTensor& pred, const IntTensor& gt, int n_class);

/// Multi-scene accumulator (aggregate counts, then one IoU per class).
class MiouAccum {
 public:
  explicit MiouAccum(int n_class) : inter_(n_class, 0), uni_(n_class, 0) {}
  void add(const IntTensor& pred, const IntTensor& gt);
  MiouResult result() const;

 private:
  std::vector<std::int64_t> inter_, uni_;
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  std::uint64_t seed = 0;
  int epochs = 4;
  int train_scenes = 50;
  int eval_scenes = 12;
  double lr = 1e-4;
  double weight_decay = 1e-2;
  std::string config_hash;
  std::function<void(int epoch, double mean_loss)> on_epoch;  // optional
};

struct TrainReport {
  std::vector<double> epoch_losses;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double final_miou = 0.0;
  std::vector<double> per_class_iou;
  std::vector<bool> class_present;
  double baseline_miou = 0.0;  // constant majority-class predictor
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  std::string config_hash;
};

std::vector<ToyScene> make_dataset(const NetSpec& spec, std::uint64_t master_seed, int count,
                                   std::uint64_t stream_offset);

/// Voxel cross-entropy + AdamW, one scene per step, deterministic for a given
/// seed. Throws NumericError on a non-finite loss.
TrainReport train(OccNet<float>& net, const std::vector<ToyScene>& train_set,
                  const std::vector<ToyScene>& eval_set, const TrainConfig& cfg);

/// Evaluation used by the checkpoint round-trip: eval-mode (running stats)
/// aggregate mIoU over the set plus the majority baseline.
struct EvalResult {
  MiouResult model;
  double baseline_mean = 0.0;
};
EvalResult evaluate(const OccNet<float>& net, const std::vector<ToyScene>& eval_set);

// ---------------------------------------------------------------------------
// Ablation driver
// ---------------------------------------------------------------------------

struct AblationRow {
  std::string group;  // breakdown | kernel | nsweep-v2 | nsweep-v3
  std::string label;
  BDCVariant variant;
  std::string kernel_plan;
  int n_mulbiconv = 0;
  double miou = 0.0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  CostReport cost;
  std::uint64_t seed = 0;
};

/// Runs the break-down (V0-V3), kernel (3-1, 3-3, 1-1, 3-3-1) and MulBiconv
/// N-sweep (V2/V3, N in 0..4) tables under identical seeds and budgets.
std::vector<AblationRow> run_ablations(const NetSpec& base_spec, const TrainConfig& cfg);

}  // namespace bdc::toy
