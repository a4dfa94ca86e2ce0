#include "bdc/occtoy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "bdc/threads.hpp"

namespace bdc::toy {

// ---------------------------------------------------------------------------
// Scene generation
// ---------------------------------------------------------------------------

Tensor<float> render_views(const IntTensor& labels, int n_class, const SceneRenderSpec& render) {
  if (labels.shape.rank() != 3) throw Error(ErrorKind::kGridTooSmall, "labels must be (X,Y,Z)");
  if (render.img_c != 1 && render.img_c != 2)
    throw Error(ErrorKind::kConfig, "img_c must be 1 or 2");
  const std::int64_t gx = labels.shape.dim(0), gy = labels.shape.dim(1), gz = labels.shape.dim(2);
  Tensor<float> views(Shape{render.n_view, render.img_c, render.img_h, render.img_w});
  auto label_at = [&](std::int64_t x, std::int64_t y, std::int64_t z) {
    return labels[(x * gy + y) * gz + z];
  };
  for (std::int64_t v = 0; v < render.n_view; ++v) {
    for (std::int64_t h = 0; h < render.img_h; ++h) {
      const std::int64_t z = h * gz / render.img_h;
      for (std::int64_t w = 0; w < render.img_w; ++w) {
        float depth = 1.0f;
        float cls_intensity = 0.0f;
        if (v == 0) {
          const std::int64_t x = w * gx / render.img_w;
          for (std::int64_t y = 0; y < gy; ++y) {
            const std::int32_t c = label_at(x, y, z);
            if (c != 0) {
              depth = (static_cast<float>(y) + 0.5f) / static_cast<float>(gy);
              cls_intensity = static_cast<float>(c) / static_cast<float>(n_class - 1);
              break;
            }
          }
        } else {
          const std::int64_t y = w * gy / render.img_w;
          for (std::int64_t x = 0; x < gx; ++x) {
            const std::int32_t c = label_at(x, y, z);
            if (c != 0) {
              depth = (static_cast<float>(x) + 0.5f) / static_cast<float>(gx);
              cls_intensity = static_cast<float>(c) / static_cast<float>(n_class - 1);
              break;
            }
          }
        }
        views.at4(v, 0, h, w) = depth;
        if (render.img_c == 2) views.at4(v, 1, h, w) = cls_intensity;
      }
    }
  }
  return views;
}

ToyScene generate_scene(std::uint64_t seed, const Shape& grid, int n_boxes, int n_class,
                        const SceneRenderSpec& render) {
  if (grid.rank() != 3) throw Error(ErrorKind::kGridTooSmall, "grid must be (X,Y,Z)");
  const std::int64_t gx = grid.dim(0), gy = grid.dim(1), gz = grid.dim(2);
  if (gx < 4 || gy < 4 || gz < 4) throw Error(ErrorKind::kGridTooSmall, grid.to_string());
  if (n_class < 2) throw Error(ErrorKind::kConfig, "n_class must be >= 2");

  Rng rng(seed);
  ToyScene scene;
  scene.labels = IntTensor(grid, 0);
  // Box geometry lives on the even lattice; the two orthographic views are
  // rendered at half the grid resolution after the encoder, so odd-aligned
  // edges would be unresolvable by construction. Classes cycle through a
  // random permutation. Up to gz boxes get disjoint z-intervals (a random
  // contiguous partition of the height axis), which keeps every box fully
  // visible in both views; beyond that, z placement is free and boxes may
  // occlude each other.
  std::vector<std::int32_t> class_order(static_cast<std::size_t>(n_class - 1));
  for (int c = 1; c < n_class; ++c) class_order[static_cast<std::size_t>(c - 1)] = c;
  for (std::size_t i = class_order.size(); i > 1; --i)
    std::swap(class_order[i - 1], class_order[static_cast<std::size_t>(
                                      rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  std::vector<std::pair<std::int64_t, std::int64_t>> z_spans;  // (z0, sz)
  if (n_boxes > 0 && n_boxes <= gz) {
    std::vector<std::int64_t> cuts = {0, gz};
    while (static_cast<int>(cuts.size()) < n_boxes + 1) {
      const std::int64_t cut = rng.uniform_int(1, gz - 1);
      if (std::find(cuts.begin(), cuts.end(), cut) == cuts.end()) cuts.push_back(cut);
    }
    std::sort(cuts.begin(), cuts.end());
    for (int i = 0; i < n_boxes; ++i)
      z_spans.push_back({cuts[static_cast<std::size_t>(i)],
                         cuts[static_cast<std::size_t>(i + 1)] - cuts[static_cast<std::size_t>(i)]});
  }
  for (int box = 0; box < n_boxes; ++box) {
    const std::int32_t cls = class_order[static_cast<std::size_t>(box) % class_order.size()];
    const std::int64_t sx = 2 * rng.uniform_int(1, std::max<std::int64_t>(1, gx / 4));
    const std::int64_t sy = 2 * rng.uniform_int(1, std::max<std::int64_t>(1, gy / 4));
    std::int64_t z0, sz;
    if (!z_spans.empty()) {
      z0 = z_spans[static_cast<std::size_t>(box)].first;
      sz = z_spans[static_cast<std::size_t>(box)].second;
    } else {
      sz = rng.uniform_int(1, std::max<std::int64_t>(1, gz / 2));
      z0 = rng.uniform_int(0, gz - sz);
    }
    const std::int64_t x0 = 2 * rng.uniform_int(0, (gx - sx) / 2);
    const std::int64_t y0 = 2 * rng.uniform_int(0, (gy - sy) / 2);
    for (std::int64_t x = x0; x < x0 + sx; ++x)
      for (std::int64_t y = y0; y < y0 + sy; ++y)
        for (std::int64_t z = z0; z < z0 + sz; ++z)
          scene.labels[(x * gy + y) * gz + z] = cls;
  }
  scene.views = render_views(scene.labels, n_class, render);
  return scene;
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

void NetSpec::validate() const {
  unit.validate();
  if (n_view != 1 && n_view != 2) throw Error(ErrorKind::kConfig, "n_view must be 1 or 2");
  if (img_h % 4 != 0 || img_w % 4 != 0)
    throw Error(ErrorKind::kChannelPlanMismatch, "image dims must be divisible by 4");
  if (stem_channels < 1) throw Error(ErrorKind::kChannelPlanMismatch, "stem_channels");
  if ((img_h / 4) % grid_z != 0 || c2d() % grid_z != 0)
    throw Error(ErrorKind::kChannelPlanMismatch,
                "projector z-bands need (image_h/4) and C2D divisible by grid_z");
  if (c_bev() % 2 != 0 || c_bev() / 2 != grid_z * n_class)
    throw Error(ErrorKind::kChannelPlanMismatch,
                "head needs C_bev/2 == Z*n_class: C_bev=" + std::to_string(c_bev()) +
                    " Z*n_class=" + std::to_string(grid_z * n_class));
  if (grid_x < 4 || grid_y < 4 || grid_z < 4) throw Error(ErrorKind::kGridTooSmall, "grid dims");
  if (n_class < 2) throw Error(ErrorKind::kConfig, "n_class");
}

template <typename T>
OccNet<T> OccNet<T>::build(const NetSpec& spec, std::uint64_t seed) {
  spec.validate();
  OccNet net;
  net.spec = spec;
  Rng rng(derive_seed(seed, 0x6e657477ull));  // parameter init stream
  const bool bin_neck = spec.scope == BinarizeScope::kTiny;
  const std::int64_t c0 = spec.stem_channels;
  net.stem = FpConvLayer<T>::create(net.store, "stem", spec.img_c, c0, 3, 1, 1, rng);
  net.stem_bn = BatchNormLayer<T>::create(net.store, "stem", c0);
  net.stem_act = RPReLULayer<T>::create(net.store, "stem.act", c0);
  net.ds1 = Module<T>::build(net.store, ModuleKind::kDownSample, spec.unit, c0, bin_neck, "ds1", rng);
  net.ds2 =
      Module<T>::build(net.store, ModuleKind::kDownSample, spec.unit, 2 * c0, bin_neck, "ds2", rng);
  net.bev1 =
      Module<T>::build(net.store, ModuleKind::kBasic, spec.unit, spec.c_bev(), true, "bev1", rng);
  net.bev2 =
      Module<T>::build(net.store, ModuleKind::kBasic, spec.unit, spec.c_bev(), true, "bev2", rng);
  net.head = Module<T>::build(net.store, ModuleKind::kChannelReduce, spec.unit, spec.c_bev(), true,
                              "head", rng);
  return net;
}

template <typename T>
Value<T> OccNet<T>::forward(Ctx<T>& ctx, const std::vector<Value<T>>& views) const {
  if (static_cast<std::int64_t>(views.size()) != spec.n_view)
    throw Error(ErrorKind::kShapeMismatch, "expected " + std::to_string(spec.n_view) + " views");
  std::vector<Value<T>> feats;
  feats.reserve(views.size());
  for (const auto& view : views) {
    Value<T> v = ctx.fpconv(view, stem);
    v = ctx.batchnorm(v, stem_bn);
    v = ctx.rprelu(v, stem_act);
    v = ds1.forward(ctx, v);
    v = ds2.forward(ctx, v);
    feats.push_back(std::move(v));
  }
  Value<T> bev = ctx.ortho_project(feats, spec.grid_x, spec.grid_y, spec.grid_z);
  bev = bev1.forward(ctx, bev);
  bev = bev2.forward(ctx, bev);
  Value<T> reduced = head.forward(ctx, bev);
  return ctx.channel_to_height(reduced, spec.grid_z, spec.n_class);
}

template <typename T>
Value<T> OccNet<T>::forward_scene(Ctx<T>& ctx, const ToyScene& scene) const {
  std::vector<Value<T>> views;
  const std::int64_t chw = spec.img_c * spec.img_h * spec.img_w;
  for (std::int64_t v = 0; v < spec.n_view; ++v) {
    Tensor<T> one(Shape{spec.img_c, spec.img_h, spec.img_w});
    for (std::int64_t i = 0; i < chw; ++i) one[i] = static_cast<T>(scene.views[v * chw + i]);
    views.push_back(ctx.input(std::move(one)));
  }
  return forward(ctx, views);
}

template <typename T>
Value<T> OccNet<T>::loss(Ctx<T>& ctx, const ToyScene& scene) const {
  Value<T> logits = forward_scene(ctx, scene);
  return ctx.cross_entropy(logits, scene.labels);
}

template <typename T>
void OccNet<T>::refresh() {
  ds1.refresh(store);
  ds2.refresh(store);
  bev1.refresh(store);
  bev2.refresh(store);
  head.refresh(store);
}

// ---------------------------------------------------------------------------
// Cost walk (mirrors the forward shapes)
// ---------------------------------------------------------------------------

namespace {

struct CostAccum {
  CostReport r;
  // conv ops scale with the number of view passes; weights are shared
  void conv(const ConvGeometry& g, bool binarized, std::int64_t ops_mult) {
    const CostReport layer = cost_of_layer(g, binarized);
    r.ops_f += layer.ops_f * static_cast<std::uint64_t>(ops_mult);
    r.ops_b_x64 += layer.ops_b_x64 * static_cast<std::uint64_t>(ops_mult);
    r.params_f += layer.params_f;
    r.params_b_x32 += layer.params_b_x32;
  }
  void fp_params(std::int64_t n) { r.params_f += static_cast<std::uint64_t>(n); }
};

template <typename T>
void add_unit_cost(const BDCUnit<T>& unit, std::int64_t h, std::int64_t w, std::int64_t ops_mult,
                   CostAccum& acc) {
  acc.fp_params(2 * unit.c_in);  // first redistribution
  acc.conv(unit.first.conv.geometry(h, w), true, ops_mult);
  acc.fp_params(2 * unit.c_out);  // first BN affine
  if (unit.v0_act) acc.fp_params(3 * unit.c_out);
  for (const auto& extra : unit.extras) {
    acc.fp_params(3 * unit.c_out);  // RPReLU
    acc.fp_params(2 * unit.c_out);  // redistribution
    acc.conv(extra.stage.conv.geometry(h, w), true, ops_mult);
    acc.fp_params(2 * unit.c_out);  // BN affine
  }
  // V2 runs the MulBiconv on the (C,H,W) path, V3 on pooled (C,1,1) logits.
  const bool pooled = unit.cfg.variant == BDCVariant::kV3;
  for (const auto& stage : unit.mul) {
    acc.fp_params(3 * unit.c_out);
    acc.fp_params(2 * unit.c_out);
    acc.conv(stage.conv.geometry(pooled ? 1 : h, pooled ? 1 : w), true, ops_mult);
  }
}

template <typename T>
void add_module_cost(const Module<T>& mod, std::int64_t c_in, std::int64_t h, std::int64_t w,
                     std::int64_t ops_mult, CostAccum& acc) {
  switch (mod.kind) {
    case ModuleKind::kBasic:
    case ModuleKind::kChannelReduce:
      add_unit_cost(*mod.unit, h, w, ops_mult, acc);
      break;
    case ModuleKind::kUpSample:
      add_unit_cost(*mod.unit, 2 * h, 2 * w, ops_mult, acc);
      break;
    case ModuleKind::kDownSample: {
      const auto& down = *mod.down;
      for (const auto* branch : {&down.a, &down.b}) {
        if (down.binarized) {
          acc.fp_params(2 * c_in);
          acc.conv(branch->bconv.geometry(h, w), true, ops_mult);
        } else {
          acc.conv(branch->fconv.geometry(h, w), false, ops_mult);
          acc.fp_params(c_in);  // fp conv bias
        }
        acc.fp_params(2 * c_in);  // BN affine
        acc.fp_params(3 * c_in);  // RPReLU
      }
      break;
    }
  }
}

}  // namespace

template <typename T>
NetworkCost network_cost(const OccNet<T>& net) {
  const NetSpec& spec = net.spec;
  NetworkCost cost;
  const std::int64_t views = spec.n_view;

  CostAccum stem;
  stem.conv(net.stem.geometry(spec.img_h, spec.img_w), false, views);
  stem.fp_params(spec.stem_channels);      // conv bias
  stem.fp_params(2 * spec.stem_channels);  // BN affine
  stem.fp_params(3 * spec.stem_channels);  // RPReLU
  cost.stages.push_back({"image_stem", stem.r});

  CostAccum neck;
  add_module_cost(net.ds1, spec.stem_channels, spec.img_h, spec.img_w, views, neck);
  add_module_cost(net.ds2, 2 * spec.stem_channels, spec.img_h / 2, spec.img_w / 2, views, neck);
  cost.stages.push_back({"image_neck", neck.r});

  cost.stages.push_back({"view_transformer", CostReport{}});  // fixed, parameter-free

  CostAccum bev;
  add_module_cost(net.bev1, spec.c_bev(), spec.grid_x, spec.grid_y, 1, bev);
  add_module_cost(net.bev2, spec.c_bev(), spec.grid_x, spec.grid_y, 1, bev);
  cost.stages.push_back({"bev_encoder", bev.r});

  CostAccum head;
  add_module_cost(net.head, spec.c_bev(), spec.grid_x, spec.grid_y, 1, head);
  cost.stages.push_back({"occupancy_head", head.r});
  return cost;
}

template <typename T>
NetworkCost OccNet<T>::cost() const {
  return network_cost(*this);
}

// ---------------------------------------------------------------------------
// Metric
// ---------------------------------------------------------------------------

void MiouAccum::add(const IntTensor& pred, const IntTensor& gt) {
  if (pred.shape != gt.shape) throw Error(ErrorKind::kShapeMismatch, "miou shapes");
  const int n_class = static_cast<int>(inter_.size());
  for (std::int64_t i = 0; i < pred.size(); ++i) {
    const std::int32_t p = pred[i], g = gt[i];
    if (p < 0 || p >= n_class) throw Error(ErrorKind::kLabelOutOfRange, std::to_string(p));
    if (g < 0 || g >= n_class) throw Error(ErrorKind::kLabelOutOfRange, std::to_string(g));
    if (p == g) {
      inter_[static_cast<std::size_t>(p)] += 1;
      uni_[static_cast<std::size_t>(p)] += 1;
    } else {
      uni_[static_cast<std::size_t>(p)] += 1;
      uni_[static_cast<std::size_t>(g)] += 1;
    }
  }
}

MiouResult MiouAccum::result() const {
  MiouResult out;
  const std::size_t n_class = inter_.size();
  out.per_class.assign(n_class, 0.0);
  out.present.assign(n_class, false);
  double sum = 0.0;
  int present = 0;
  for (std::size_t c = 0; c < n_class; ++c) {
    if (uni_[c] == 0) continue;  // absent from both pred and gt
    out.present[c] = true;
    out.per_class[c] = static_cast<double>(inter_[c]) / static_cast<double>(uni_[c]);
    sum += out.per_class[c];
    present += 1;
  }
  out.mean = present > 0 ? sum / present : 0.0;
  return out;
}

MiouResult miou(const IntTensor& pred, const IntTensor& gt, int n_class) {
  MiouAccum acc(n_class);
  acc.add(pred, gt);
  return acc.result();
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

std::vector<ToyScene> make_dataset(const NetSpec& spec, std::uint64_t master_seed, int count,
                                   std::uint64_t stream_offset) {
  std::vector<ToyScene> scenes(static_cast<std::size_t>(count));
  parallel_for(count, [&](std::int64_t i) {
    scenes[static_cast<std::size_t>(i)] = generate_scene(
        derive_seed(master_seed, stream_offset + static_cast<std::uint64_t>(i)),
        Shape{spec.grid_x, spec.grid_y, spec.grid_z}, spec.n_boxes,
        static_cast<int>(spec.n_class), spec.render_spec());
  });
  return scenes;
}

namespace {

double mean_loss(const OccNet<float>& net, const std::vector<ToyScene>& set) {
  // Batch-stat BN without state updates, comparable to training steps.
  Ctx<float> ctx{const_cast<ParamStore<float>*>(&net.store), nullptr, BinarizeMode::kHard, true,
                 false};
  double acc = 0.0;
  for (const auto& scene : set) acc += static_cast<double>(net.loss(ctx, scene).t[0]);
  return acc / static_cast<double>(set.size());
}

IntTensor predict_labels(const Tensor<float>& logits, const NetSpec& spec) {
  IntTensor pred(Shape{spec.grid_x, spec.grid_y, spec.grid_z});
  const std::int64_t n_vox = pred.size();
  for (std::int64_t v = 0; v < n_vox; ++v) {
    std::int32_t best = 0;
    float best_val = logits[v];
    for (std::int64_t n = 1; n < spec.n_class; ++n) {
      if (logits[n * n_vox + v] > best_val) {
        best_val = logits[n * n_vox + v];
        best = static_cast<std::int32_t>(n);
      }
    }
    pred[v] = best;
  }
  return pred;
}

}  // namespace

EvalResult evaluate(const OccNet<float>& net, const std::vector<ToyScene>& eval_set) {
  Ctx<float> ctx{const_cast<ParamStore<float>*>(&net.store), nullptr, BinarizeMode::kHard, false,
                 false};
  const int n_class = static_cast<int>(net.spec.n_class);
  MiouAccum model_acc(n_class);

  // Constant-majority baseline over the same split.
  std::vector<std::int64_t> gt_counts(static_cast<std::size_t>(n_class), 0);
  for (const auto& scene : eval_set)
    for (std::int64_t i = 0; i < scene.labels.size(); ++i)
      gt_counts[static_cast<std::size_t>(scene.labels[i])] += 1;
  std::int32_t majority = 0;
  for (int c = 1; c < n_class; ++c)
    if (gt_counts[static_cast<std::size_t>(c)] > gt_counts[static_cast<std::size_t>(majority)])
      majority = c;
  MiouAccum baseline_acc(n_class);

  for (const auto& scene : eval_set) {
    Value<float> logits = net.forward_scene(ctx, scene);
    model_acc.add(predict_labels(logits.t, net.spec), scene.labels);
    IntTensor constant(scene.labels.shape, majority);
    baseline_acc.add(constant, scene.labels);
  }
  EvalResult result;
  result.model = model_acc.result();
  result.baseline_mean = baseline_acc.result().mean;
  return result;
}

TrainReport train(OccNet<float>& net, const std::vector<ToyScene>& train_set,
                  const std::vector<ToyScene>& eval_set, const TrainConfig& cfg) {
  if (train_set.empty()) throw Error(ErrorKind::kConfig, "empty training set");
  const auto t0 = std::chrono::steady_clock::now();

  TrainReport report;
  report.seed = cfg.seed;
  report.config_hash = cfg.config_hash;
  report.initial_loss = mean_loss(net, train_set);

  OptimState<float> optim;
  optim.lr = static_cast<float>(cfg.lr);
  optim.weight_decay = static_cast<float>(cfg.weight_decay);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_acc = 0.0;
    for (const auto& scene : train_set) {
      Tape<float> tape;
      Ctx<float> ctx{&net.store, &tape, BinarizeMode::kHard, true, true};
      Value<float> loss = net.loss(ctx, scene);
      const double loss_val = static_cast<double>(loss.t[0]);
      if (!std::isfinite(loss_val)) throw Error(ErrorKind::kNumeric, "non-finite loss");
      epoch_acc += loss_val;
      GradMap<float> grads = tape.backward(loss.id, Tensor<float>::scalar(1.0f), net.store.size());
      adamw_step(net.store, grads, optim);
      net.refresh();
    }
    report.epoch_losses.push_back(epoch_acc / static_cast<double>(train_set.size()));
    if (cfg.on_epoch) cfg.on_epoch(epoch + 1, report.epoch_losses.back());
  }

  report.final_loss = mean_loss(net, train_set);
  if (!eval_set.empty()) {
    EvalResult eval_result = evaluate(net, eval_set);
    report.final_miou = eval_result.model.mean;
    report.per_class_iou = eval_result.model.per_class;
    report.class_present = eval_result.model.present;
    report.baseline_miou = eval_result.baseline_mean;
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

// ---------------------------------------------------------------------------
// Ablations
// ---------------------------------------------------------------------------

std::vector<AblationRow> run_ablations(const NetSpec& base_spec, const TrainConfig& cfg) {
  struct Plan {
    std::string group, label;
    BDCUnitConfig unit;
  };
  std::vector<Plan> plans;
  auto with = [&](BDCVariant v, int n, std::vector<int> kernels) {
    BDCUnitConfig u = base_spec.unit;
    u.variant = v;
    u.n_mulbiconv = n;
    u.kernel_plan = std::move(kernels);
    return u;
  };
  // Break-down table: V0-V3 with the production N = 2.
  for (BDCVariant v : {BDCVariant::kV0, BDCVariant::kV1, BDCVariant::kV2, BDCVariant::kV3})
    plans.push_back({"breakdown", std::string("BDC-") + to_string(v), with(v, 2, {3, 1})});
  // Kernel table on BDC-V1.
  plans.push_back({"kernel", "3-1", with(BDCVariant::kV1, 0, {3, 1})});
  plans.push_back({"kernel", "3-3", with(BDCVariant::kV1, 0, {3, 3})});
  plans.push_back({"kernel", "1-1", with(BDCVariant::kV1, 0, {1, 1})});
  plans.push_back({"kernel", "3-3-1", with(BDCVariant::kV1, 0, {3, 3, 1})});
  // MulBiconv N-sweep.
  for (int n = 0; n <= 4; ++n)
    plans.push_back({"nsweep-v2", "N=" + std::to_string(n), with(BDCVariant::kV2, n, {3, 1})});
  for (int n = 0; n <= 4; ++n)
    plans.push_back({"nsweep-v3", "N=" + std::to_string(n), with(BDCVariant::kV3, n, {3, 1})});

  std::vector<AblationRow> rows(plans.size());
  parallel_for(static_cast<std::int64_t>(plans.size()), [&](std::int64_t i) {
    const Plan& plan = plans[static_cast<std::size_t>(i)];
    NetSpec spec = base_spec;
    spec.unit = plan.unit;
    OccNet<float> net = OccNet<float>::build(spec, cfg.seed);
    const std::vector<ToyScene> train_set = make_dataset(spec, cfg.seed, cfg.train_scenes, 1000);
    const std::vector<ToyScene> eval_set = make_dataset(spec, cfg.seed, cfg.eval_scenes, 2000);
    TrainReport tr = train(net, train_set, eval_set, cfg);
    AblationRow row;
    row.group = plan.group;
    row.label = plan.label;
    row.variant = plan.unit.variant;
    row.kernel_plan = plan.unit.plan_string();
    row.n_mulbiconv =
        (plan.unit.variant == BDCVariant::kV0 || plan.unit.variant == BDCVariant::kV1)
            ? 0
            : plan.unit.n_mulbiconv;
    row.miou = tr.final_miou;
    row.initial_loss = tr.initial_loss;
    row.final_loss = tr.final_loss;
    row.cost = net.cost().total();
    row.seed = cfg.seed;
    rows[static_cast<std::size_t>(i)] = std::move(row);
  });
  return rows;
}

// ---------------------------------------------------------------------------

template struct OccNet<float>;
template NetworkCost network_cost(const OccNet<float>&);

}  // namespace bdc::toy
