#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "bdc/occtoy.hpp"

using namespace bdc;
using namespace bdc::toy;

namespace {

NetSpec tiny_spec() {
  NetSpec spec;
  spec.unit.variant = BDCVariant::kV3;
  spec.unit.n_mulbiconv = 2;
  spec.grid_x = 8;
  spec.grid_y = 8;
  spec.grid_z = 4;
  spec.n_class = 4;
  spec.img_h = 16;
  spec.img_w = 16;
  spec.stem_channels = 8;
  spec.n_boxes = 2;
  return spec;
}

}  // namespace

TEST_CASE("generate_scene with no boxes is empty background") {
  ToyScene scene = generate_scene(1, Shape{8, 8, 4}, 0, 4);
  for (std::int64_t i = 0; i < scene.labels.size(); ++i) CHECK(scene.labels[i] == 0);
  const std::int64_t n = scene.views.size();
  for (std::int64_t v = 0; v < 2; ++v)
    for (std::int64_t i = 0; i < n / 4; ++i) {
      CHECK(scene.views[v * n / 2 + i] == 1.0f);           // depth background
      CHECK(scene.views[v * n / 2 + n / 4 + i] == 0.0f);   // class background
    }
}

TEST_CASE("full-grid box renders the near-face distance everywhere") {
  IntTensor labels(Shape{8, 8, 4}, 3);
  SceneRenderSpec render;
  Tensor<float> views = render_views(labels, 4, render);
  const float near_y = 0.5f / 8.0f;
  for (std::int64_t h = 0; h < render.img_h; ++h)
    for (std::int64_t w = 0; w < render.img_w; ++w) {
      CHECK(views.at4(0, 0, h, w) == near_y);
      CHECK(views.at4(1, 0, h, w) == near_y);
      CHECK(views.at4(0, 1, h, w) == 1.0f);  // class 3 of 4 -> 3/3
    }
}

TEST_CASE("generate_scene is bitwise deterministic") {
  ToyScene a = generate_scene(99, Shape{16, 16, 4}, 3, 4);
  ToyScene b = generate_scene(99, Shape{16, 16, 4}, 3, 4);
  CHECK(a.labels.data == b.labels.data);
  CHECK(std::memcmp(a.views.data().data(), b.views.data().data(),
                    sizeof(float) * a.views.size()) == 0);
  ToyScene c = generate_scene(100, Shape{16, 16, 4}, 3, 4);
  CHECK(a.labels.data != c.labels.data);
}

TEST_CASE("generate_scene validates the grid") {
  CHECK_THROWS_AS((void)generate_scene(1, Shape{2, 8, 4}, 1, 4), Error);
  CHECK_THROWS_AS((void)generate_scene(1, Shape{8, 8, 4}, 1, 1), Error);
}

// ---------------------------------------------------------------------------
// mIoU
// ---------------------------------------------------------------------------

TEST_CASE("miou perfect prediction") {
  ToyScene scene = generate_scene(3, Shape{8, 8, 4}, 2, 4);
  MiouResult r = miou(scene.labels, scene.labels, 4);
  CHECK(r.mean == 1.0);
  for (int c = 0; c < 4; ++c)
    if (r.present[c]) CHECK(r.per_class[c] == 1.0);
}

TEST_CASE("miou disjoint single-class masks") {
  IntTensor gt(Shape{4, 1, 1}, 0), pred(Shape{4, 1, 1}, 0);
  gt[0] = 1;
  gt[1] = 1;
  pred[0] = 2;
  pred[1] = 2;
  MiouResult r = miou(pred, gt, 3);
  CHECK(r.per_class[1] == 0.0);
  CHECK(r.per_class[2] == 0.0);
}

TEST_CASE("miou hand-built four-voxel case") {
  IntTensor gt(Shape{4, 1, 1}), pred(Shape{4, 1, 1});
  gt[0] = 1; gt[1] = 1; gt[2] = 2; gt[3] = 0;
  pred[0] = 1; pred[1] = 2; pred[2] = 2; pred[3] = 0;
  MiouResult r = miou(pred, gt, 4);
  CHECK(r.per_class[0] == 1.0);
  CHECK(r.per_class[1] == 0.5);
  CHECK(r.per_class[2] == 0.5);
  CHECK(!r.present[3]);
  CHECK(r.mean == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("miou errors") {
  IntTensor a(Shape{4, 1, 1}), b(Shape{2, 2, 1});
  CHECK_THROWS_AS((void)miou(a, b, 4), Error);
  IntTensor c(Shape{4, 1, 1});
  c[0] = 7;
  CHECK_THROWS_AS((void)miou(c, a, 4), Error);
}

TEST_CASE("miou is equivariant under class relabeling") {
  Rng rng(4);
  IntTensor pred(Shape{6, 6, 4}), gt(Shape{6, 6, 4});
  for (std::int64_t i = 0; i < pred.size(); ++i) {
    pred[i] = static_cast<std::int32_t>(rng.uniform_int(0, 3));
    gt[i] = static_cast<std::int32_t>(rng.uniform_int(0, 3));
  }
  const int perm[4] = {2, 0, 3, 1};
  IntTensor pred_p = pred, gt_p = gt;
  for (std::int64_t i = 0; i < pred.size(); ++i) {
    pred_p[i] = perm[pred[i]];
    gt_p[i] = perm[gt[i]];
  }
  MiouResult a = miou(pred, gt, 4);
  MiouResult b = miou(pred_p, gt_p, 4);
  std::vector<double> ious_a, ious_b;
  for (int c = 0; c < 4; ++c) {
    if (a.present[c]) ious_a.push_back(a.per_class[c]);
    if (b.present[c]) ious_b.push_back(b.per_class[c]);
  }
  std::sort(ious_a.begin(), ious_a.end());
  std::sort(ious_b.begin(), ious_b.end());
  CHECK(ious_a == ious_b);
  CHECK(a.mean == doctest::Approx(b.mean).epsilon(1e-12));
}

// ---------------------------------------------------------------------------
// Network assembly
// ---------------------------------------------------------------------------

TEST_CASE("channel-to-height is a lossless bijection") {
  Rng rng(5);
  const std::int64_t z = 4, n_class = 4, gx = 5, gy = 6;
  Tensor<double> x(Shape{z * n_class, gx, gy});
  for (std::int64_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
  ParamStore<double> store;
  Ctx<double> ctx{&store, nullptr, BinarizeMode::kHard, true, false};
  Value<double> out = ctx.channel_to_height(ctx.input(x), z, n_class);
  REQUIRE(out.t.shape() == Shape({n_class, gx, gy, z}));
  // inverse reshape recovers the input exactly
  Tensor<double> back(x.shape());
  for (std::int64_t zi = 0; zi < z; ++zi)
    for (std::int64_t n = 0; n < n_class; ++n)
      for (std::int64_t xi = 0; xi < gx; ++xi)
        for (std::int64_t yi = 0; yi < gy; ++yi)
          back.at(zi * n_class + n, xi, yi) = out.t.at4(n, xi, yi, zi);
  for (std::int64_t i = 0; i < x.size(); ++i) CHECK(back[i] == x[i]);
}

TEST_CASE("build_network validates the channel plan") {
  NetSpec bad = tiny_spec();
  bad.stem_channels = 6;  // head channels != Z*n_class
  CHECK_THROWS_AS((void)OccNet<float>::build(bad, 1), Error);
}

TEST_CASE("network forward produces (n_class, X, Y, Z) logits") {
  NetSpec spec = tiny_spec();
  OccNet<float> net = OccNet<float>::build(spec, 7);
  ToyScene scene = generate_scene(8, Shape{spec.grid_x, spec.grid_y, spec.grid_z}, 2, 4,
                                  spec.render_spec());
  Ctx<float> ctx{&net.store, nullptr, BinarizeMode::kHard, true, false};
  Value<float> logits = net.forward_scene(ctx, scene);
  CHECK(logits.t.shape() == Shape({4, spec.grid_x, spec.grid_y, spec.grid_z}));
  CHECK(logits.t.all_finite());
}

TEST_CASE("registry parameter count equals the cost-model parameter count") {
  for (auto scope : {BinarizeScope::kBase, BinarizeScope::kTiny}) {
    NetSpec spec = tiny_spec();
    spec.scope = scope;
    OccNet<float> net = OccNet<float>::build(spec, 9);
    NetworkCost cost = net.cost();
    const CostReport total = cost.total();
    // params_b_x32 is the raw binarized element count before the /32
    const std::uint64_t model_count = total.params_f + total.params_b_x32;
    CHECK(model_count == static_cast<std::uint64_t>(net.store.trainable_element_count()));
  }
}

TEST_CASE("cost stages: tiny scope moves image-neck cost into binarized columns") {
  NetSpec base_spec = tiny_spec();
  OccNet<float> base_net = OccNet<float>::build(base_spec, 10);
  NetSpec tiny_sp = tiny_spec();
  tiny_sp.scope = BinarizeScope::kTiny;
  OccNet<float> tiny_net = OccNet<float>::build(tiny_sp, 10);
  const CostReport base_total = base_net.cost().total();
  const CostReport tiny_total = tiny_net.cost().total();
  CHECK(tiny_total.ops_f < base_total.ops_f);
  CHECK(tiny_total.ops_b_x64 > base_total.ops_b_x64);
  // binarized subtotal integer identity over all stages
  for (const auto& stage : tiny_net.cost().stages) {
    CHECK(stage.report.ops_b() * 64.0 == static_cast<double>(stage.report.ops_b_x64));
  }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

TEST_CASE("train with lr=0 and wd=0 leaves parameters unchanged") {
  NetSpec spec = tiny_spec();
  OccNet<float> net = OccNet<float>::build(spec, 11);
  std::vector<float> before;
  for (std::size_t i = 0; i < net.store.size(); ++i) {
    const auto& p = net.store.at(static_cast<ParamId>(i));
    if (p.trainable) before.insert(before.end(), p.value.data().begin(), p.value.data().end());
  }
  TrainConfig cfg;
  cfg.seed = 11;
  cfg.epochs = 1;
  cfg.train_scenes = 4;
  cfg.eval_scenes = 2;
  cfg.lr = 0.0;
  cfg.weight_decay = 0.0;
  auto train_set = make_dataset(spec, cfg.seed, cfg.train_scenes, 1000);
  auto eval_set = make_dataset(spec, cfg.seed, cfg.eval_scenes, 2000);
  train(net, train_set, eval_set, cfg);
  std::vector<float> after;
  for (std::size_t i = 0; i < net.store.size(); ++i) {
    const auto& p = net.store.at(static_cast<ParamId>(i));
    if (p.trainable) after.insert(after.end(), p.value.data().begin(), p.value.data().end());
  }
  CHECK(before == after);
}

TEST_CASE("training is deterministic per seed") {
  auto run = [] {
    NetSpec spec = tiny_spec();
    OccNet<float> net = OccNet<float>::build(spec, 12);
    TrainConfig cfg;
    cfg.seed = 12;
    cfg.epochs = 1;
    cfg.train_scenes = 6;
    cfg.eval_scenes = 3;
    cfg.lr = 5e-3;
    auto train_set = make_dataset(spec, cfg.seed, cfg.train_scenes, 1000);
    auto eval_set = make_dataset(spec, cfg.seed, cfg.eval_scenes, 2000);
    return train(net, train_set, eval_set, cfg);
  };
  TrainReport a = run();
  TrainReport b = run();
  CHECK(a.epoch_losses == b.epoch_losses);
  CHECK(a.initial_loss == b.initial_loss);
  CHECK(a.final_loss == b.final_loss);
  CHECK(a.final_miou == b.final_miou);
  CHECK(a.per_class_iou == b.per_class_iou);
  CHECK(a.baseline_miou == b.baseline_miou);
}

TEST_CASE("short training already reduces the loss") {
  NetSpec spec = tiny_spec();
  OccNet<float> net = OccNet<float>::build(spec, 13);
  TrainConfig cfg;
  cfg.seed = 13;
  cfg.epochs = 2;
  cfg.train_scenes = 8;
  cfg.eval_scenes = 4;
  cfg.lr = 5e-3;
  auto train_set = make_dataset(spec, cfg.seed, cfg.train_scenes, 1000);
  auto eval_set = make_dataset(spec, cfg.seed, cfg.eval_scenes, 2000);
  TrainReport r = train(net, train_set, eval_set, cfg);
  CHECK(r.final_loss < r.initial_loss);
  CHECK(r.final_miou >= 0.0);
  CHECK(r.final_miou <= 1.0);
  for (double l : r.epoch_losses) CHECK(std::isfinite(l));
}
