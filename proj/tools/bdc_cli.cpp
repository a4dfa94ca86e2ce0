#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "bdc/analysis.hpp"
#include "bdc/checkpoint.hpp"
#include "bdc/config.hpp"
#include "bdc/occtoy.hpp"

namespace {

using namespace bdc;
using namespace bdc::toy;

constexpr int kExitOk = 0;
constexpr int kExitToleranceFailure = 1;
constexpr int kExitConfigError = 2;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string fmt2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::kIo, "cannot open " + path);
  f << text;
}

// ---------------------------------------------------------------------------

int cmd_verify_theorem(std::int64_t samples, int trials, std::uint64_t seed, std::int64_t channels,
                       const std::string& out_path) {
  const double analytic = analytic_abs_error_constant();
  const MonteCarloResult mc = monte_carlo_abs_error(samples, seed);
  const GradErrorReport g1 = gradient_error_experiment(1, channels, trials, seed);
  const GradErrorReport g3 = gradient_error_experiment(3, channels, trials, seed);
  const double k_ratio = g3.empirical_eae / g1.empirical_eae;

  const bool pass_analytic = std::abs(analytic - 0.5354) < 5e-5;
  const bool pass_mc = std::abs(mc.mean - analytic) <= 3.0 * mc.stderr_of_mean;
  const bool pass_k1 = g1.relative_deviation <= 0.10;
  const bool pass_ratio = k_ratio >= 5.0 && k_ratio <= 13.0;

  std::string csv = "metric,k,empirical,predicted,ratio,samples,stderr,pass\n";
  csv += "analytic_constant,," + fmt(analytic) + ",0.5354,,,," + (pass_analytic ? "1" : "0") + "\n";
  csv += "monte_carlo,," + fmt(mc.mean) + "," + fmt(analytic) + ",," + std::to_string(samples) +
         "," + fmt(mc.stderr_of_mean) + "," + (pass_mc ? "1" : "0") + "\n";
  csv += "grad_error,1," + fmt(g1.empirical_eae) + "," + fmt(g1.predicted_eae) + "," +
         fmt(g1.ratio) + "," + std::to_string(trials) + ",," + (pass_k1 ? "1" : "0") + "\n";
  csv += "grad_error,3," + fmt(g3.empirical_eae) + "," + fmt(g3.predicted_eae) + "," +
         fmt(g3.ratio) + "," + std::to_string(trials) + ",,1\n";
  csv += "eae_ratio_k3_over_k1,," + fmt(k_ratio) + ",9,,,," + (pass_ratio ? "1" : "0") + "\n";
  write_text(out_path, csv);

  std::cerr << "analytic " << fmt(analytic) << (pass_analytic ? " [ok]" : " [FAIL]") << ", mc "
            << fmt(mc.mean) << (pass_mc ? " [ok]" : " [FAIL]") << ", k1 dev "
            << fmt(g1.relative_deviation) << (pass_k1 ? " [ok]" : " [FAIL]") << ", k3/k1 "
            << fmt(k_ratio) << (pass_ratio ? " [ok]" : " [FAIL]") << "\n";
  return (pass_analytic && pass_mc && pass_k1 && pass_ratio) ? kExitOk : kExitToleranceFailure;
}

// ---------------------------------------------------------------------------

int cmd_bench_kernel(const ConvGeometry& geom, int reps, std::uint64_t seed,
                     const std::string& out_path) {
  geom.validate();
  const EquivalenceReport equiv = check_equivalence(geom, seed);

  Rng rng(seed);
  Tensor<float> x(Shape{geom.c_in, geom.h, geom.w});
  for (std::int64_t i = 0; i < x.size(); ++i) x[i] = rng.sign_unit() > 0 ? 1.0f : -1.0f;
  BinaryConvParams<float> params;
  params.latent = Tensor<float>(Shape{geom.c_out, geom.c_in, geom.kernel, geom.kernel});
  for (std::int64_t i = 0; i < params.latent.size(); ++i)
    params.latent[i] = static_cast<float>(rng.normal());
  params.refresh();
  Tensor<float> eff(params.latent.shape());
  for (std::int64_t i = 0; i < eff.size(); ++i)
    eff[i] = params.packed_signs.get(i) ? params.scale : -params.scale;
  const BitTensor xb = bit_pack(x);

  auto time_ns = [&](auto&& fn) {
    fn();  // warm-up
    const auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count() /
           static_cast<double>(reps);
  };
  const double ns_fp = time_ns([&] { (void)conv2d_fp(x, eff, geom, -params.scale); });
  const double ns_bit = time_ns([&] { (void)conv2d_bit(xb, params, geom); });

  std::string geom_str = std::to_string(geom.c_in) + "x" + std::to_string(geom.h) + "x" +
                         std::to_string(geom.w) + "->" + std::to_string(geom.c_out) + " k" +
                         std::to_string(geom.kernel) + " s" + std::to_string(geom.stride) + " p" +
                         std::to_string(geom.padding);
  std::string csv = "geometry,ns_fp,ns_bit,speedup,model_speedup,equiv_max_dev\n";
  csv += geom_str + "," + fmt(ns_fp) + "," + fmt(ns_bit) + "," + fmt(ns_fp / ns_bit) + ",64," +
         fmt(equiv.max_abs_deviation) + "\n";
  write_text(out_path, csv);
  std::cerr << "fp " << fmt(ns_fp) << " ns, bit " << fmt(ns_bit) << " ns, speedup "
            << fmt(ns_fp / ns_bit) << ", deviation " << fmt(equiv.max_abs_deviation) << "\n";
  return equiv.max_abs_deviation == 0.0 ? kExitOk : kExitToleranceFailure;
}

// ---------------------------------------------------------------------------

std::string train_report_csv(const RunConfig& cfg, const TrainReport& report) {
  std::string csv;
  csv += "initial_loss," + fmt(report.initial_loss) + "\n";
  csv += "final_loss," + fmt(report.final_loss) + "\n";
  csv += "final_miou," + fmt(report.final_miou) + "\n";
  csv += "baseline_miou," + fmt(report.baseline_miou) + "\n";
  std::string ious;
  for (std::size_t c = 0; c < report.per_class_iou.size(); ++c)
    ious += (c ? ";" : "") + (report.class_present[c] ? fmt(report.per_class_iou[c]) : "absent");
  csv += "per_class_iou," + ious + "\n";
  (void)cfg;
  return csv;
}

int cmd_train(const std::string& config_path, const std::string& out_override,
              const std::string& checkpoint_override, const std::string& load_path,
              bool eval_only, const std::string& dump_scenes) {
  RunConfig cfg = RunConfig::parse_file(config_path);
  if (!out_override.empty()) cfg.csv_path = out_override;
  if (!checkpoint_override.empty()) cfg.checkpoint_path = checkpoint_override;

  OccNet<float> net = OccNet<float>::build(cfg.spec, cfg.train.seed);
  const std::vector<ToyScene> eval_set =
      make_dataset(cfg.spec, cfg.train.seed, cfg.train.eval_scenes, 2000);

  if (!dump_scenes.empty() && !eval_set.empty()) {
    CheckpointWriter writer;
    writer.add("views", eval_set[0].views);
    writer.add("labels", eval_set[0].labels);
    writer.write(dump_scenes);
  }

  if (eval_only) {
    if (load_path.empty()) throw Error(ErrorKind::kConfig, "--eval-only needs --load");
    load_params(load_path, net.store);
    net.refresh();
    EvalResult eval_result = evaluate(net, eval_set);
    std::string csv = "field,value\n";
    csv += "seed," + std::to_string(cfg.train.seed) + "\n";
    csv += "config_hash," + cfg.config_hash + "\n";
    csv += "final_miou," + fmt(eval_result.model.mean) + "\n";
    csv += "baseline_miou," + fmt(eval_result.baseline_mean) + "\n";
    write_text(cfg.csv_path, csv);
    std::cerr << "eval miou " << fmt(eval_result.model.mean) << "\n";
    return kExitOk;
  }

  if (!load_path.empty()) {
    load_params(load_path, net.store);
    net.refresh();
  }

  // Stream the CSV so a NaN abort still leaves the rows written so far.
  std::string csv = "field,value\n";
  csv += "seed," + std::to_string(cfg.train.seed) + "\n";
  csv += "config_hash," + cfg.config_hash + "\n";
  TrainConfig tc = cfg.train;
  tc.on_epoch = [&csv](int epoch, double loss) {
    csv += "epoch_loss_" + std::to_string(epoch) + "," + fmt(loss) + "\n";
  };
  const std::vector<ToyScene> train_set =
      make_dataset(cfg.spec, cfg.train.seed, cfg.train.train_scenes, 1000);
  try {
    TrainReport report = train(net, train_set, eval_set, tc);
    csv += train_report_csv(cfg, report);
    write_text(cfg.csv_path, csv);
    if (!cfg.checkpoint_path.empty()) save_params(cfg.checkpoint_path, net.store);
    std::cerr << "final loss " << fmt(report.final_loss) << " (initial " << fmt(report.initial_loss)
              << "), miou " << fmt(report.final_miou) << " vs baseline "
              << fmt(report.baseline_miou) << ", " << fmt(report.wall_seconds) << " s\n";
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kNumeric) throw;
    csv += "error,non_finite_loss\n";
    write_text(cfg.csv_path, csv);
    std::cerr << e.what() << "\n";
    return kExitToleranceFailure;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_ablate(const std::string& config_path, const std::string& out_override) {
  RunConfig cfg = RunConfig::parse_file(config_path);
  if (!out_override.empty()) cfg.csv_path = out_override;
  const std::vector<AblationRow> rows = run_ablations(cfg.spec, cfg.train);

  std::string csv =
      "group,label,variant,kernel_plan,n,miou,ops_g,params_m,ops_exact,params_exact,"
      "ops_f,ops_b_x64,params_f,params_b_x32,seed,config_hash\n";
  for (const AblationRow& row : rows) {
    csv += row.group + "," + row.label + "," + to_string(row.variant) + "," + row.kernel_plan +
           "," + std::to_string(row.n_mulbiconv) + "," + fmt(row.miou) + "," +
           fmt2(row.cost.ops_total() / 1e9) + "," + fmt2(row.cost.params_total() / 1e6) + "," +
           fmt(row.cost.ops_total()) + "," + fmt(row.cost.params_total()) + "," +
           std::to_string(row.cost.ops_f) + "," + std::to_string(row.cost.ops_b_x64) + "," +
           std::to_string(row.cost.params_f) + "," + std::to_string(row.cost.params_b_x32) + "," +
           std::to_string(row.seed) + "," + cfg.config_hash + "\n";
  }
  write_text(cfg.csv_path, csv);
  std::cerr << rows.size() << " ablation rows\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_cost(const std::string& config_path, const std::string& out_override) {
  RunConfig cfg = RunConfig::parse_file(config_path);
  if (!out_override.empty()) cfg.csv_path = out_override;
  OccNet<float> net = OccNet<float>::build(cfg.spec, cfg.train.seed);
  NetworkCost cost = net.cost();

  std::string csv =
      "stage,ops_f,ops_b_x64,ops_b,params_f,params_b_x32,params_b,ops_total,params_total\n";
  auto row = [&](const std::string& name, const CostReport& r) {
    csv += name + "," + std::to_string(r.ops_f) + "," + std::to_string(r.ops_b_x64) + "," +
           fmt(r.ops_b()) + "," + std::to_string(r.params_f) + "," +
           std::to_string(r.params_b_x32) + "," + fmt(r.params_b()) + "," + fmt(r.ops_total()) +
           "," + fmt(r.params_total()) + "\n";
  };
  for (const StageCost& stage : cost.stages) row(stage.name, stage.report);
  row("total", cost.total());
  write_text(cfg.csv_path, csv);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Binarized deep convolution library and experiment harness"};
  app.require_subcommand(1);

  // verify-theorem
  auto* verify = app.add_subcommand("verify-theorem", "Gradient-error analysis checks");
  std::int64_t samples = 1000000;
  int trials = 200;
  std::uint64_t seed = 1;
  std::int64_t channels = 4;
  std::string out_path;
  verify->add_option("--samples", samples, "Monte-Carlo sample count");
  verify->add_option("--trials", trials, "experiment trials per kernel size");
  verify->add_option("--seed", seed, "master seed");
  verify->add_option("--channels", channels, "chain channel count");
  verify->add_option("--out", out_path, "CSV output path (stdout if omitted)");

  // bench-kernel
  auto* bench = app.add_subcommand("bench-kernel", "Time conv2d_bit vs conv2d_fp");
  ConvGeometry geom{64, 64, 3, 1, 1, 32, 32};
  int reps = 20;
  std::uint64_t bench_seed = 1;
  std::string bench_out;
  bench->add_option("--c-in", geom.c_in, "input channels");
  bench->add_option("--c-out", geom.c_out, "output channels");
  bench->add_option("--kernel", geom.kernel, "kernel size (1 or 3)");
  bench->add_option("--stride", geom.stride, "stride (1 or 2)");
  bench->add_option("--pad", geom.padding, "padding");
  bench->add_option("--height", geom.h, "input height");
  bench->add_option("--width", geom.w, "input width");
  bench->add_option("--reps", reps, "timing repetitions");
  bench->add_option("--seed", bench_seed, "seed");
  bench->add_option("--out", bench_out, "CSV output path (stdout if omitted)");

  // train / ablate / cost
  std::string config_path, out_override, ck_override, load_path, dump_scenes;
  bool eval_only = false;
  auto* train_cmd = app.add_subcommand("train", "Train the toy occupancy network");
  train_cmd->add_option("--config", config_path, "run configuration file")->required();
  train_cmd->add_option("--out", out_override, "CSV output path override");
  train_cmd->add_option("--checkpoint", ck_override, "checkpoint output path override");
  train_cmd->add_option("--load", load_path, "checkpoint to load before running");
  train_cmd->add_flag("--eval-only", eval_only, "evaluate a loaded checkpoint, no training");
  train_cmd->add_option("--dump-scenes", dump_scenes, "dump the first eval scene to this path");

  std::string ablate_config, ablate_out;
  auto* ablate_cmd = app.add_subcommand("ablate", "Run the break-down/kernel/N-sweep tables");
  ablate_cmd->add_option("--config", ablate_config, "run configuration file")->required();
  ablate_cmd->add_option("--out", ablate_out, "CSV output path override");

  std::string cost_config, cost_out;
  auto* cost_cmd = app.add_subcommand("cost", "Per-stage OPs/Params report");
  cost_cmd->add_option("--config", cost_config, "run configuration file")->required();
  cost_cmd->add_option("--out", cost_out, "CSV output path override");

  CLI11_PARSE(app, argc, argv);

  try {
    if (verify->parsed()) return cmd_verify_theorem(samples, trials, seed, channels, out_path);
    if (bench->parsed()) return cmd_bench_kernel(geom, reps, bench_seed, bench_out);
    if (train_cmd->parsed())
      return cmd_train(config_path, out_override, ck_override, load_path, eval_only, dump_scenes);
    if (ablate_cmd->parsed()) return cmd_ablate(ablate_config, ablate_out);
    if (cost_cmd->parsed()) return cmd_cost(cost_config, cost_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return (e.kind() == ErrorKind::kConfig || e.kind() == ErrorKind::kIo) ? kExitConfigError
                                                                          : kExitToleranceFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfigError;
  }
  return kExitConfigError;
}
