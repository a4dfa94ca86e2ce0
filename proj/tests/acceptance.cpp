// Acceptance suite: runs every gate at its stated tolerance and prints one
// pass/fail line per criterion. Exits nonzero if any gate fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "bdc/analysis.hpp"
#include "bdc/checkpoint.hpp"
#include "bdc/config.hpp"
#include "bdc/occtoy.hpp"

namespace fs = std::filesystem;
using namespace bdc;

namespace {

int g_failures = 0;

class Criterion {
 public:
  Criterion(int number, std::string title) : number_(number), title_(std::move(title)) {
    start_ = std::chrono::steady_clock::now();
  }
  void check(bool ok, const std::string& what) {
    if (!ok) {
      failed_.push_back(what);
    }
    checks_ += 1;
  }
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  ~Criterion() {
    const double sec = seconds();
    if (failed_.empty()) {
      std::printf("PASS criterion %d: %s (%d checks, %.1f s)\n", number_, title_.c_str(), checks_,
                  sec);
    } else {
      g_failures += 1;
      std::printf("FAIL criterion %d: %s (%.1f s)\n", number_, title_.c_str(), sec);
      for (const std::string& what : failed_) std::printf("     - %s\n", what.c_str());
    }
    std::fflush(stdout);
  }

 private:
  int number_;
  std::string title_;
  int checks_ = 0;
  std::vector<std::string> failed_;
  std::chrono::steady_clock::time_point start_;
};

std::string fmt2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

// Independent naive, pad-aware cross-correlation oracle (not the library
// kernel path).
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w, const ConvGeometry& g,
                           double pad_value) {
  Tensor<double> out(Shape{g.c_out, g.h_out(), g.w_out()});
  for (std::int64_t oh = 0; oh < g.h_out(); ++oh)
    for (std::int64_t ow = 0; ow < g.w_out(); ++ow)
      for (int u = 0; u < g.kernel; ++u)
        for (int v = 0; v < g.kernel; ++v)
          for (std::int64_t c = 0; c < g.c_in; ++c) {
            const std::int64_t ih = oh * g.stride + u - g.padding;
            const std::int64_t iw = ow * g.stride + v - g.padding;
            const double xv =
                (ih >= 0 && ih < g.h && iw >= 0 && iw < g.w) ? x.at(c, ih, iw) : pad_value;
            for (std::int64_t o = 0; o < g.c_out; ++o) out.at(o, oh, ow) += xv * w.at4(o, c, u, v);
          }
  return out;
}

fs::path work_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "bdc_acceptance";
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(BDC_CLI_PATH) + " " + args + " 2>/dev/null";
  return WEXITSTATUS(std::system(cmd.c_str()));
}

std::string slurp(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string report_field(const std::string& csv, const std::string& key) {
  std::stringstream ss(csv);
  std::string line;
  while (std::getline(ss, line))
    if (line.rfind(key + ",", 0) == 0) return line.substr(key.size() + 1);
  return "";
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  int col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }
};

CsvTable parse_csv(const std::string& text) {
  CsvTable table;
  std::stringstream ss(text);
  std::string line;
  bool first = true;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (first) {
      table.header = cells;
      first = false;
    } else {
      table.rows.push_back(cells);
    }
  }
  return table;
}

// ---------------------------------------------------------------------------

void criterion_1_kernel_exactness() {
  Criterion c(1, "conv2d_bit bit-exact vs the full-precision +-1 oracle on 1000 geometries");
  Rng rng(20240809);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    ConvGeometry g;
    // channel counts cross the 64-bit word boundary
    g.c_in = rng.uniform_int(1, 130);
    g.c_out = rng.uniform_int(1, 6);
    g.kernel = rng.uniform_int(0, 1) ? 3 : 1;
    g.stride = rng.uniform_int(0, 1) ? 2 : 1;
    g.padding = static_cast<int>(rng.uniform_int(0, g.kernel == 3 ? 1 : 0));
    g.h = rng.uniform_int(g.kernel, 9);
    g.w = rng.uniform_int(g.kernel, 9);

    Tensor<double> x(Shape{g.c_in, g.h, g.w});
    for (std::int64_t i = 0; i < x.size(); ++i) x[i] = rng.sign_unit();
    BinaryConvParams<double> params;
    params.latent = Tensor<double>(Shape{g.c_out, g.c_in, g.kernel, g.kernel});
    for (std::int64_t i = 0; i < params.latent.size(); ++i) params.latent[i] = rng.normal();
    params.refresh();

    Tensor<double> fast = conv2d_bit(bit_pack(x), params, g);
    Tensor<double> ref = conv_oracle(x, sign_forward(params.latent), g, -1.0);
    for (std::int64_t i = 0; i < ref.size(); ++i)
      if (fast[i] != params.scale * ref[i]) mismatches += 1;
  }
  c.check(mismatches == 0, "bit-exact equality (tolerance 0), mismatches=" +
                               std::to_string(mismatches));
  c.check(c.seconds() < 30.0, "runtime < 30 s");
}

void criterion_2_theorem_constant() {
  Criterion c(2, "analytic 0.5354 constant and Monte-Carlo agreement over 10 seeds");
  const double analytic = analytic_abs_error_constant();
  c.check(std::abs(analytic - 0.5354) < 5e-5,
          "analytic " + std::to_string(analytic) + " within 5e-5 of 0.5354");
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    MonteCarloResult mc = monte_carlo_abs_error(1000000, seed);
    c.check(std::abs(mc.mean - analytic) <= 3.0 * mc.stderr_of_mean,
            "seed " + std::to_string(seed) + " within 3 stderr");
  }
  c.check(c.seconds() < 10.0, "runtime < 10 s");
}

void criterion_3_theorem_structure() {
  Criterion c(3, "gradient-error factorization (k=1 within 10%) and k=3/k=1 ratio in [5,13]");
  const GradErrorReport r1 = gradient_error_experiment(1, 4, 200, 20240809);
  const GradErrorReport r3 = gradient_error_experiment(3, 4, 200, 20240809);
  c.check(r1.samples >= 200, "n_trials >= 200");
  c.check(r1.relative_deviation <= 0.10,
          "k=1 relative deviation " + std::to_string(r1.relative_deviation) + " <= 0.10");
  const double ratio = r3.empirical_eae / r1.empirical_eae;
  c.check(ratio >= 5.0 && ratio <= 13.0, "EAE ratio " + std::to_string(ratio) + " in [5,13]");
  c.check(c.seconds() < 60.0, "runtime < 60 s");
}

void criterion_4_gradient_correctness() {
  Criterion c(4, "finite differences: primitives and BDC-V0..V3 under 1e-3 (64-bit, eps 1e-4)");
  Rng data_rng(33);
  auto random_tensor = [&](const Shape& shape) {
    Tensor<double> t(shape);
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = data_rng.normal();
    return t;
  };
  auto randomize = [](ParamStore<double>& store, std::uint64_t seed) {
    Rng rng(seed);
    for (std::size_t i = 0; i < store.size(); ++i) {
      auto& p = store.at(static_cast<ParamId>(i));
      if (!p.trainable) continue;
      for (std::int64_t j = 0; j < p.value.size(); ++j) {
        if (p.name.ends_with(".w"))
          p.value[j] = rng.sign_unit() * rng.uniform(0.15, 0.85);
        else if (p.name.ends_with(".k"))
          p.value[j] = rng.uniform(0.5, 1.5);
        else if (p.name.ends_with(".gamma"))
          p.value[j] = 0.3 * rng.normal();
        else if (p.name.ends_with(".beta"))
          p.value[j] = rng.uniform(0.1, 0.6);
        else
          p.value[j] = 0.2 * rng.normal();
      }
    }
  };
  auto fd = [&](ParamStore<double>& store, const std::function<Value<double>(Ctx<double>&)>& fwd,
                const Shape& out_shape, std::uint64_t seed) {
    Rng rng(seed);
    Tensor<double> weights(out_shape);
    for (std::int64_t i = 0; i < weights.size(); ++i) weights[i] = rng.normal();
    return finite_diff_check<double>(store, fwd, weights, 1e-4).max_rel_error;
  };

  {  // primitives behind a parameterized redistribution
    ParamStore<double> store;
    auto redist = RedistLayer<double>::create(store, "r", 4);
    auto act = RPReLULayer<double>::create(store, "act.act", 4);
    auto bn = BatchNormLayer<double>::create(store, "bn", 4);
    Rng wr(44);
    auto conv = BinConvLayer<double>::create(store, "c", 4, 4, 3, 1, 1, wr);
    auto fconv = FpConvLayer<double>::create(store, "f", 4, 4, 3, 1, 1, wr);
    randomize(store, 101);
    conv.refresh(store);
    Tensor<double> x = random_tensor(Shape{4, 6, 6});
    auto chain = [&](Ctx<double>& ctx) {
      Value<double> v = ctx.redistribute(ctx.input(x), redist);
      v = ctx.rprelu(v, act);
      v = ctx.sign(v, 1.0);
      v = ctx.binconv(v, conv);
      v = ctx.batchnorm(v, bn);
      v = ctx.fpconv(v, fconv);
      Value<double> s = ctx.sigmoid(ctx.global_avg_pool(v));
      return ctx.channel_gate(v, s);
    };
    const double err = fd(store, chain, Shape{4, 6, 6}, 55);
    c.check(err < 1e-3, "primitive chain max rel error " + std::to_string(err));
  }

  const std::uint64_t param_seeds[] = {101, 102, 203, 104};
  int vi = 0;
  Tensor<double> x = random_tensor(Shape{4, 6, 6});
  for (BDCVariant variant :
       {BDCVariant::kV0, BDCVariant::kV1, BDCVariant::kV2, BDCVariant::kV3}) {
    ParamStore<double> store;
    Rng wr(34);
    BDCUnitConfig cfg;
    cfg.variant = variant;
    cfg.n_mulbiconv = 2;
    cfg.channels = 4;
    auto unit =
        BDCUnit<double>::build(store, cfg, 4, 4, BDCUnit<double>::Residual::kIdentity, "u", wr);
    randomize(store, param_seeds[vi]);
    unit.refresh(store);
    auto fwd = [&](Ctx<double>& ctx) { return unit.forward(ctx, ctx.input(x)); };
    const double err = fd(store, fwd, x.shape(), 40 + static_cast<std::uint64_t>(vi));
    c.check(err < 1e-3, std::string("BDC-") + to_string(variant) + " max rel error " +
                            std::to_string(err));
    vi += 1;
  }
  c.check(c.seconds() < 60.0, "runtime < 60 s");
}

void criterion_5_cost_model() {
  Criterion c(5, "exact /64 and /32 integer identities; 3-1 vs 3-3 table columns identical");
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    ConvGeometry g;
    g.c_in = rng.uniform_int(1, 96);
    g.c_out = rng.uniform_int(1, 96);
    g.kernel = rng.uniform_int(0, 1) ? 3 : 1;
    g.stride = rng.uniform_int(0, 1) ? 2 : 1;
    g.padding = 1;
    g.h = rng.uniform_int(4, 40);
    g.w = rng.uniform_int(4, 40);
    const CostReport bin = cost_of_layer(g, true);
    const CostReport fp = cost_of_layer(g, false);
    c.check(bin.ops_b_x64 == fp.ops_f, "ops_b*64 == fp-equivalent ops");
    c.check(bin.params_b_x32 == fp.params_f, "params_b*32 == fp-equivalent params");
    c.check(bin.ops_b() * 64.0 == static_cast<double>(fp.ops_f), "ops division exact");
    c.check(bin.params_b() * 32.0 == static_cast<double>(fp.params_f), "params division exact");
  }

  // every binarized conv layer of the assembled toy network
  toy::NetSpec spec;
  toy::OccNet<float> net = toy::OccNet<float>::build(spec, 1);
  for (const StageCost& stage : net.cost().stages) {
    c.check(stage.report.ops_b() * 64.0 == static_cast<double>(stage.report.ops_b_x64),
            stage.name + " ops identity");
    c.check(stage.report.params_b() * 32.0 == static_cast<double>(stage.report.params_b_x32),
            stage.name + " params identity");
  }

  // kernel-ablation 3->1 vs 3->3: identical Table-style columns
  auto table_columns = [&](std::vector<int> plan) {
    toy::NetSpec s;
    s.unit.variant = BDCVariant::kV1;
    s.unit.n_mulbiconv = 0;
    s.unit.kernel_plan = std::move(plan);
    toy::OccNet<float> n = toy::OccNet<float>::build(s, 1);
    const CostReport total = n.cost().total();
    return std::make_pair(fmt2(total.ops_total() / 1e9), fmt2(total.params_total() / 1e6));
  };
  const auto cols_31 = table_columns({3, 1});
  const auto cols_33 = table_columns({3, 3});
  c.check(cols_31.first == cols_33.first,
          "ops_g column: " + cols_31.first + " vs " + cols_33.first);
  c.check(cols_31.second == cols_33.second,
          "params_m column: " + cols_31.second + " vs " + cols_33.second);
}

void criterion_6_ablation_structure() {
  Criterion c(6, "cmd_ablate reproduces the break-down/kernel/N-sweep row structure");
  const fs::path csv_a = work_dir() / "ablation_a.csv";
  const fs::path csv_b = work_dir() / "ablation_b.csv";
  const std::string config = std::string(BDC_CONFIG_DIR) + "/ablate.cfg";
  c.check(run_cli("ablate --config " + config + " --out " + csv_a.string()) == 0, "ablate run 1");
  c.check(run_cli("ablate --config " + config + " --out " + csv_b.string()) == 0, "ablate run 2");
  c.check(slurp(csv_a) == slurp(csv_b), "seed-reproducible CSV bytes");

  const CsvTable table = parse_csv(slurp(csv_a));
  c.check(table.rows.size() == 18, "18 rows (4 + 4 + 5 + 5)");
  const int col_group = table.col("group"), col_label = table.col("label");
  const int col_miou = table.col("miou"), col_params = table.col("params_exact");
  const int col_ops_g = table.col("ops_g"), col_params_m = table.col("params_m");
  const int col_ops_exact = table.col("ops_exact");
  auto find_row = [&](const std::string& group,
                      const std::string& label) -> const std::vector<std::string>* {
    for (const auto& row : table.rows)
      if (row[static_cast<std::size_t>(col_group)] == group &&
          row[static_cast<std::size_t>(col_label)] == label)
        return &row;
    return nullptr;
  };
  for (const char* label : {"BDC-V0", "BDC-V1", "BDC-V2", "BDC-V3"})
    c.check(find_row("breakdown", label) != nullptr, std::string("breakdown row ") + label);
  for (const char* label : {"3-1", "3-3", "1-1", "3-3-1"})
    c.check(find_row("kernel", label) != nullptr, std::string("kernel row ") + label);
  for (int n = 0; n <= 4; ++n) {
    c.check(find_row("nsweep-v2", "N=" + std::to_string(n)) != nullptr, "nsweep-v2 row");
    c.check(find_row("nsweep-v3", "N=" + std::to_string(n)) != nullptr, "nsweep-v3 row");
  }

  // Table-4 pattern: 3-1 and 3-3 columns identical at display precision
  const auto* k31 = find_row("kernel", "3-1");
  const auto* k33 = find_row("kernel", "3-3");
  c.check(k31 && k33 &&
              (*k31)[static_cast<std::size_t>(col_ops_g)] ==
                  (*k33)[static_cast<std::size_t>(col_ops_g)] &&
              (*k31)[static_cast<std::size_t>(col_params_m)] ==
                  (*k33)[static_cast<std::size_t>(col_params_m)],
          "3-1 vs 3-3 ops/params columns identical");

  // params strictly nondecreasing in N, and V3 never below V2 cost columns
  for (const char* group : {"nsweep-v2", "nsweep-v3"}) {
    double prev = -1.0;
    for (int n = 0; n <= 4; ++n) {
      const auto* row = find_row(group, "N=" + std::to_string(n));
      const double params = std::stod((*row)[static_cast<std::size_t>(col_params)]);
      c.check(params >= prev, std::string(group) + " params nondecreasing in N");
      prev = params;
    }
  }

  // ops/params columns match the analysis cost model exactly
  {
    toy::NetSpec spec;
    spec.unit.variant = BDCVariant::kV3;
    spec.unit.n_mulbiconv = 2;
    toy::OccNet<float> net = toy::OccNet<float>::build(spec, 1);
    const CostReport total = net.cost().total();
    const auto* row = find_row("breakdown", "BDC-V3");
    c.check(std::stod((*row)[static_cast<std::size_t>(col_ops_exact)]) == total.ops_total(),
            "BDC-V3 ops column equals cost model");
    c.check(std::stod((*row)[static_cast<std::size_t>(col_params)]) == total.params_total(),
            "BDC-V3 params column equals cost model");
  }

  // V2 with N=0 is operationally identical to V1: identical CSV rows...
  const auto* v1_row = find_row("kernel", "3-1");
  const auto* v2_row = find_row("nsweep-v2", "N=0");
  c.check((*v1_row)[static_cast<std::size_t>(col_miou)] ==
              (*v2_row)[static_cast<std::size_t>(col_miou)],
          "V2(N=0) mIoU equals V1 mIoU");
  // ...and identical outputs given shared parameters
  {
    ParamStore<float> s1, s2;
    Rng r1(77), r2(77);
    BDCUnitConfig c1;
    c1.variant = BDCVariant::kV1;
    c1.channels = 6;
    BDCUnitConfig c2 = c1;
    c2.variant = BDCVariant::kV2;
    c2.n_mulbiconv = 0;
    auto u1 = BDCUnit<float>::build(s1, c1, 6, 6, BDCUnit<float>::Residual::kIdentity, "u", r1);
    auto u2 = BDCUnit<float>::build(s2, c2, 6, 6, BDCUnit<float>::Residual::kIdentity, "u", r2);
    Rng xr(78);
    Tensor<float> x(Shape{6, 5, 5});
    for (std::int64_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(xr.normal());
    Ctx<float> ctx1{&s1, nullptr, BinarizeMode::kHard, true, false};
    Ctx<float> ctx2{&s2, nullptr, BinarizeMode::kHard, true, false};
    Value<float> y1 = u1.forward(ctx1, ctx1.input(x));
    Value<float> y2 = u2.forward(ctx2, ctx2.input(x));
    bool equal = y1.t.size() == y2.t.size();
    for (std::int64_t i = 0; equal && i < y1.t.size(); ++i) equal = y1.t[i] == y2.t[i];
    c.check(equal, "V2(N=0) output bitwise equal to V1 with shared parameters");
  }
}

void criterion_7_toy_learning(fs::path& checkpoint_out, std::string& recorded_miou) {
  Criterion c(7, "BDC-V3 (N=2) halves the loss and beats 3x the majority baseline in 200 steps");
  const std::string config = std::string(BDC_CONFIG_DIR) + "/accept_train.cfg";
  const fs::path csv_a = work_dir() / "train_a.csv";
  const fs::path csv_b = work_dir() / "train_b.csv";
  const fs::path ck_a = work_dir() / "train_a.bdc";
  const fs::path ck_b = work_dir() / "train_b.bdc";
  c.check(run_cli("train --config " + config + " --out " + csv_a.string() + " --checkpoint " +
                  ck_a.string()) == 0,
          "training run 1");
  c.check(run_cli("train --config " + config + " --out " + csv_b.string() + " --checkpoint " +
                  ck_b.string()) == 0,
          "training run 2");
  const std::string report = slurp(csv_a);
  c.check(report == slurp(csv_b), "bitwise identical reports across seeded runs");
  c.check(slurp(ck_a) == slurp(ck_b), "bitwise identical checkpoints across seeded runs");

  const double initial = std::stod(report_field(report, "initial_loss"));
  const double final_loss = std::stod(report_field(report, "final_loss"));
  const double miou = std::stod(report_field(report, "final_miou"));
  const double baseline = std::stod(report_field(report, "baseline_miou"));
  c.check(final_loss <= 0.5 * initial, "final loss " + std::to_string(final_loss) +
                                           " <= 0.5 * initial " + std::to_string(initial));
  c.check(miou >= 3.0 * baseline, "mIoU " + std::to_string(miou) + " >= 3 * baseline " +
                                      std::to_string(baseline));
  c.check(c.seconds() < 300.0, "runtime < 5 min");
  checkpoint_out = ck_a;
  recorded_miou = report_field(report, "final_miou");
}

void criterion_8_serialization(const fs::path& checkpoint, const std::string& recorded_miou) {
  Criterion c(8, "checkpoint reload reproduces the recorded mIoU; CRC corruption rejected");
  const std::string config = std::string(BDC_CONFIG_DIR) + "/accept_train.cfg";
  const fs::path eval_csv = work_dir() / "eval.csv";
  c.check(run_cli("train --config " + config + " --load " + checkpoint.string() +
                  " --eval-only --out " + eval_csv.string()) == 0,
          "reload and evaluate");
  c.check(report_field(slurp(eval_csv), "final_miou") == recorded_miou,
          "reloaded mIoU identical to the recorded value");

  std::string bytes = slurp(checkpoint);
  bytes[bytes.size() / 3] = static_cast<char>(bytes[bytes.size() / 3] ^ 0x40);
  const fs::path corrupted = work_dir() / "corrupted.bdc";
  std::ofstream(corrupted, std::ios::binary) << bytes;
  c.check(run_cli("train --config " + config + " --load " + corrupted.string() +
                  " --eval-only --out " + (work_dir() / "corrupt.csv").string()) == 2,
          "flipped byte rejected via CRC");
}

}  // namespace

int main() {
  std::printf("acceptance suite (work dir %s)\n", work_dir().c_str());
  criterion_1_kernel_exactness();
  criterion_2_theorem_constant();
  criterion_3_theorem_structure();
  criterion_4_gradient_correctness();
  criterion_5_cost_model();
  criterion_6_ablation_structure();
  fs::path checkpoint;
  std::string recorded_miou;
  criterion_7_toy_learning(checkpoint, recorded_miou);
  criterion_8_serialization(checkpoint, recorded_miou);
  if (g_failures == 0) {
    std::printf("acceptance: all 8 criteria passed\n");
    return 0;
  }
  std::printf("acceptance: %d criteria FAILED\n", g_failures);
  return 1;
}
