#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bdc/bitconv.hpp"

namespace bdc {

/// In-library Gauss error function, 64-bit accurate (Maclaurin series below
/// |x| = 2, Laplace continued fraction above).
double erf64(double x);

/// E|x - sign(x)| for x ~ N(0,1):
/// 2*[erf(1/sqrt(2)) - 1/2 - 1/sqrt(2*pi) + 2/sqrt(2*pi*e)], approx 0.5354.
double analytic_abs_error_constant();

struct MonteCarloResult {
  double mean = 0.0;
  double stderr_of_mean = 0.0;
  std::int64_t n_samples = 0;
};

/// Draws x ~ N(0,1) and averages |x - sign(x)| with sign(0) = -1. Trials are
/// chunked with per-chunk seeds derived from the master seed, so the result
/// is identical at any BDC_THREADS setting.
MonteCarloResult monte_carlo_abs_error(std::int64_t n_samples, std::uint64_t seed);

struct GradErrorReport {
  int kernel_size = 0;
  double empirical_eae = 0.0;
  double predicted_eae = 0.0;
  std::int64_t samples = 0;
  double relative_deviation = 0.0;  // |empirical - predicted| / predicted
  double ratio = 0.0;               // empirical / predicted
};

struct GradErrorOptions {
  std::int64_t spatial = 8;       // H = W of the pre-binarization input
  double epsilon_scale = 1.0;     // synthetic override, scales epsilon in the EAE sum
  bool binary_inputs = false;     // feed exact +-1 "full precision" inputs (epsilon = 0)
};

/// Two-layer chain [conv_k -> tanh -> conv_k] on N(0,1) inputs. The empirical
/// EAE takes the per-position absolute difference between the layer-l weight
/// gradients computed with binarized and full-precision inputs against a
/// common downstream gradient field; the prediction is the factorized
/// 0.5354 * sum of per-term absolute expectations over the same trials.
GradErrorReport gradient_error_experiment(int k, std::int64_t c_channels, int n_trials,
                                          std::uint64_t seed, const GradErrorOptions& opt = {});

// ---------------------------------------------------------------------------
// OPs / Params cost model
// ---------------------------------------------------------------------------

/// One multiply-accumulate counts as 2 ops. Binarized layers keep the exact
/// pre-division counts: ops_b = ops_b_x64/64 and params_b = params_b_x32/32.
struct CostReport {
  std::uint64_t ops_f = 0;
  std::uint64_t ops_b_x64 = 0;
  std::uint64_t params_f = 0;
  std::uint64_t params_b_x32 = 0;

  double ops_b() const { return static_cast<double>(ops_b_x64) / 64.0; }
  double params_b() const { return static_cast<double>(params_b_x32) / 32.0; }
  double ops_total() const { return static_cast<double>(ops_f) + ops_b(); }
  double params_total() const { return static_cast<double>(params_f) + params_b(); }

  CostReport& operator+=(const CostReport& other) {
    ops_f += other.ops_f;
    ops_b_x64 += other.ops_b_x64;
    params_f += other.params_f;
    params_b_x32 += other.params_b_x32;
    return *this;
  }
};

/// Conv-layer cost: ops_f = 2*k^2*C_in*C_out*H_out*W_out, params_f =
/// k^2*C_in*C_out; a binarized layer moves both into the /64, /32 columns.
CostReport cost_of_layer(const ConvGeometry& g, bool binarized);

struct StageCost {
  std::string name;
  CostReport report;
};

struct NetworkCost {
  std::vector<StageCost> stages;
  CostReport total() const {
    CostReport sum;
    for (const auto& s : stages) sum += s.report;
    return sum;
  }
};

}  // namespace bdc
