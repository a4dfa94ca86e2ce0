#include "bdc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "bdc/rng.hpp"
#include "bdc/threads.hpp"

namespace bdc {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kE = 2.71828182845904523536;
}  // namespace

double erf64(double x) {
  if (x < 0.0) return -erf64(-x);
  if (x == 0.0) return 0.0;
  if (x < 2.0) {
    // Maclaurin series: erf(x) = 2/sqrt(pi) * sum (-1)^n x^(2n+1) / (n!(2n+1))
    const double xx = x * x;
    double num = x;  // x^(2n+1)/n!
    double sum = x;
    for (int n = 1; n < 200; ++n) {
      num *= -xx / n;
      const double term = num / (2 * n + 1);
      sum += term;
      if (std::abs(term) < 1e-18 * std::abs(sum)) break;
    }
    return 2.0 / std::sqrt(kPi) * sum;
  }
  // Laplace continued fraction for erfc, modified Lentz:
  // erfc(x) = e^(-x^2)/sqrt(pi) * 1/(x + 1/(2x + 2/(x + 3/(2x + ...))))
  const double tiny = 1e-300;
  double f = x, c = f, d = 0.0;
  for (int n = 1; n < 300; ++n) {
    const double an = n;
    const double bn = (n % 2 == 1) ? 2.0 * x : x;
    d = bn + an * d;
    if (d == 0.0) d = tiny;
    c = bn + an / c;
    if (c == 0.0) c = tiny;
    d = 1.0 / d;
    const double delta = c * d;
    f *= delta;
    if (std::abs(delta - 1.0) < 1e-17) break;
  }
  const double erfc = std::exp(-x * x) / std::sqrt(kPi) / f;
  return 1.0 - erfc;
}

double analytic_abs_error_constant() {
  return 2.0 * (erf64(1.0 / std::sqrt(2.0)) - 0.5 - 1.0 / std::sqrt(2.0 * kPi) +
                2.0 / std::sqrt(2.0 * kPi * kE));
}

MonteCarloResult monte_carlo_abs_error(std::int64_t n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw Error(ErrorKind::kConfig, "n_samples must be >= 1");
  constexpr std::int64_t kChunk = 4096;
  const std::int64_t n_chunks = (n_samples + kChunk - 1) / kChunk;
  std::vector<double> sums(static_cast<std::size_t>(n_chunks), 0.0);
  std::vector<double> sq_sums(static_cast<std::size_t>(n_chunks), 0.0);
  parallel_for(n_chunks, [&](std::int64_t chunk) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(chunk)));
    const std::int64_t lo = chunk * kChunk;
    const std::int64_t hi = std::min(n_samples, lo + kChunk);
    double s = 0.0, s2 = 0.0;
    for (std::int64_t i = lo; i < hi; ++i) {
      const double x = rng.normal();
      const double e = std::abs(x - (x > 0.0 ? 1.0 : -1.0));
      s += e;
      s2 += e * e;
    }
    sums[static_cast<std::size_t>(chunk)] = s;
    sq_sums[static_cast<std::size_t>(chunk)] = s2;
  });
  double total = 0.0, total_sq = 0.0;
  for (std::int64_t i = 0; i < n_chunks; ++i) {
    total += sums[static_cast<std::size_t>(i)];
    total_sq += sq_sums[static_cast<std::size_t>(i)];
  }
  MonteCarloResult result;
  result.n_samples = n_samples;
  result.mean = total / static_cast<double>(n_samples);
  const double var =
      std::max(0.0, total_sq / static_cast<double>(n_samples) - result.mean * result.mean);
  result.stderr_of_mean = std::sqrt(var / static_cast<double>(n_samples));
  return result;
}

// ---------------------------------------------------------------------------
// Theorem-1 structure experiment
// ---------------------------------------------------------------------------

namespace {

// conv-transpose of G against w over the layer-l output grid; abs_terms makes
// every per-term product absolute (the factorized prediction side).
Tensor<double> backprop_field(const Tensor<double>& g_next, const Tensor<double>& w,
                              const ConvGeometry& geom, bool abs_terms) {
  Tensor<double> u(Shape{geom.c_in, geom.h, geom.w});
  for (std::int64_t o = 0; o < geom.c_out; ++o)
    for (std::int64_t oh = 0; oh < geom.h_out(); ++oh)
      for (std::int64_t ow = 0; ow < geom.w_out(); ++ow) {
        const double go = g_next.at(o, oh, ow);
        for (std::int64_t c = 0; c < geom.c_in; ++c)
          for (int m = 0; m < geom.kernel; ++m) {
            const std::int64_t ih = oh * geom.stride + m - geom.padding;
            if (ih < 0 || ih >= geom.h) continue;
            for (int n = 0; n < geom.kernel; ++n) {
              const std::int64_t iw = ow * geom.stride + n - geom.padding;
              if (iw < 0 || iw >= geom.w) continue;
              const double term = w.at4(o, c, m, n) * go;
              u.at(c, ih, iw) += abs_terms ? std::abs(term) : term;
            }
          }
      }
  return u;
}

}  // namespace

GradErrorReport gradient_error_experiment(int k, std::int64_t c_channels, int n_trials,
                                          std::uint64_t seed, const GradErrorOptions& opt) {
  if (k != 1 && k != 3) throw Error(ErrorKind::kInvalidKernel, std::to_string(k));
  if (c_channels < 1 || n_trials < 1) throw Error(ErrorKind::kConfig, "bad experiment size");
  const std::int64_t c = c_channels;
  const std::int64_t hs = opt.spatial;
  const int pad = k / 2;
  const ConvGeometry geom{c, c, k, 1, pad, hs, hs};

  std::vector<double> emp(static_cast<std::size_t>(n_trials), 0.0);
  std::vector<double> pred(static_cast<std::size_t>(n_trials), 0.0);
  parallel_for(n_trials, [&](std::int64_t trial) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(trial)));
    Tensor<double> x_hat(Shape{c, hs, hs});
    for (std::int64_t i = 0; i < x_hat.size(); ++i)
      x_hat[i] = opt.binary_inputs ? rng.sign_unit() : rng.normal();

    // Layer-l weights keep y in the tanh's responsive range for either k.
    Tensor<double> w_l(Shape{c, c, k, k});
    const double w_l_std = 1.0 / std::sqrt(static_cast<double>(c * k * k));
    for (std::int64_t i = 0; i < w_l.size(); ++i) w_l[i] = w_l_std * rng.normal();
    // Matched per-term factor statistics: positive next-layer weights and
    // upstream gradients with a k-independent element distribution, so
    // per-term absolute sums equal signed sums and the k ratio isolates the
    // number of summed terms.
    const double w_next_std = 1.0 / std::sqrt(static_cast<double>(c));
    Tensor<double> w_next(Shape{c, c, k, k});
    for (std::int64_t i = 0; i < w_next.size(); ++i)
      w_next[i] = std::abs(rng.normal()) * w_next_std;
    Tensor<double> g_next(Shape{c, hs, hs});
    for (std::int64_t i = 0; i < g_next.size(); ++i) g_next[i] = std::abs(rng.normal());

    Tensor<double> x = sign_forward(x_hat);
    Tensor<double> y = conv2d_fp(x, w_l, geom, -1.0);
    Tensor<double> sigma_prime(y.shape());
    for (std::int64_t i = 0; i < y.size(); ++i) {
      const double t = std::tanh(y[i]);
      sigma_prime[i] = 1.0 - t * t;
    }

    // Downstream gradient field shared by both weight-gradient computations.
    Tensor<double> u = backprop_field(g_next, w_next, geom, false);
    Tensor<double> u_abs = backprop_field(g_next, w_next, geom, true);

    // Empirical: per-position |epsilon * D| summed over output positions,
    // averaged over the C*C*k*k weight elements.
    double emp_sum = 0.0;
    for (std::int64_t ci = 0; ci < c; ++ci) {
      for (int m = 0; m < k; ++m) {
        for (int n = 0; n < k; ++n) {
          double per_offset = 0.0;
          for (std::int64_t i = 0; i < hs; ++i) {
            const std::int64_t ih = i + m - pad;
            if (ih < 0 || ih >= hs) continue;
            for (std::int64_t j = 0; j < hs; ++j) {
              const std::int64_t iw = j + n - pad;
              if (iw < 0 || iw >= hs) continue;
              const double eps =
                  opt.epsilon_scale * (x.at(ci, ih, iw) - x_hat.at(ci, ih, iw));
              if (eps == 0.0) continue;
              double d_sum = 0.0;
              for (std::int64_t o = 0; o < c; ++o)
                d_sum += std::abs(sigma_prime.at(o, i, j) * u.at(o, i, j));
              per_offset += std::abs(eps) * d_sum;
            }
          }
          emp_sum += per_offset;
        }
      }
    }
    emp[static_cast<std::size_t>(trial)] =
        emp_sum / static_cast<double>(c * c * k * k);

    // Prediction: 0.5354 * mean over output channels of the per-term
    // absolute sums.
    double pred_sum = 0.0;
    for (std::int64_t o = 0; o < c; ++o)
      for (std::int64_t i = 0; i < hs; ++i)
        for (std::int64_t j = 0; j < hs; ++j)
          pred_sum += sigma_prime.at(o, i, j) * u_abs.at(o, i, j);
    pred[static_cast<std::size_t>(trial)] = 0.5354 * pred_sum / static_cast<double>(c);
  });

  GradErrorReport report;
  report.kernel_size = k;
  report.samples = n_trials;
  double emp_mean = 0.0, pred_mean = 0.0;
  for (int t = 0; t < n_trials; ++t) {
    emp_mean += emp[static_cast<std::size_t>(t)];
    pred_mean += pred[static_cast<std::size_t>(t)];
  }
  report.empirical_eae = emp_mean / n_trials;
  report.predicted_eae = pred_mean / n_trials;
  if (report.predicted_eae > 0.0) {
    report.ratio = report.empirical_eae / report.predicted_eae;
    report.relative_deviation =
        std::abs(report.empirical_eae - report.predicted_eae) / report.predicted_eae;
  }
  return report;
}

// ---------------------------------------------------------------------------

CostReport cost_of_layer(const ConvGeometry& g, bool binarized) {
  g.validate();
  const std::uint64_t k2 = static_cast<std::uint64_t>(g.kernel) * static_cast<std::uint64_t>(g.kernel);
  const std::uint64_t params = k2 * static_cast<std::uint64_t>(g.c_in) * static_cast<std::uint64_t>(g.c_out);
  const std::uint64_t ops =
      2 * params * static_cast<std::uint64_t>(g.h_out()) * static_cast<std::uint64_t>(g.w_out());
  CostReport report;
  if (binarized) {
    report.ops_b_x64 = ops;
    report.params_b_x32 = params;
  } else {
    report.ops_f = ops;
    report.params_f = params;
  }
  return report;
}

}  // namespace bdc
