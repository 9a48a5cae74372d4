#include "retina/frame_bounds.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <vector>

#include "retina/errors.hpp"

namespace retina {

double beta_bound(const GridSpec& grid, const DoGParams& params, CoarseFilter coarse) {
  double beta = 0.0;
  for (int k = 0; k < grid.layers; ++k) {
    // ||a (x) a - b (x) b||_1 computed on the separable form avoids building huge coarse kernels.
    const SeparableDoG dog = separable_dog(k, params, grid.layers, coarse);
    const std::size_t side = dog.center.size();
    double l1 = 0.0;
    for (std::size_t a = 0; a < side; ++a)
      for (std::size_t b = 0; b < side; ++b)
        l1 += std::abs(dog.at(static_cast<int>(a) - dog.half_width, static_cast<int>(b) - dog.half_width));
    const double weighted = grid.layer_weight(k) * l1;
    beta += weighted * weighted;
  }
  return beta;
}

namespace {

/// Real 1D DFT of a symmetric profile centered at zero, sampled on an n-point periodic grid.
std::vector<double> symmetric_dft(const std::vector<double>& profile, int half_width, std::size_t n) {
  std::vector<double> out(n, 0.0);
  if (profile.empty()) return out;
  for (std::size_t u = 0; u < n; ++u) {
    double s = 0.0;
    for (int a = -half_width; a <= half_width; ++a) {
      const double phase = 2.0 * std::numbers::pi * static_cast<double>(u) * static_cast<double>(a) / static_cast<double>(n);
      s += profile[static_cast<std::size_t>(a + half_width)] * std::cos(phase);
    }
    out[u] = s;
  }
  return out;
}

}  // namespace

double alpha_bound(const DoGParams& params, std::size_t image_side, int layers, CoarseFilter coarse) {
  const GridSpec grid = grid_spec(image_side, layers, params);
  const std::size_t n = image_side;

  const SeparableDoG coarse_dog = separable_dog(0, params, layers, coarse);
  double dc = coarse_dog.center_weight;  // unit-sum profiles: DC of c (x) c is 1
  if (coarse_dog.surround_weight != 0.0) dc -= coarse_dog.surround_weight;
  dc *= grid.layer_weight(0);
  double alpha = dc * dc;

  const int finest = layers - 1;
  const SeparableDoG fine = separable_dog(finest, params, layers, coarse);
  const auto c_hat = symmetric_dft(fine.center, fine.half_width, n);
  const auto s_hat = symmetric_dft(fine.surround, fine.half_width, n);
  const double w = grid.layer_weight(finest);
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = 0; v < n; ++v) {
      if (u == 0 && v == 0) continue;
      double h = fine.center_weight * c_hat[u] * c_hat[v];
      if (fine.surround_weight != 0.0) h -= fine.surround_weight * s_hat[u] * s_hat[v];
      alpha = std::min(alpha, (w * h) * (w * h));
    }
  if (!(alpha > 1e-300))
    throw ConsistencyError("lower frame bound is not positive (alpha = " + std::to_string(alpha) +
                           "); the coarse layer must be a low-pass scaling function");
  return alpha;
}

double energy_ratio(const AnalysisOperator& op, std::span<const double> image) {
  double norm = 0.0;
  for (double v : image) norm += v * v;
  if (!(norm > 0.0)) throw InvalidParameter("energy ratio of the zero image is undefined");
  const auto c = op.forward(image);
  double energy = 0.0;
  for (double v : c) energy += v * v;
  return energy / norm;
}

namespace {

double normalize(std::vector<double>& x) {
  double n = 0.0;
  for (double v : x) n += v * v;
  n = std::sqrt(n);
  for (double& v : x) v /= n;
  return n;
}

std::vector<double> frame_apply(const AnalysisOperator& op, const std::vector<double>& x) {
  const Image y = op.adjoint(op.forward(x));
  return {y.samples().begin(), y.samples().end()};
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Largest eigenvalue of shift * I + sign * Phi* Phi by power iteration with Rayleigh quotients.
double power_iteration(const AnalysisOperator& op, double shift, double sign, std::size_t max_iterations,
                       double tolerance, std::uint64_t seed, std::size_t& used) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  std::vector<double> x(op.cols());
  for (double& v : x) v = uniform(rng);
  normalize(x);

  double previous = std::numeric_limits<double>::infinity();
  double rayleigh = 0.0;
  std::size_t stable = 0;
  for (std::size_t it = 0; it < max_iterations; ++it) {
    std::vector<double> y = frame_apply(op, x);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = shift * x[i] + sign * y[i];
    rayleigh = dot(x, y);
    used = it + 1;
    if (std::abs(rayleigh - previous) <= tolerance * std::abs(rayleigh)) {
      if (++stable >= 5) break;
    } else {
      stable = 0;
    }
    previous = rayleigh;
    if (normalize(y) == 0.0) break;
    x = std::move(y);
  }
  return rayleigh;
}

}  // namespace

SpectrumEstimate estimate_spectrum(const AnalysisOperator& op, std::size_t max_iterations, double tolerance,
                                   std::uint64_t seed) {
  SpectrumEstimate est;
  std::size_t used_max = 0, used_min = 0;
  est.lambda_max = power_iteration(op, 0.0, 1.0, max_iterations, tolerance, seed, used_max);
  const double top = power_iteration(op, est.lambda_max, -1.0, max_iterations, tolerance, seed + 1, used_min);
  est.lambda_min = est.lambda_max - top;
  est.iterations = used_max + used_min;
  est.condition = est.lambda_min > 0.0 ? est.lambda_max / est.lambda_min : std::numeric_limits<double>::infinity();
  return est;
}

FrameReport verify_frame_condition(const AnalysisOperator& op, std::size_t trials, std::uint64_t seed) {
  if (trials < 1) throw InvalidParameter("frame verification needs at least one trial");
  FrameReport report;
  report.image_side = op.grid().image_side;
  report.layers = op.grid().layers;
  report.trials = trials;
  report.beta = beta_bound(op.grid(), op.params(), op.coarse());
  report.alpha = alpha_bound(op.params(), op.grid().image_side, op.grid().layers, op.coarse());
  const double eps = 1e-9 * report.beta;

  report.empirical_min = std::numeric_limits<double>::infinity();
  report.empirical_max = 0.0;
  std::vector<double> image(op.cols());
  for (std::size_t t = 0; t < trials; ++t) {
    std::mt19937_64 rng(seed + 0x9E3779B97F4A7C15ull * (t + 1));
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (double& v : image) v = uniform(rng);
    const double ratio = energy_ratio(op, image);
    report.empirical_min = std::min(report.empirical_min, ratio);
    report.empirical_max = std::max(report.empirical_max, ratio);
    if (ratio < report.alpha - eps) throw FrameConditionViolated("energy ratio below the lower frame bound", ratio);
    if (ratio > report.beta + eps) throw FrameConditionViolated("energy ratio above the upper frame bound", ratio);
  }

  const SpectrumEstimate spectrum = estimate_spectrum(op);
  report.lambda_min = spectrum.lambda_min;
  report.lambda_max = spectrum.lambda_max;
  report.condition_estimate = spectrum.condition;
  return report;
}

std::string to_key_value(const FrameReport& r) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "image_side " << r.image_side << '\n'
      << "layers " << r.layers << '\n'
      << "trials " << r.trials << '\n'
      << "alpha " << r.alpha << '\n'
      << "beta " << r.beta << '\n'
      << "empirical_min " << r.empirical_min << '\n'
      << "empirical_max " << r.empirical_max << '\n'
      << "lambda_min " << r.lambda_min << '\n'
      << "lambda_max " << r.lambda_max << '\n'
      << "condition_estimate " << r.condition_estimate << '\n'
      << "condition_reference_257 " << kReferenceCondition257 << '\n';
  return out.str();
}

std::string to_table(const FrameReport& r) {
  std::ostringstream out;
  auto line = [&](const char* name, auto value) { out << "  " << std::left << std::setw(26) << name << value << '\n'; };
  out << "frame report (" << r.image_side << "x" << r.image_side << ", K=" << r.layers << ", " << r.trials
      << " trials)\n";
  out << std::setprecision(6);
  line("alpha (analytic lower)", r.alpha);
  line("empirical min ratio", r.empirical_min);
  line("empirical max ratio", r.empirical_max);
  line("beta (analytic upper)", r.beta);
  line("lambda_min(Phi*Phi)", r.lambda_min);
  line("lambda_max(Phi*Phi)", r.lambda_max);
  line("condition estimate", r.condition_estimate);
  line("reference at 257x257", kReferenceCondition257);
  return out.str();
}

}  // namespace retina
