#include "retina/pyramid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "retina/errors.hpp"

namespace retina {

void DoGParams::validate() const {
  if (!(center_weight > 0.0) || !std::isfinite(center_weight))
    throw InvalidParameter("center weight must be positive, got " + std::to_string(center_weight));
  if (!(surround_weight >= 0.0) || !std::isfinite(surround_weight))
    throw InvalidParameter("surround weight must be non-negative, got " + std::to_string(surround_weight));
  if (!(sigma_ratio > 0.0 && sigma_ratio < 1.0))
    throw InvalidParameter("sigma ratio must lie in (0, 1), got " + std::to_string(sigma_ratio));
  if (!(finest_center_sigma > 0.0) || !std::isfinite(finest_center_sigma))
    throw InvalidParameter("finest center sigma must be positive, got " + std::to_string(finest_center_sigma));
}

double FilterKernel::sum() const noexcept {
  double s = 0.0;
  for (double t : taps) s += t;
  return s;
}

double FilterKernel::l1_norm() const noexcept {
  double s = 0.0;
  for (double t : taps) s += std::abs(t);
  return s;
}

std::vector<double> gaussian_profile(double sigma, int half_width) {
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw InvalidParameter("gaussian sigma must be positive, got " + std::to_string(sigma));
  if (half_width < 1) throw InvalidParameter("gaussian half width must be >= 1, got " + std::to_string(half_width));

  std::vector<double> g(static_cast<std::size_t>(2 * half_width + 1));
  const double scale = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * sigma);
  for (int a = -half_width; a <= half_width; ++a)
    g[static_cast<std::size_t>(a + half_width)] = scale * std::exp(-(a * a) / (2.0 * sigma * sigma));
  // Sum symmetric pairs from the tails inward so the total is independent of tap order.
  double total = g[static_cast<std::size_t>(half_width)];
  for (int a = half_width; a >= 1; --a)
    total += g[static_cast<std::size_t>(half_width + a)] + g[static_cast<std::size_t>(half_width - a)];
  for (double& v : g) v /= total;
  return g;
}

FilterKernel gaussian_kernel(double sigma, int half_width) {
  const auto g = gaussian_profile(sigma, half_width);
  FilterKernel kernel;
  kernel.half_width = half_width;
  const std::size_t side = g.size();
  kernel.taps.resize(side * side);
  for (std::size_t a = 0; a < side; ++a)
    for (std::size_t b = 0; b < side; ++b) kernel.taps[a * side + b] = g[a] * g[b];
  return kernel;
}

namespace {

void check_layer(int k, int layers) {
  if (layers < 1) throw InvalidParameter("layer count must be >= 1, got " + std::to_string(layers));
  if (k < 0 || k >= layers)
    throw InvalidParameter("layer index " + std::to_string(k) + " outside [0, " + std::to_string(layers) + ")");
}

}  // namespace

double center_sigma(int k, const DoGParams& params, int layers) {
  check_layer(k, layers);
  return std::ldexp(params.finest_center_sigma, layers - 1 - k);
}

double surround_sigma(int k, const DoGParams& params, int layers) {
  return center_sigma(k, params, layers) / params.sigma_ratio;
}

int kernel_half_width(int k, const DoGParams& params, int layers) {
  const double m = std::floor(3.0 * surround_sigma(k, params, layers) + 0.5);
  return std::max(1, static_cast<int>(m));
}

SeparableDoG separable_dog(int k, const DoGParams& params, int layers, CoarseFilter coarse) {
  params.validate();
  check_layer(k, layers);
  SeparableDoG dog;
  dog.half_width = kernel_half_width(k, params, layers);
  dog.center_weight = params.center_weight;
  dog.center = gaussian_profile(center_sigma(k, params, layers), dog.half_width);
  const bool scaling = (k == 0 && coarse == CoarseFilter::scaling);
  if (!scaling && params.surround_weight != 0.0) {
    dog.surround_weight = params.surround_weight;
    dog.surround = gaussian_profile(surround_sigma(k, params, layers), dog.half_width);
  }
  return dog;
}

FilterKernel dog_kernel(int k, const DoGParams& params, int layers, CoarseFilter coarse) {
  const SeparableDoG dog = separable_dog(k, params, layers, coarse);
  FilterKernel kernel;
  kernel.scale = k;
  kernel.half_width = dog.half_width;
  const int m = dog.half_width;
  kernel.taps.resize(static_cast<std::size_t>(kernel.side()) * static_cast<std::size_t>(kernel.side()));
  std::size_t idx = 0;
  for (int a = -m; a <= m; ++a)
    for (int b = -m; b <= m; ++b) kernel.taps[idx++] = dog.at(a, b);
  return kernel;
}

std::size_t sample_position(int k, std::size_t i, int layers) {
  check_layer(k, layers);
  const int shift = layers - k - 1;
  const std::size_t offset = shift >= 1 ? std::size_t{1} << (shift - 1) : 0;
  return offset + (std::size_t{1} << shift) * i;
}

int max_layers(std::size_t image_side) {
  if (image_side == 0) throw InvalidParameter("image side must be >= 1");
  int k = 1;
  while (k < 63 && (std::size_t{1} << k) <= image_side) ++k;
  return k;
}

GridSpec grid_spec(std::size_t image_side, int layers, const DoGParams& params) {
  params.validate();
  if (image_side == 0) throw InvalidParameter("image side must be >= 1");
  if (layers < 1) throw InvalidParameter("layer count must be >= 1, got " + std::to_string(layers));
  const int kmax = max_layers(image_side);
  if (layers > kmax)
    throw InvalidParameter("layer count " + std::to_string(layers) + " too large for image side " +
                           std::to_string(image_side) + "; maximal admissible K is " + std::to_string(kmax));

  GridSpec grid;
  grid.image_side = image_side;
  grid.layers = layers;
  for (int k = 0; k < layers; ++k) {
    const std::size_t first = sample_position(k, 0, layers);
    const std::size_t step = std::size_t{1} << (layers - 1 - k);
    const std::size_t count = first < image_side ? (image_side - 1 - first) / step + 1 : 0;
    grid.layer_offsets.push_back(grid.total_cells);
    grid.layer_sides.push_back(count);
    grid.half_widths.push_back(kernel_half_width(k, params, layers));
    grid.total_cells += count * count;
  }
  return grid;
}

}  // namespace retina
