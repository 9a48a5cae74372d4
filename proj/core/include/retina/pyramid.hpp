#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace retina {

/// Center/surround parameters shared by every layer of the DoG filter bank.
struct DoGParams {
  double center_weight = 1.0;
  double surround_weight = 1.0;
  /// sigma_center / sigma_surround, the same at every scale.
  double sigma_ratio = 1.0 / 3.0;
  /// Center sigma of the finest layer (k = K-1), in pixels.
  double finest_center_sigma = 0.5;

  /// Throws InvalidParameter unless w_c > 0, w_s >= 0, 0 < ratio < 1, sigma > 0.
  void validate() const;

  friend bool operator==(const DoGParams&, const DoGParams&) = default;
};

/// What the coarsest layer (k = 0) analyses with.
enum class CoarseFilter : std::uint8_t {
  scaling,    ///< low-pass Gaussian w_c * G_{sigma_c}: makes the bank a frame
  band_pass,  ///< plain DoG like every other layer: constants are lost
};

/// Dense square tap array of side 2M+1, indexed by offset from the center.
struct FilterKernel {
  int scale = 0;
  int half_width = 0;
  std::vector<double> taps;

  int side() const noexcept { return 2 * half_width + 1; }
  /// Tap at offset (a, b) from the center, |a|, |b| <= half_width.
  double at(int a, int b) const noexcept {
    return taps[static_cast<std::size_t>(a + half_width) * side() + static_cast<std::size_t>(b + half_width)];
  }
  double sum() const noexcept;
  double l1_norm() const noexcept;
};

/// Sampled 2D Gaussian renormalized to unit sum.
FilterKernel gaussian_kernel(double sigma, int half_width);

/// Unit-sum 1D Gaussian profile on [-half_width, half_width]; the 2D kernel is its outer product.
std::vector<double> gaussian_profile(double sigma, int half_width);

double center_sigma(int k, const DoGParams& params, int layers);
double surround_sigma(int k, const DoGParams& params, int layers);
/// round_half_up(3 * surround sigma).
int kernel_half_width(int k, const DoGParams& params, int layers);

/// DoG_k, or the scaling function w_c * G_{sigma_c} at k = 0 when `coarse` is scaling.
FilterKernel dog_kernel(int k, const DoGParams& params, int layers,
                        CoarseFilter coarse = CoarseFilter::scaling);

/// Separable form of a layer filter: center_weight * c (x) c - surround_weight * s (x) s.
/// Taps computed through this match dog_kernel() bit for bit.
struct SeparableDoG {
  int half_width = 0;
  double center_weight = 0.0;
  double surround_weight = 0.0;
  std::vector<double> center;
  std::vector<double> surround;

  double at(int a, int b) const noexcept {
    const auto ia = static_cast<std::size_t>(a + half_width);
    const auto ib = static_cast<std::size_t>(b + half_width);
    double v = center_weight * (center[ia] * center[ib]);
    if (surround_weight != 0.0) v -= surround_weight * (surround[ia] * surround[ib]);
    return v;
  }
};

SeparableDoG separable_dog(int k, const DoGParams& params, int layers,
                           CoarseFilter coarse = CoarseFilter::scaling);

/// u_k(i) = floor(2^{K-k-2}) + 2^{K-k-1} * i.
std::size_t sample_position(int k, std::size_t i, int layers);

/// Largest K with 2^{K-1} <= N.
int max_layers(std::size_t image_side);

/// Geometry of the dyadic grid for one image size.
struct GridSpec {
  std::size_t image_side = 0;
  int layers = 0;
  std::vector<std::size_t> layer_sides;    ///< N_k
  std::vector<int> half_widths;            ///< M_k
  std::vector<std::size_t> layer_offsets;  ///< first cell index of each layer
  std::size_t total_cells = 0;

  std::size_t stride(int k) const noexcept { return std::size_t{1} << (layers - 1 - k); }
  std::size_t offset(int k) const noexcept {
    return layers - k - 2 >= 0 ? std::size_t{1} << (layers - k - 2) : 0;
  }
  /// Row weight of layer k in the analysis operator: the sampling stride 2^{K-1-k}.
  /// Compensates the 4^{K-1-k} energy lost to undersampling so all layers carry comparable weight.
  double layer_weight(int k) const noexcept { return static_cast<double>(stride(k)); }
  std::size_t cells_in_layer(int k) const noexcept {
    return layer_sides[static_cast<std::size_t>(k)] * layer_sides[static_cast<std::size_t>(k)];
  }
};

GridSpec grid_spec(std::size_t image_side, int layers, const DoGParams& params);

}  // namespace retina
