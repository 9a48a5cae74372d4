#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace retina {

/// Square grayscale image. Samples are row-major: pixel (x, y) lives at x * side + y,
/// which is also the column index of that pixel in the analysis operator.
class Image {
 public:
  Image() = default;
  explicit Image(std::size_t side, double fill = 0.0);
  Image(std::size_t side, std::vector<double> samples);

  std::size_t side() const noexcept { return side_; }
  std::size_t size() const noexcept { return samples_.size(); }

  double& operator()(std::size_t x, std::size_t y) noexcept { return samples_[x * side_ + y]; }
  double operator()(std::size_t x, std::size_t y) const noexcept { return samples_[x * side_ + y]; }

  std::span<double> samples() noexcept { return samples_; }
  std::span<const double> samples() const noexcept { return samples_; }
  std::vector<double>& vector() noexcept { return samples_; }

 private:
  std::size_t side_ = 0;
  std::vector<double> samples_;
};

/// Reads a binary (P5) 8-bit PGM. Non-square images raise UnsupportedInput.
Image read_pgm(const std::filesystem::path& path);

/// Writes samples rounded and clamped to [0, 255] as binary 8-bit PGM.
void write_pgm(const std::filesystem::path& path, const Image& image);

/// 10 log10(peak^2 / MSE); +infinity for identical inputs.
double psnr(std::span<const double> reference, std::span<const double> test, double peak = 255.0);
double psnr(const Image& reference, const Image& test, double peak = 255.0);

}  // namespace retina
