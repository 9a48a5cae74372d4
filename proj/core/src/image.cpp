#include "retina/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "retina/errors.hpp"

namespace retina {

Image::Image(std::size_t side, double fill) : side_(side), samples_(side * side, fill) {}

Image::Image(std::size_t side, std::vector<double> samples) : side_(side), samples_(std::move(samples)) {
  if (samples_.size() != side * side)
    throw InvalidParameter("image of side " + std::to_string(side) + " needs " + std::to_string(side * side) +
                           " samples, got " + std::to_string(samples_.size()));
}

namespace {

class PgmCursor {
 public:
  explicit PgmCursor(const std::string& bytes) : bytes_(bytes) {}

  std::size_t header_integer() {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t value = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (value > (std::size_t{1} << 31)) throw FormatError("PGM header value too large", start);
      ++pos_;
    }
    if (pos_ == start) throw FormatError("expected integer in PGM header", start);
    return value;
  }

  void single_whitespace() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_])))
      throw FormatError("expected whitespace before PGM raster", pos_);
    ++pos_;
  }

  std::size_t position() const noexcept { return pos_; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 2;
};

}  // namespace

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("cannot open image " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
    throw FormatError(path.string() + ": not a binary PGM (P5)", 0);

  PgmCursor cursor(bytes);
  const std::size_t width = cursor.header_integer();
  const std::size_t height = cursor.header_integer();
  const std::size_t maxval = cursor.header_integer();
  cursor.single_whitespace();
  if (maxval == 0 || maxval > 65535) throw FormatError(path.string() + ": invalid maxval", cursor.position());
  if (maxval > 255) throw UnsupportedInput(path.string() + ": only 8-bit PGM images are supported");
  if (width == 0 || height == 0) throw FormatError(path.string() + ": empty image", cursor.position());
  if (width != height)
    throw UnsupportedInput(path.string() + ": image is " + std::to_string(width) + "x" + std::to_string(height) +
                           "; only square images are supported");
  const std::size_t need = width * height;
  if (bytes.size() - cursor.position() < need)
    throw FormatError(path.string() + ": truncated raster", bytes.size());

  std::vector<double> samples(need);
  for (std::size_t i = 0; i < need; ++i)
    samples[i] = static_cast<double>(static_cast<unsigned char>(bytes[cursor.position() + i]));
  return Image(width, std::move(samples));
}

void write_pgm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StorageError("cannot create image " + path.string());
  out << "P5\n" << image.side() << ' ' << image.side() << "\n255\n";
  std::string raster(image.size(), '\0');
  const auto samples = image.samples();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double v = std::clamp(std::round(samples[i]), 0.0, 255.0);
    raster[i] = static_cast<char>(static_cast<unsigned char>(std::isfinite(v) ? v : 0.0));
  }
  out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (!out) throw StorageError("failed writing image " + path.string());
}

double psnr(std::span<const double> reference, std::span<const double> test, double peak) {
  if (reference.size() != test.size() || reference.empty())
    throw InvalidParameter("PSNR needs equal, non-empty sample counts (" + std::to_string(reference.size()) +
                           " vs " + std::to_string(test.size()) + ")");
  double sse = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d = reference[i] - test[i];
    sse += d * d;
  }
  if (sse == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = sse / static_cast<double>(reference.size());
  return 10.0 * std::log10(peak * peak / mse);
}

double psnr(const Image& reference, const Image& test, double peak) {
  if (reference.side() != test.side())
    throw InvalidParameter("PSNR dimension mismatch: " + std::to_string(reference.side()) + " vs " +
                           std::to_string(test.side()));
  return psnr(reference.samples(), test.samples(), peak);
}

}  // namespace retina
