#pragma once

// Independent reference computations used by the tests. Nothing here calls into the
// library's kernel or operator code; they are written from the defining formulas.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

/// Sampled exp(-(x^2+y^2)/(2 s^2)) over [-m, m]^2, divided by its sum. Row-major (2m+1)^2.
inline std::vector<double> gaussian2d(double sigma, int m) {
  const int side = 2 * m + 1;
  std::vector<double> g(static_cast<std::size_t>(side * side));
  double total = 0.0;
  for (int a = -m; a <= m; ++a)
    for (int b = -m; b <= m; ++b) {
      const double v = std::exp(-(a * a + b * b) / (2.0 * sigma * sigma)) / (2.0 * M_PI * sigma * sigma);
      g[static_cast<std::size_t>((a + m) * side + (b + m))] = v;
      total += v;
    }
  for (double& v : g) v /= total;
  return g;
}

struct Layer {
  double sigma_c = 0.0;
  double sigma_s = 0.0;
  int m = 0;
  std::size_t stride = 1;
  std::size_t first = 0;
  std::size_t count = 0;
  std::vector<double> taps;  // weighted by the stride, side 2m+1
};

/// Geometry and taps for every layer with default-style parameters.
inline std::vector<Layer> layers(std::size_t n, int k_total, double wc = 1.0, double ws = 1.0, double ratio = 1.0 / 3.0,
                                 double finest = 0.5, bool scaling = true) {
  std::vector<Layer> out;
  for (int k = 0; k < k_total; ++k) {
    Layer l;
    l.sigma_c = finest * std::pow(2.0, k_total - 1 - k);
    l.sigma_s = l.sigma_c / ratio;
    l.m = static_cast<int>(std::floor(3.0 * l.sigma_s + 0.5));
    if (l.m < 1) l.m = 1;
    l.stride = std::size_t{1} << (k_total - 1 - k);
    l.first = k_total - k - 2 >= 0 ? std::size_t{1} << (k_total - k - 2) : 0;
    for (std::size_t u = l.first; u < n; u += l.stride) ++l.count;
    const auto gc = gaussian2d(l.sigma_c, l.m);
    const auto gs = gaussian2d(l.sigma_s, l.m);
    l.taps.resize(gc.size());
    for (std::size_t t = 0; t < gc.size(); ++t) {
      double v = wc * gc[t];
      if (!(k == 0 && scaling)) v -= ws * gs[t];
      l.taps[t] = static_cast<double>(l.stride) * v;
    }
    out.push_back(std::move(l));
  }
  return out;
}

/// Nested-loop evaluation of every coefficient c_kij = sum_xy f(x,y) DoG_k(u_k(i)-x, u_k(j)-y),
/// zero outside the image (or wrapped when periodic).
inline std::vector<double> convolve(const std::vector<double>& f, std::size_t n, int k_total, bool periodic = false) {
  std::vector<double> c;
  for (const Layer& l : layers(n, k_total)) {
    const int side = 2 * l.m + 1;
    for (std::size_t i = 0; i < l.count; ++i)
      for (std::size_t j = 0; j < l.count; ++j) {
        const long ui = static_cast<long>(l.first + i * l.stride);
        const long uj = static_cast<long>(l.first + j * l.stride);
        double s = 0.0;
        for (int a = -l.m; a <= l.m; ++a)
          for (int b = -l.m; b <= l.m; ++b) {
            long x = ui - a, y = uj - b;
            if (periodic) {
              x = ((x % static_cast<long>(n)) + static_cast<long>(n)) % static_cast<long>(n);
              y = ((y % static_cast<long>(n)) + static_cast<long>(n)) % static_cast<long>(n);
            } else if (x < 0 || y < 0 || x >= static_cast<long>(n) || y >= static_cast<long>(n)) {
              continue;
            }
            s += f[static_cast<std::size_t>(x) * n + static_cast<std::size_t>(y)] *
                 l.taps[static_cast<std::size_t>((a + l.m) * side + (b + l.m))];
          }
        c.push_back(s);
      }
  }
  return c;
}

/// Dense Phi, built column by column by convolving unit impulses.
inline Eigen::MatrixXd dense_phi(std::size_t n, int k_total) {
  std::vector<double> f(n * n, 0.0);
  std::vector<std::vector<double>> cols;
  for (std::size_t a = 0; a < n * n; ++a) {
    f[a] = 1.0;
    cols.push_back(convolve(f, n, k_total));
    f[a] = 0.0;
  }
  Eigen::MatrixXd phi(static_cast<Eigen::Index>(cols[0].size()), static_cast<Eigen::Index>(n * n));
  for (std::size_t a = 0; a < cols.size(); ++a)
    for (std::size_t p = 0; p < cols[a].size(); ++p) phi(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(a)) = cols[a][p];
  return phi;
}

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

/// Gram of a random tall matrix plus a ridge: symmetric positive definite.
inline Eigen::MatrixXd random_spd(std::size_t n, std::uint64_t seed, double ridge) {
  const auto v = random_vector(2 * n * n, seed, -1.0, 1.0);
  Eigen::Map<const Eigen::MatrixXd> g(v.data(), static_cast<Eigen::Index>(2 * n), static_cast<Eigen::Index>(n));
  Eigen::MatrixXd m = g.transpose() * g;
  m.diagonal().array() += ridge;
  return m;
}

inline double psnr(const std::vector<double>& a, const std::vector<double>& b) {
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mse += (a[i] - b[i]) * (a[i] - b[i]);
  mse /= static_cast<double>(a.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

/// Fresh empty directory under the system temp path, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    path = std::filesystem::temp_directory_path() / ("retina-test-" + tag + "-" + std::to_string(rng()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace oracle
