#include "retina/analysis.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "retina/errors.hpp"
#include "retina/parallel.hpp"

namespace retina {

const char* to_string(Boundary boundary) noexcept {
  switch (boundary) {
    case Boundary::zero:
      return "zero";
    case Boundary::periodic:
      return "periodic";
  }
  return "unknown";
}

std::size_t cell_index(int k, std::size_t i, std::size_t j, const GridSpec& grid) {
  if (k < 0 || k >= grid.layers) throw InvalidParameter("cell layer " + std::to_string(k) + " outside the grid");
  const std::size_t side = grid.layer_sides[static_cast<std::size_t>(k)];
  if (i >= side || j >= side)
    throw InvalidParameter("cell (" + std::to_string(k) + ", " + std::to_string(i) + ", " + std::to_string(j) +
                           ") outside layer of side " + std::to_string(side));
  return grid.layer_offsets[static_cast<std::size_t>(k)] + i * side + j;
}

Cell cell_at(std::size_t p, const GridSpec& grid) {
  if (p >= grid.total_cells)
    throw InvalidParameter("cell index " + std::to_string(p) + " >= total cells " + std::to_string(grid.total_cells));
  const auto next = std::upper_bound(grid.layer_offsets.begin(), grid.layer_offsets.end(), p);
  const auto k = static_cast<int>(std::distance(grid.layer_offsets.begin(), next)) - 1;
  const std::size_t local = p - grid.layer_offsets[static_cast<std::size_t>(k)];
  const std::size_t side = grid.layer_sides[static_cast<std::size_t>(k)];
  return Cell{k, local / side, local % side};
}

AnalysisOperator::SparseLine AnalysisOperator::row(std::size_t p) const {
  if (p >= rows()) throw InvalidParameter("row " + std::to_string(p) + " out of range");
  const std::size_t b = row_offsets_[p];
  const std::size_t e = row_offsets_[p + 1];
  return {std::span(row_columns_).subspan(b, e - b), std::span(row_values_).subspan(b, e - b)};
}

AnalysisOperator::SparseLine AnalysisOperator::column(std::size_t a) const {
  if (a >= cols()) throw InvalidParameter("column " + std::to_string(a) + " out of range");
  const std::size_t b = col_offsets_[a];
  const std::size_t e = col_offsets_[a + 1];
  return {std::span(col_rows_).subspan(b, e - b), std::span(col_values_).subspan(b, e - b)};
}

namespace {

constexpr std::size_t kChunk = 256;

std::size_t chunk_count(std::size_t n) { return (n + kChunk - 1) / kChunk; }

}  // namespace

std::vector<double> AnalysisOperator::forward(std::span<const double> image) const {
  if (image.size() != cols())
    throw InvalidParameter("forward: image has " + std::to_string(image.size()) + " samples, operator expects " +
                           std::to_string(cols()));
  std::vector<double> out(rows(), 0.0);
  parallel_for(chunk_count(rows()), [&](std::size_t chunk) {
    const std::size_t end = std::min(rows(), (chunk + 1) * kChunk);
    for (std::size_t p = chunk * kChunk; p < end; ++p) {
      double acc = 0.0;
      for (std::size_t n = row_offsets_[p]; n < row_offsets_[p + 1]; ++n) acc += row_values_[n] * image[row_columns_[n]];
      out[p] = acc;
    }
  });
  return out;
}

std::vector<double> AnalysisOperator::forward(const Image& image) const {
  if (image.side() != grid_.image_side)
    throw InvalidParameter("forward: image side " + std::to_string(image.side()) + " does not match grid side " +
                           std::to_string(grid_.image_side));
  return forward(image.samples());
}

Image AnalysisOperator::adjoint(std::span<const double> coefficients) const {
  if (coefficients.size() != rows())
    throw InvalidParameter("adjoint: coefficient vector has length " + std::to_string(coefficients.size()) +
                           ", operator has " + std::to_string(rows()) + " rows");
  Image out(grid_.image_side);
  auto samples = out.samples();
  parallel_for(chunk_count(cols()), [&](std::size_t chunk) {
    const std::size_t end = std::min(cols(), (chunk + 1) * kChunk);
    for (std::size_t a = chunk * kChunk; a < end; ++a) {
      double acc = 0.0;
      for (std::size_t n = col_offsets_[a]; n < col_offsets_[a + 1]; ++n) acc += col_values_[n] * coefficients[col_rows_[n]];
      samples[a] = acc;
    }
  });
  return out;
}

namespace {

/// Taps of one layer along one axis, addressed through a per-row list of pixel positions.
struct LayerFilter {
  double weight = 1.0;
  SeparableDoG dog;
  // Periodic only: profiles folded modulo N and their surround counterpart.
  std::vector<double> center_folded;
  std::vector<double> surround_folded;
};

std::vector<double> fold(const std::vector<double>& profile, int half_width, std::size_t n) {
  std::vector<double> folded(n, 0.0);
  if (profile.empty()) return folded;
  const auto in = static_cast<long long>(n);
  for (int a = -half_width; a <= half_width; ++a) {
    const auto r = static_cast<std::size_t>(((a % in) + in) % in);
    folded[r] += profile[static_cast<std::size_t>(a + half_width)];
  }
  return folded;
}

struct AxisTap {
  std::uint32_t pixel;
  int index;  ///< offset u - x for zero padding, (u - x) mod N for periodic
};

std::vector<AxisTap> axis_taps(std::size_t u, int half_width, std::size_t n, Boundary boundary) {
  std::vector<AxisTap> taps;
  const auto m = static_cast<long long>(half_width);
  const auto su = static_cast<long long>(u);
  const auto sn = static_cast<long long>(n);
  if (boundary == Boundary::zero) {
    const long long lo = std::max(0LL, su - m);
    const long long hi = std::min(sn - 1, su + m);
    for (long long x = lo; x <= hi; ++x) taps.push_back({static_cast<std::uint32_t>(x), static_cast<int>(su - x)});
  } else {
    for (long long x = 0; x < sn; ++x) {
      const long long r = ((su - x) % sn + sn) % sn;
      if (2 * m + 1 >= sn || r <= m || r >= sn - m) taps.push_back({static_cast<std::uint32_t>(x), static_cast<int>(r)});
    }
  }
  return taps;
}

}  // namespace

AnalysisOperator build_analysis_operator(const GridSpec& grid, const DoGParams& params, const OperatorOptions& options) {
  params.validate();
  if (grid.layers < 1 || grid.image_side == 0) throw InvalidParameter("analysis operator needs a non-empty grid");
  const std::size_t n = grid.image_side;
  if (n * n > std::size_t{0xFFFFFFFF} || grid.total_cells > std::size_t{0xFFFFFFFF})
    throw InvalidParameter("image too large for 32-bit operator indices");

  std::vector<LayerFilter> filters(static_cast<std::size_t>(grid.layers));
  for (int k = 0; k < grid.layers; ++k) {
    auto& f = filters[static_cast<std::size_t>(k)];
    f.weight = grid.layer_weight(k);
    f.dog = separable_dog(k, params, grid.layers, options.coarse);
    if (options.boundary == Boundary::periodic) {
      f.center_folded = fold(f.dog.center, f.dog.half_width, n);
      f.surround_folded = fold(f.dog.surround, f.dog.half_width, n);
    }
  }

  // Per layer, the axis tap lists depend only on the sample position, so they are shared by rows and columns.
  std::vector<std::vector<std::vector<AxisTap>>> axes(static_cast<std::size_t>(grid.layers));
  for (int k = 0; k < grid.layers; ++k) {
    auto& layer_axes = axes[static_cast<std::size_t>(k)];
    for (std::size_t i = 0; i < grid.layer_sides[static_cast<std::size_t>(k)]; ++i)
      layer_axes.push_back(
          axis_taps(sample_position(k, i, grid.layers), filters[static_cast<std::size_t>(k)].dog.half_width, n, options.boundary));
  }

  AnalysisOperator op;
  op.grid_ = grid;
  op.params_ = params;
  op.options_ = options;

  const std::size_t rows = grid.total_cells;
  op.row_offsets_.assign(rows + 1, 0);
  for (std::size_t p = 0; p < rows; ++p) {
    const Cell cell = cell_at(p, grid);
    const auto& layer_axes = axes[static_cast<std::size_t>(cell.layer)];
    op.row_offsets_[p + 1] = op.row_offsets_[p] + layer_axes[cell.i].size() * layer_axes[cell.j].size();
  }
  const std::size_t nnz = op.row_offsets_.back();
  const std::size_t bytes = 2 * nnz * (sizeof(double) + sizeof(std::uint32_t)) + (rows + n * n + 2) * sizeof(std::size_t);
  if (bytes > options.memory_cap_bytes)
    throw ResourceError("analysis operator needs about " + std::to_string(bytes) + " bytes, above the cap of " +
                        std::to_string(options.memory_cap_bytes) + " bytes");

  op.row_columns_.resize(nnz);
  op.row_values_.resize(nnz);
  parallel_for(chunk_count(rows), [&](std::size_t chunk) {
    const std::size_t end = std::min(rows, (chunk + 1) * kChunk);
    for (std::size_t p = chunk * kChunk; p < end; ++p) {
      const Cell cell = cell_at(p, grid);
      const auto& f = filters[static_cast<std::size_t>(cell.layer)];
      const auto& xs = axes[static_cast<std::size_t>(cell.layer)][cell.i];
      const auto& ys = axes[static_cast<std::size_t>(cell.layer)][cell.j];
      std::size_t at = op.row_offsets_[p];
      for (const AxisTap& x : xs) {
        for (const AxisTap& y : ys) {
          double tap;
          if (options.boundary == Boundary::zero) {
            tap = f.dog.at(x.index, y.index);
          } else {
            const auto ix = static_cast<std::size_t>(x.index);
            const auto iy = static_cast<std::size_t>(y.index);
            tap = f.dog.center_weight * (f.center_folded[ix] * f.center_folded[iy]);
            if (f.dog.surround_weight != 0.0) tap -= f.dog.surround_weight * (f.surround_folded[ix] * f.surround_folded[iy]);
          }
          op.row_columns_[at] = static_cast<std::uint32_t>(x.pixel * n + y.pixel);
          op.row_values_[at] = f.weight * tap;
          ++at;
        }
      }
    }
  });

  // Transpose (rows visited in ascending order, so each column lists its cells ascending).
  op.col_offsets_.assign(n * n + 1, 0);
  for (std::uint32_t c : op.row_columns_) ++op.col_offsets_[c + 1];
  std::partial_sum(op.col_offsets_.begin(), op.col_offsets_.end(), op.col_offsets_.begin());
  op.col_rows_.resize(nnz);
  op.col_values_.resize(nnz);
  std::vector<std::size_t> cursor(op.col_offsets_.begin(), op.col_offsets_.end() - 1);
  for (std::size_t p = 0; p < rows; ++p) {
    for (std::size_t e = op.row_offsets_[p]; e < op.row_offsets_[p + 1]; ++e) {
      const std::size_t slot = cursor[op.row_columns_[e]]++;
      op.col_rows_[slot] = static_cast<std::uint32_t>(p);
      op.col_values_[slot] = op.row_values_[e];
    }
  }
  return op;
}

}  // namespace retina
