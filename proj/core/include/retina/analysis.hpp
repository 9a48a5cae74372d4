#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "retina/image.hpp"
#include "retina/pyramid.hpp"

namespace retina {

/// How filters see pixels outside [0, N)^2.
enum class Boundary : std::uint8_t {
  zero = 0,      ///< outside pixels are zero; border rows have fewer nonzeros
  periodic = 1,  ///< the image tiles the plane; taps wrap modulo N
};

const char* to_string(Boundary boundary) noexcept;

struct OperatorOptions {
  Boundary boundary = Boundary::zero;
  CoarseFilter coarse = CoarseFilter::scaling;
  /// Upper bound on the operator's in-memory footprint (both CSR copies).
  std::size_t memory_cap_bytes = std::size_t{6} << 30;
};

struct Cell {
  int layer = 0;
  std::size_t i = 0;
  std::size_t j = 0;

  friend bool operator==(const Cell&, const Cell&) = default;
};

/// Row of the analysis operator for cell (k, i, j): layer offset + i * N_k + j.
std::size_t cell_index(int k, std::size_t i, std::size_t j, const GridSpec& grid);
/// Inverse of cell_index.
Cell cell_at(std::size_t p, const GridSpec& grid);

/// Sparse matrix Phi (total_cells x N^2). Row p holds layer_weight(k) * DoG_k centered on
/// (u_k(i), u_k(j)); column x * N + y is pixel (x, y). Immutable after construction.
class AnalysisOperator {
 public:
  struct SparseLine {
    std::span<const std::uint32_t> indices;
    std::span<const double> values;
  };

  const GridSpec& grid() const noexcept { return grid_; }
  const DoGParams& params() const noexcept { return params_; }
  Boundary boundary() const noexcept { return options_.boundary; }
  CoarseFilter coarse() const noexcept { return options_.coarse; }

  std::size_t rows() const noexcept { return grid_.total_cells; }
  std::size_t cols() const noexcept { return grid_.image_side * grid_.image_side; }
  std::size_t nonzeros() const noexcept { return row_values_.size(); }

  /// Row p: pixel columns in ascending order with their weights.
  SparseLine row(std::size_t p) const;
  /// Column a of Phi (row a of Phi*): cell indices in ascending order.
  SparseLine column(std::size_t a) const;

  /// c = Phi f.
  std::vector<double> forward(std::span<const double> image) const;
  std::vector<double> forward(const Image& image) const;
  /// Phi* c, returned as an image.
  Image adjoint(std::span<const double> coefficients) const;

 private:
  friend AnalysisOperator build_analysis_operator(const GridSpec&, const DoGParams&, const OperatorOptions&);

  GridSpec grid_;
  DoGParams params_;
  OperatorOptions options_;
  std::vector<std::size_t> row_offsets_;
  std::vector<std::uint32_t> row_columns_;
  std::vector<double> row_values_;
  std::vector<std::size_t> col_offsets_;
  std::vector<std::uint32_t> col_rows_;
  std::vector<double> col_values_;
};

/// Builds Phi from the grid. Throws ResourceError when the estimated footprint exceeds the cap.
AnalysisOperator build_analysis_operator(const GridSpec& grid, const DoGParams& params,
                                         const OperatorOptions& options = {});

}  // namespace retina
