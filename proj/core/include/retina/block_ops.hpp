#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "retina/block_store.hpp"

namespace retina {

/// Rectangular window of a store, aligned to its block grid.
struct BlockView {
  BlockMatrixStore store;
  std::size_t row0 = 0;  ///< first block row
  std::size_t col0 = 0;  ///< first block column
  std::size_t block_rows = 0;
  std::size_t block_cols = 0;

  /// Whole-store view.
  static BlockView of(const BlockMatrixStore& store);
  BlockView sub(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const;

  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t height(std::size_t r) const { return store.block_height(row0 + r); }
  std::size_t width(std::size_t c) const { return store.block_width(col0 + c); }
  Block read(std::size_t r, std::size_t c) const { return store.read_block(row0 + r, col0 + c); }
  void write(std::size_t r, std::size_t c, const Block& b) const {
    auto s = store;
    s.write_block(row0 + r, col0 + c, b);
  }
};

/// Which output blocks block_gemm computes.
enum class OutputShape {
  full,
  /// Result is known to be symmetric: compute blocks on or below the diagonal and mirror them.
  symmetric,
};

/// C := alpha * A * B + beta * C, blockwise. Output blocks are independent and run in
/// parallel; each accumulates its k-products in ascending k, so results do not depend on
/// the worker count. alpha == 0 && beta == 1 touches nothing.
void block_gemm(const BlockView& a, const BlockView& b, const BlockView& c, double alpha, double beta,
                OutputShape shape = OutputShape::full);

/// out := alpha * A + beta * B, elementwise.
void block_axpby(const BlockView& a, const BlockView& b, const BlockView& out, double alpha, double beta);
void block_copy(const BlockView& src, const BlockView& dst);
void block_transpose(const BlockView& src, const BlockView& dst);
void block_scale(const BlockView& m, double factor);

/// A + B and A - B into new stores at `directory`.
BlockMatrixStore block_add(const BlockMatrixStore& a, const BlockMatrixStore& b, const std::filesystem::path& directory);
BlockMatrixStore block_sub(const BlockMatrixStore& a, const BlockMatrixStore& b, const std::filesystem::path& directory);
/// alpha * A * B into a new store at `directory`.
BlockMatrixStore block_multiply(const BlockMatrixStore& a, const BlockMatrixStore& b,
                                const std::filesystem::path& directory, double alpha = 1.0);

/// y = M x with M streamed block by block.
std::vector<double> block_gemv(const BlockView& m, std::span<const double> x);

double frobenius_norm(const BlockView& m);
/// ||A * B - I||_F without storing the product.
double identity_residual(const BlockView& a, const BlockView& b);

struct InvertOptions {
  /// Where intermediate stores go; defaults to "<output>.scratch".
  std::filesystem::path scratch;
  /// Use C A^{-1} = (A^{-1} B)^T and mirror symmetric results. Valid for symmetric input.
  bool symmetric = true;
};

/// Inverse of a square SPD store through the 2x2 block inversion formula with Schur
/// complement Q = D - C A^{-1} B, recursing on A and Q down to single blocks, which are
/// inverted in core through a Cholesky factorization. The split falls at block
/// ceil(n_blocks / 2). Throws NumericalError when a leaf is not positive definite.
BlockMatrixStore invert_recursive(const BlockMatrixStore& m, const std::filesystem::path& output,
                                  const InvertOptions& options = {});

/// In-core inverse of a small SPD block (the recursion's base case).
Block invert_spd_block(const Block& m, std::size_t global_offset = 0);

}  // namespace retina
