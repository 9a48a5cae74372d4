#include "retina/block_ops.hpp"

#include <cblas.h>

#include <atomic>
#include <cmath>
#include <mutex>
#include <string>

#include "retina/errors.hpp"
#include "retina/parallel.hpp"

namespace retina {

namespace {

// Parallelism lives at the block level; BLAS must stay single-threaded so per-block results are reproducible.
void pin_blas_threads() {
  static std::once_flag once;
  std::call_once(once, [] { openblas_set_num_threads(1); });
}

std::size_t extent(const BlockMatrixStore& s, std::size_t first, std::size_t count, bool rows) {
  std::size_t total = 0;
  for (std::size_t i = 0; i < count; ++i) total += rows ? s.block_height(first + i) : s.block_width(first + i);
  return total;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidParameter(what);
}

void check_same_shape(const BlockView& a, const BlockView& b, const char* op) {
  require(a.block_rows == b.block_rows && a.block_cols == b.block_cols, std::string(op) + ": block grids differ");
  for (std::size_t r = 0; r < a.block_rows; ++r)
    require(a.height(r) == b.height(r), std::string(op) + ": block heights differ");
  for (std::size_t c = 0; c < a.block_cols; ++c) require(a.width(c) == b.width(c), std::string(op) + ": block widths differ");
}

/// acc += alpha * a * b
void multiply_into(Block& acc, const Block& a, const Block& b, double alpha) {
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(a.rows()), static_cast<int>(b.cols()),
              static_cast<int>(a.cols()), alpha, a.data(), static_cast<int>(a.cols()), b.data(), static_cast<int>(b.cols()),
              1.0, acc.data(), static_cast<int>(acc.cols()));
}

}  // namespace

BlockView BlockView::of(const BlockMatrixStore& store) { return {store, 0, 0, store.block_rows(), store.block_cols()}; }

BlockView BlockView::sub(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const {
  require(r0 + nr <= block_rows && c0 + nc <= block_cols, "sub-view exceeds parent view");
  return {store, row0 + r0, col0 + c0, nr, nc};
}

std::size_t BlockView::rows() const { return extent(store, row0, block_rows, true); }
std::size_t BlockView::cols() const { return extent(store, col0, block_cols, false); }

void block_gemm(const BlockView& a, const BlockView& b, const BlockView& c, double alpha, double beta, OutputShape shape) {
  require(a.block_cols == b.block_rows && c.block_rows == a.block_rows && c.block_cols == b.block_cols,
          "block_gemm: block grids are not conformable (" + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
              " * " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + " -> " + std::to_string(c.rows()) +
              "x" + std::to_string(c.cols()) + ")");
  for (std::size_t k = 0; k < a.block_cols; ++k) require(a.width(k) == b.height(k), "block_gemm: inner block sizes differ");
  for (std::size_t r = 0; r < c.block_rows; ++r) require(c.height(r) == a.height(r), "block_gemm: row block sizes differ");
  for (std::size_t col = 0; col < c.block_cols; ++col) require(c.width(col) == b.width(col), "block_gemm: column block sizes differ");
  if (shape == OutputShape::symmetric) require(c.block_rows == c.block_cols, "block_gemm: symmetric output must be square");
  if (alpha == 0.0 && beta == 1.0) return;
  pin_blas_threads();

  std::vector<std::pair<std::size_t, std::size_t>> work;
  for (std::size_t r = 0; r < c.block_rows; ++r)
    for (std::size_t col = 0; col < (shape == OutputShape::symmetric ? r + 1 : c.block_cols); ++col) work.emplace_back(r, col);

  parallel_for(work.size(), [&](std::size_t w) {
    const auto [r, col] = work[w];
    Block acc;
    if (beta == 0.0) {
      acc = Block(c.height(r), c.width(col));
    } else {
      acc = c.read(r, col);
      if (beta != 1.0)
        for (double& v : acc.values()) v *= beta;
    }
    if (alpha != 0.0) {
      for (std::size_t k = 0; k < a.block_cols; ++k) {
        const Block lhs = a.read(r, k);
        const Block rhs = b.read(k, col);
        multiply_into(acc, lhs, rhs, alpha);
      }
    }
    if (shape == OutputShape::symmetric && r == col) {
      // Rounding in the kernel can leave a diagonal block slightly asymmetric; average it out.
      for (std::size_t i = 0; i < acc.rows(); ++i)
        for (std::size_t j = 0; j < i; ++j) acc(i, j) = acc(j, i) = 0.5 * (acc(i, j) + acc(j, i));
    }
    c.write(r, col, acc);
    if (shape == OutputShape::symmetric && r != col) c.write(col, r, acc.transposed());
  });
  c.store.sync();
}

void block_axpby(const BlockView& a, const BlockView& b, const BlockView& out, double alpha, double beta) {
  check_same_shape(a, b, "block_axpby");
  check_same_shape(a, out, "block_axpby");
  parallel_for(out.block_rows * out.block_cols, [&](std::size_t w) {
    const std::size_t r = w / out.block_cols;
    const std::size_t c = w % out.block_cols;
    Block x = a.read(r, c);
    const Block y = b.read(r, c);
    auto xv = x.values();
    const auto yv = y.values();
    for (std::size_t i = 0; i < xv.size(); ++i) xv[i] = alpha * xv[i] + beta * yv[i];
    out.write(r, c, x);
  });
  out.store.sync();
}

void block_copy(const BlockView& src, const BlockView& dst) {
  check_same_shape(src, dst, "block_copy");
  parallel_for(dst.block_rows * dst.block_cols, [&](std::size_t w) {
    const std::size_t r = w / dst.block_cols;
    const std::size_t c = w % dst.block_cols;
    dst.write(r, c, src.read(r, c));
  });
  dst.store.sync();
}

void block_transpose(const BlockView& src, const BlockView& dst) {
  require(src.block_rows == dst.block_cols && src.block_cols == dst.block_rows, "block_transpose: block grids differ");
  for (std::size_t r = 0; r < src.block_rows; ++r) require(src.height(r) == dst.width(r), "block_transpose: sizes differ");
  for (std::size_t c = 0; c < src.block_cols; ++c) require(src.width(c) == dst.height(c), "block_transpose: sizes differ");
  parallel_for(src.block_rows * src.block_cols, [&](std::size_t w) {
    const std::size_t r = w / src.block_cols;
    const std::size_t c = w % src.block_cols;
    dst.write(c, r, src.read(r, c).transposed());
  });
  dst.store.sync();
}

void block_scale(const BlockView& m, double factor) {
  parallel_for(m.block_rows * m.block_cols, [&](std::size_t w) {
    const std::size_t r = w / m.block_cols;
    const std::size_t c = w % m.block_cols;
    Block x = m.read(r, c);
    for (double& v : x.values()) v *= factor;
    m.write(r, c, x);
  });
  m.store.sync();
}

namespace {

BlockMatrixStore combine(const BlockMatrixStore& a, const BlockMatrixStore& b, const std::filesystem::path& directory,
                         double beta, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols() && a.block_size() == b.block_size(),
          std::string(op) + ": operands differ in shape or block size");
  auto out = BlockMatrixStore::create(directory, a.rows(), a.cols(), a.block_size());
  block_axpby(BlockView::of(a), BlockView::of(b), BlockView::of(out), 1.0, beta);
  return out;
}

}  // namespace

BlockMatrixStore block_add(const BlockMatrixStore& a, const BlockMatrixStore& b, const std::filesystem::path& directory) {
  return combine(a, b, directory, 1.0, "block_add");
}

BlockMatrixStore block_sub(const BlockMatrixStore& a, const BlockMatrixStore& b, const std::filesystem::path& directory) {
  return combine(a, b, directory, -1.0, "block_sub");
}

BlockMatrixStore block_multiply(const BlockMatrixStore& a, const BlockMatrixStore& b,
                                const std::filesystem::path& directory, double alpha) {
  require(a.cols() == b.rows() && a.block_size() == b.block_size(), "block_multiply: operands are not conformable");
  auto out = BlockMatrixStore::create(directory, a.rows(), b.cols(), a.block_size());
  block_gemm(BlockView::of(a), BlockView::of(b), BlockView::of(out), alpha, 0.0);
  return out;
}

std::vector<double> block_gemv(const BlockView& m, std::span<const double> x) {
  require(x.size() == m.cols(), "block_gemv: vector length " + std::to_string(x.size()) + " != matrix columns " +
                                    std::to_string(m.cols()));
  const std::size_t b = m.store.block_size();
  std::vector<double> y(m.rows(), 0.0);
  parallel_for(m.block_rows, [&](std::size_t r) {
    double* out = y.data() + r * b;
    for (std::size_t c = 0; c < m.block_cols; ++c) {
      const Block blk = m.read(r, c);
      const double* in = x.data() + c * b;
      for (std::size_t i = 0; i < blk.rows(); ++i) {
        double acc = 0.0;
        const double* row = blk.data() + i * blk.cols();
        for (std::size_t j = 0; j < blk.cols(); ++j) acc += row[j] * in[j];
        out[i] += acc;
      }
    }
  });
  return y;
}

double frobenius_norm(const BlockView& m) {
  std::vector<double> partial(m.block_rows * m.block_cols, 0.0);
  parallel_for(partial.size(), [&](std::size_t w) {
    const Block blk = m.read(w / m.block_cols, w % m.block_cols);
    double s = 0.0;
    for (double v : blk.values()) s += v * v;
    partial[w] = s;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return std::sqrt(total);
}

double identity_residual(const BlockView& a, const BlockView& b) {
  require(a.block_cols == b.block_rows && a.block_rows == b.block_cols, "identity_residual: operands not conformable");
  pin_blas_threads();
  std::vector<double> partial(a.block_rows * b.block_cols, 0.0);
  parallel_for(partial.size(), [&](std::size_t w) {
    const std::size_t r = w / b.block_cols;
    const std::size_t c = w % b.block_cols;
    Block acc(a.height(r), b.width(c));
    for (std::size_t k = 0; k < a.block_cols; ++k) {
      const Block lhs = a.read(r, k);
      const Block rhs = b.read(k, c);
      multiply_into(acc, lhs, rhs, 1.0);
    }
    if (r == c)
      for (std::size_t i = 0; i < acc.rows(); ++i) acc(i, i) -= 1.0;
    double s = 0.0;
    for (double v : acc.values()) s += v * v;
    partial[w] = s;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return std::sqrt(total);
}

Block invert_spd_block(const Block& m, std::size_t global_offset) {
  require(m.rows() == m.cols(), "invert_spd_block: block is not square");
  const std::size_t n = m.rows();
  Block l = m;

  // Cholesky, lower triangle in place.
  for (std::size_t j = 0; j < n; ++j) {
    double d = l(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0) || !std::isfinite(d))
      throw NumericalError("matrix is not symmetric positive definite", global_offset + j, d);
    const double root = std::sqrt(d);
    l(j, j) = root;
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = l(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
      l(i, j) = v / root;
    }
  }

  // L^{-1} in place, right to left; columns right of j already hold the inverse.
  std::vector<double> column(n);
  for (std::size_t jj = n; jj-- > 0;) {
    const double inv_diag = 1.0 / l(jj, jj);
    for (std::size_t i = jj + 1; i < n; ++i) {
      double s = 0.0;
      for (std::size_t k = jj + 1; k <= i; ++k) s += l(i, k) * l(k, jj);
      column[i] = -s * inv_diag;
    }
    for (std::size_t i = jj + 1; i < n; ++i) l(i, jj) = column[i];
    l(jj, jj) = inv_diag;
  }

  // M^{-1} = L^{-T} L^{-1}, lower half then mirrored.
  Block inv(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      double s = 0.0;
      for (std::size_t k = i; k < n; ++k) s += l(k, i) * l(k, j);
      inv(i, j) = s;
      inv(j, i) = s;
    }
  return inv;
}

namespace {

class ScratchSpace {
 public:
  explicit ScratchSpace(std::filesystem::path root) : root_(std::move(root)) {
    std::error_code ec;
    std::filesystem::create_directories(root_, ec);
    if (ec) throw StorageError("cannot create scratch directory " + root_.string() + ": " + ec.message());
  }
  ~ScratchSpace() {
    std::error_code ec;
    std::filesystem::remove_all(root_, ec);
  }
  ScratchSpace(const ScratchSpace&) = delete;
  ScratchSpace& operator=(const ScratchSpace&) = delete;

  /// Temporary store shaped like `rows_like` x `cols_like` (block rows of one, block columns of the other).
  class Temp {
   public:
    Temp(const std::filesystem::path& dir, std::size_t rows, std::size_t cols, std::size_t block)
        : dir_(dir), store_(BlockMatrixStore::create(dir, rows, cols, block)) {}
    ~Temp() {
      store_ = BlockMatrixStore();
      std::error_code ec;
      std::filesystem::remove_all(dir_, ec);
    }
    Temp(const Temp&) = delete;
    Temp& operator=(const Temp&) = delete;
    BlockView view() const { return BlockView::of(store_); }

   private:
    std::filesystem::path dir_;
    BlockMatrixStore store_;
  };

  std::unique_ptr<Temp> make(std::size_t rows, std::size_t cols, std::size_t block) {
    return std::make_unique<Temp>(root_ / ("t" + std::to_string(counter_++)), rows, cols, block);
  }

 private:
  std::filesystem::path root_;
  std::size_t counter_ = 0;
};

void invert_into(const BlockView& m, const BlockView& result, ScratchSpace& scratch, std::size_t global_offset,
                 bool symmetric) {
  const std::size_t nb = m.block_rows;
  const std::size_t block = m.store.block_size();
  if (nb == 1) {
    result.write(0, 0, invert_spd_block(m.read(0, 0), global_offset));
    return;
  }

  const std::size_t s = (nb + 1) / 2;
  const BlockView a = m.sub(0, 0, s, s);
  const BlockView b = m.sub(0, s, s, nb - s);
  const BlockView c = m.sub(s, 0, nb - s, s);
  const BlockView d = m.sub(s, s, nb - s, nb - s);
  const auto shape = symmetric ? OutputShape::symmetric : OutputShape::full;

  auto a_inv = scratch.make(a.rows(), a.cols(), block);
  invert_into(a, a_inv->view(), scratch, global_offset, symmetric);

  // X = A^{-1} B
  auto x = scratch.make(a.rows(), b.cols(), block);
  block_gemm(a_inv->view(), b, x->view(), 1.0, 0.0);

  // Q = D - C X, the Schur complement of A; its inverse is the lower-right result block.
  const BlockView r22 = result.sub(s, s, nb - s, nb - s);
  {
    auto q = scratch.make(d.rows(), d.cols(), block);
    block_copy(d, q->view());
    block_gemm(c, x->view(), q->view(), -1.0, 1.0, shape);
    invert_into(q->view(), r22, scratch, global_offset + s * block, symmetric);
  }

  // Z = C A^{-1}; equals X^T when M is symmetric.
  auto z = scratch.make(c.rows(), a.cols(), block);
  if (symmetric)
    block_transpose(x->view(), z->view());
  else
    block_gemm(c, a_inv->view(), z->view(), 1.0, 0.0);

  const BlockView r21 = result.sub(s, 0, nb - s, s);
  const BlockView r12 = result.sub(0, s, s, nb - s);
  const BlockView r11 = result.sub(0, 0, s, s);
  block_gemm(r22, z->view(), r21, -1.0, 0.0);  // -Q^{-1} C A^{-1}
  if (symmetric)
    block_transpose(r21, r12);
  else
    block_gemm(x->view(), r22, r12, -1.0, 0.0);  // -A^{-1} B Q^{-1}
  block_copy(a_inv->view(), r11);
  block_gemm(x->view(), r21, r11, -1.0, 1.0, shape);  // A^{-1} + A^{-1} B Q^{-1} C A^{-1}
}

}  // namespace

BlockMatrixStore invert_recursive(const BlockMatrixStore& m, const std::filesystem::path& output,
                                  const InvertOptions& options) {
  require(m.valid(), "invert_recursive: empty store");
  require(m.rows() == m.cols(), "invert_recursive: matrix is " + std::to_string(m.rows()) + "x" +
                                    std::to_string(m.cols()) + ", not square");
  auto result = BlockMatrixStore::create(output, m.rows(), m.cols(), m.block_size());
  {
    std::filesystem::path scratch_dir = options.scratch;
    if (scratch_dir.empty()) scratch_dir = output.string() + ".scratch";
    ScratchSpace scratch(scratch_dir);
    invert_into(BlockView::of(m), BlockView::of(result), scratch, 0, options.symmetric);
  }
  result.sync();
  return result;
}

}  // namespace retina
