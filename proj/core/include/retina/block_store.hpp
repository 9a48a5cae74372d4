#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <new>
#include <span>
#include <vector>

namespace retina {

/// Process-wide accounting of matrix elements held in Block buffers.
namespace block_memory {
std::size_t live_elements() noexcept;
std::size_t peak_elements() noexcept;
/// Restarts peak tracking from the current live count.
void reset_peak() noexcept;
}  // namespace block_memory

template <typename T>
struct TrackingAllocator {
  using value_type = T;

  TrackingAllocator() = default;
  template <typename U>
  TrackingAllocator(const TrackingAllocator<U>&) noexcept {}

  T* allocate(std::size_t n);
  void deallocate(T* p, std::size_t n) noexcept;

  friend bool operator==(const TrackingAllocator&, const TrackingAllocator&) noexcept { return true; }
};

namespace detail {
void track_allocate(std::size_t elements) noexcept;
void track_deallocate(std::size_t elements) noexcept;
}  // namespace detail

template <typename T>
T* TrackingAllocator<T>::allocate(std::size_t n) {
  T* p = std::allocator<T>{}.allocate(n);
  detail::track_allocate(n);
  return p;
}

template <typename T>
void TrackingAllocator<T>::deallocate(T* p, std::size_t n) noexcept {
  detail::track_deallocate(n);
  std::allocator<T>{}.deallocate(p, n);
}

/// One dense row-major tile, the unit of I/O and of in-core arithmetic.
class Block {
 public:
  Block() = default;
  Block(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return {data_.data(), data_.size()}; }
  std::span<const double> values() const noexcept { return {data_.data(), data_.size()}; }

  Block transposed() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double, TrackingAllocator<double>> data_;
};

enum class StoreLayout {
  file_per_block,  ///< block (r, c) in its own file
  single_file,     ///< all blocks in one file at fixed offsets
};

/// Dense rows x cols matrix of 64-bit reals, tiled into block_size x block_size blocks
/// (edge blocks take the remainder) and kept in a directory on disk.
///
/// The directory holds a text manifest (dimensions, block size, element type, layout and a
/// locator per block) plus raw little-endian block data, row-major within a block.
/// Blocks never written read back as zeros. Copies of a handle share state; concurrent
/// reads are safe, and concurrent writes to distinct blocks are safe. The manifest is
/// rewritten by sync() and when the last handle goes away.
class BlockMatrixStore {
 public:
  static BlockMatrixStore create(const std::filesystem::path& directory, std::size_t rows, std::size_t cols,
                                 std::size_t block_size, StoreLayout layout = StoreLayout::file_per_block);
  static BlockMatrixStore open(const std::filesystem::path& directory);

  BlockMatrixStore() = default;

  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;
  std::size_t block_size() const noexcept;
  std::size_t block_rows() const noexcept;
  std::size_t block_cols() const noexcept;
  std::size_t block_height(std::size_t block_row) const noexcept;
  std::size_t block_width(std::size_t block_col) const noexcept;
  StoreLayout layout() const noexcept;
  const std::filesystem::path& directory() const noexcept;
  bool valid() const noexcept { return state_ != nullptr; }

  Block read_block(std::size_t block_row, std::size_t block_col) const;
  void write_block(std::size_t block_row, std::size_t block_col, const Block& block);
  bool is_written(std::size_t block_row, std::size_t block_col) const;

  /// Persists the manifest.
  void sync() const;

  struct State;

 private:
  explicit BlockMatrixStore(std::shared_ptr<State> state) : state_(std::move(state)) {}
  std::shared_ptr<State> state_;
};

/// Writes a row-major dense matrix into a new store.
BlockMatrixStore store_from_dense(const std::filesystem::path& directory, std::size_t rows, std::size_t cols,
                                  std::size_t block_size, std::span<const double> values);
/// Reads a whole store into a row-major dense vector (for small matrices and tests).
std::vector<double> store_to_dense(const BlockMatrixStore& store);

}  // namespace retina
