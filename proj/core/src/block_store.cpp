#include "retina/block_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <atomic>
#include <bit>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>

#include "retina/errors.hpp"

namespace retina {

static_assert(std::endian::native == std::endian::little, "block files are little-endian; big-endian hosts need byte swapping");

namespace {

std::atomic<std::size_t> g_live{0};
std::atomic<std::size_t> g_peak{0};

}  // namespace

namespace detail {

void track_allocate(std::size_t elements) noexcept {
  const std::size_t now = g_live.fetch_add(elements) + elements;
  std::size_t peak = g_peak.load();
  while (now > peak && !g_peak.compare_exchange_weak(peak, now)) {
  }
}

void track_deallocate(std::size_t elements) noexcept { g_live.fetch_sub(elements); }

}  // namespace detail

namespace block_memory {

std::size_t live_elements() noexcept { return g_live.load(); }
std::size_t peak_elements() noexcept { return g_peak.load(); }
void reset_peak() noexcept { g_peak.store(g_live.load()); }

}  // namespace block_memory

Block Block::transposed() const {
  Block t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

namespace {

constexpr const char* kManifest = "manifest.txt";
constexpr const char* kSingleFile = "blocks.f64";
constexpr const char* kMagic = "retina-blockstore";

std::string errno_text() { return std::strerror(errno); }

class Fd {
 public:
  Fd(const std::filesystem::path& path, int flags, mode_t mode = 0644) : fd_(::open(path.c_str(), flags | O_CLOEXEC, mode)) {}
  ~Fd() {
    if (fd_ >= 0) ::close(fd_);
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  int get() const noexcept { return fd_; }
  bool ok() const noexcept { return fd_ >= 0; }

 private:
  int fd_;
};

void pread_all(int fd, void* buffer, std::size_t bytes, off_t offset, const std::string& what) {
  auto* out = static_cast<char*>(buffer);
  while (bytes > 0) {
    const ssize_t got = ::pread(fd, out, bytes, offset);
    if (got < 0) {
      if (errno == EINTR) continue;
      throw StorageError("read failed for " + what + ": " + errno_text());
    }
    if (got == 0) throw StorageError("short read for " + what);
    out += got;
    bytes -= static_cast<std::size_t>(got);
    offset += got;
  }
}

void pwrite_all(int fd, const void* buffer, std::size_t bytes, off_t offset, const std::string& what) {
  const auto* in = static_cast<const char*>(buffer);
  while (bytes > 0) {
    const ssize_t put = ::pwrite(fd, in, bytes, offset);
    if (put < 0) {
      if (errno == EINTR) continue;
      throw StorageError("write failed for " + what + ": " + errno_text());
    }
    in += put;
    bytes -= static_cast<std::size_t>(put);
    offset += put;
  }
}

}  // namespace

struct BlockMatrixStore::State {
  std::filesystem::path directory;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t block = 0;
  std::size_t block_rows = 0;
  std::size_t block_cols = 0;
  StoreLayout layout = StoreLayout::file_per_block;
  std::vector<unsigned char> written;  // per block, row-major over the block grid
  std::vector<std::size_t> region;     // single_file only: byte offset per block
  std::unique_ptr<Fd> single;
  mutable std::mutex mutex;
  mutable bool dirty = false;

  std::size_t height(std::size_t br) const noexcept { return br + 1 < block_rows ? block : rows - br * block; }
  std::size_t width(std::size_t bc) const noexcept { return bc + 1 < block_cols ? block : cols - bc * block; }
  std::size_t slot(std::size_t br, std::size_t bc) const noexcept { return br * block_cols + bc; }

  std::string file_name(std::size_t br, std::size_t bc) const {
    return "b_" + std::to_string(br) + "_" + std::to_string(bc) + ".f64";
  }

  void compute_regions() {
    region.assign(block_rows * block_cols, 0);
    std::size_t offset = 0;
    for (std::size_t br = 0; br < block_rows; ++br)
      for (std::size_t bc = 0; bc < block_cols; ++bc) {
        region[slot(br, bc)] = offset;
        offset += height(br) * width(bc) * sizeof(double);
      }
  }

  void write_manifest() const {
    std::ostringstream out;
    out << kMagic << " 1\n"
        << "rows " << rows << "\ncols " << cols << "\nblock " << block << "\ndtype f64le\n"
        << "layout " << (layout == StoreLayout::single_file ? "single" : "per-block") << "\n";
    for (std::size_t br = 0; br < block_rows; ++br)
      for (std::size_t bc = 0; bc < block_cols; ++bc) {
        out << "block " << br << ' ' << bc << ' ';
        if (!written[slot(br, bc)])
          out << "zero";
        else if (layout == StoreLayout::single_file)
          out << "region " << kSingleFile << ' ' << region[slot(br, bc)];
        else
          out << "file " << file_name(br, bc);
        out << '\n';
      }
    const auto tmp = directory / (std::string(kManifest) + ".tmp");
    {
      std::ofstream file(tmp, std::ios::trunc);
      file << out.str();
      file.flush();
      if (!file) throw StorageError("cannot write manifest in " + directory.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, directory / kManifest, ec);
    if (ec) throw StorageError("cannot publish manifest in " + directory.string() + ": " + ec.message());
  }

  ~State() {
    try {
      std::lock_guard lock(mutex);
      if (dirty) write_manifest();
    } catch (...) {
    }
  }
};

BlockMatrixStore BlockMatrixStore::create(const std::filesystem::path& directory, std::size_t rows, std::size_t cols,
                                          std::size_t block_size, StoreLayout layout) {
  if (block_size < 1) throw InvalidParameter("block size must be >= 1");
  if (rows == 0 || cols == 0) throw InvalidParameter("block store needs non-zero dimensions");
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw StorageError("cannot create store directory " + directory.string() + ": " + ec.message());
  if (std::filesystem::exists(directory / kManifest))
    throw StorageError("a block store already exists at " + directory.string());

  auto state = std::make_shared<State>();
  state->directory = directory;
  state->rows = rows;
  state->cols = cols;
  state->block = block_size;
  state->block_rows = (rows + block_size - 1) / block_size;
  state->block_cols = (cols + block_size - 1) / block_size;
  state->layout = layout;
  state->written.assign(state->block_rows * state->block_cols, 0);
  if (layout == StoreLayout::single_file) {
    state->compute_regions();
    state->single = std::make_unique<Fd>(directory / kSingleFile, O_RDWR | O_CREAT | O_TRUNC);
    if (!state->single->ok()) throw StorageError("cannot create " + (directory / kSingleFile).string() + ": " + errno_text());
  }
  state->write_manifest();
  return BlockMatrixStore(std::move(state));
}

BlockMatrixStore BlockMatrixStore::open(const std::filesystem::path& directory) {
  std::ifstream in(directory / kManifest);
  if (!in) throw StorageError("no block store manifest in " + directory.string());

  auto state = std::make_shared<State>();
  state->directory = directory;
  auto fail = [&](const std::string& why) -> void {
    throw StorageError("corrupt manifest in " + directory.string() + ": " + why);
  };

  std::string word, dtype, layout;
  int version = 0;
  if (!(in >> word >> version) || word != kMagic || version != 1) fail("bad header line");
  if (!(in >> word >> state->rows) || word != "rows") fail("missing rows");
  if (!(in >> word >> state->cols) || word != "cols") fail("missing cols");
  if (!(in >> word >> state->block) || word != "block") fail("missing block size");
  if (!(in >> word >> dtype) || word != "dtype" || dtype != "f64le") fail("unsupported element type");
  if (!(in >> word >> layout) || word != "layout") fail("missing layout");
  if (layout == "single")
    state->layout = StoreLayout::single_file;
  else if (layout == "per-block")
    state->layout = StoreLayout::file_per_block;
  else
    fail("unknown layout " + layout);
  if (state->rows == 0 || state->cols == 0 || state->block == 0) fail("zero dimension");

  state->block_rows = (state->rows + state->block - 1) / state->block;
  state->block_cols = (state->cols + state->block - 1) / state->block;
  state->written.assign(state->block_rows * state->block_cols, 0);
  if (state->layout == StoreLayout::single_file) state->compute_regions();

  std::vector<unsigned char> seen(state->written.size(), 0);
  std::size_t br = 0, bc = 0;
  while (in >> word) {
    if (word != "block" || !(in >> br >> bc)) fail("malformed block line");
    if (br >= state->block_rows || bc >= state->block_cols) fail("block index out of range");
    const std::size_t s = state->slot(br, bc);
    if (seen[s]) fail("block listed twice");
    seen[s] = 1;
    std::string kind;
    in >> kind;
    if (kind == "zero") {
      continue;
    } else if (kind == "file") {
      std::string name;
      in >> name;
      if (state->layout != StoreLayout::file_per_block || name != state->file_name(br, bc)) fail("unexpected block file");
      state->written[s] = 1;
    } else if (kind == "region") {
      std::string name;
      std::size_t offset = 0;
      in >> name >> offset;
      if (state->layout != StoreLayout::single_file || name != kSingleFile || offset != state->region[s])
        fail("unexpected block region");
      state->written[s] = 1;
    } else {
      fail("unknown block locator " + kind);
    }
  }
  for (unsigned char s : seen)
    if (!s) fail("manifest does not cover every block");

  if (state->layout == StoreLayout::single_file) {
    state->single = std::make_unique<Fd>(directory / kSingleFile, O_RDWR);
    if (!state->single->ok()) throw StorageError("cannot open " + (directory / kSingleFile).string() + ": " + errno_text());
  }
  return BlockMatrixStore(std::move(state));
}

std::size_t BlockMatrixStore::rows() const noexcept { return state_->rows; }
std::size_t BlockMatrixStore::cols() const noexcept { return state_->cols; }
std::size_t BlockMatrixStore::block_size() const noexcept { return state_->block; }
std::size_t BlockMatrixStore::block_rows() const noexcept { return state_->block_rows; }
std::size_t BlockMatrixStore::block_cols() const noexcept { return state_->block_cols; }
std::size_t BlockMatrixStore::block_height(std::size_t br) const noexcept { return state_->height(br); }
std::size_t BlockMatrixStore::block_width(std::size_t bc) const noexcept { return state_->width(bc); }
StoreLayout BlockMatrixStore::layout() const noexcept { return state_->layout; }
const std::filesystem::path& BlockMatrixStore::directory() const noexcept { return state_->directory; }

namespace {

void check_index(const BlockMatrixStore::State& s, std::size_t br, std::size_t bc) {
  if (br >= s.block_rows || bc >= s.block_cols)
    throw InvalidParameter("block (" + std::to_string(br) + ", " + std::to_string(bc) + ") outside a " +
                           std::to_string(s.block_rows) + "x" + std::to_string(s.block_cols) + " block grid");
}

}  // namespace

bool BlockMatrixStore::is_written(std::size_t br, std::size_t bc) const {
  check_index(*state_, br, bc);
  std::lock_guard lock(state_->mutex);
  return state_->written[state_->slot(br, bc)] != 0;
}

Block BlockMatrixStore::read_block(std::size_t br, std::size_t bc) const {
  const State& s = *state_;
  check_index(s, br, bc);
  Block block(s.height(br), s.width(bc));
  {
    std::lock_guard lock(s.mutex);
    if (!s.written[s.slot(br, bc)]) return block;
  }
  const std::size_t bytes = block.rows() * block.cols() * sizeof(double);
  if (s.layout == StoreLayout::single_file) {
    pread_all(s.single->get(), block.data(), bytes, static_cast<off_t>(s.region[s.slot(br, bc)]),
              (s.directory / kSingleFile).string());
  } else {
    const auto path = s.directory / s.file_name(br, bc);
    Fd fd(path, O_RDONLY);
    if (!fd.ok()) throw StorageError("cannot open block file " + path.string() + ": " + errno_text());
    const off_t size = ::lseek(fd.get(), 0, SEEK_END);
    if (size != static_cast<off_t>(bytes))
      throw StorageError("block file " + path.string() + " has " + std::to_string(size) + " bytes, expected " +
                         std::to_string(bytes));
    pread_all(fd.get(), block.data(), bytes, 0, path.string());
  }
  return block;
}

void BlockMatrixStore::write_block(std::size_t br, std::size_t bc, const Block& block) {
  State& s = *state_;
  check_index(s, br, bc);
  if (block.rows() != s.height(br) || block.cols() != s.width(bc))
    throw InvalidParameter("block (" + std::to_string(br) + ", " + std::to_string(bc) + ") must be " +
                           std::to_string(s.height(br)) + "x" + std::to_string(s.width(bc)) + ", got " +
                           std::to_string(block.rows()) + "x" + std::to_string(block.cols()));
  const std::size_t bytes = block.rows() * block.cols() * sizeof(double);
  if (s.layout == StoreLayout::single_file) {
    pwrite_all(s.single->get(), block.data(), bytes, static_cast<off_t>(s.region[s.slot(br, bc)]),
               (s.directory / kSingleFile).string());
  } else {
    const auto path = s.directory / s.file_name(br, bc);
    Fd fd(path, O_WRONLY | O_CREAT | O_TRUNC);
    if (!fd.ok()) throw StorageError("cannot create block file " + path.string() + ": " + errno_text());
    pwrite_all(fd.get(), block.data(), bytes, 0, path.string());
  }
  std::lock_guard lock(s.mutex);
  s.written[s.slot(br, bc)] = 1;
  s.dirty = true;
}

void BlockMatrixStore::sync() const {
  std::lock_guard lock(state_->mutex);
  state_->write_manifest();
  state_->dirty = false;
}

BlockMatrixStore store_from_dense(const std::filesystem::path& directory, std::size_t rows, std::size_t cols,
                                  std::size_t block_size, std::span<const double> values) {
  if (values.size() != rows * cols) throw InvalidParameter("dense matrix size does not match dimensions");
  auto store = BlockMatrixStore::create(directory, rows, cols, block_size);
  for (std::size_t br = 0; br < store.block_rows(); ++br)
    for (std::size_t bc = 0; bc < store.block_cols(); ++bc) {
      Block block(store.block_height(br), store.block_width(bc));
      for (std::size_t r = 0; r < block.rows(); ++r)
        for (std::size_t c = 0; c < block.cols(); ++c)
          block(r, c) = values[(br * block_size + r) * cols + bc * block_size + c];
      store.write_block(br, bc, block);
    }
  store.sync();
  return store;
}

std::vector<double> store_to_dense(const BlockMatrixStore& store) {
  std::vector<double> out(store.rows() * store.cols());
  const std::size_t b = store.block_size();
  for (std::size_t br = 0; br < store.block_rows(); ++br)
    for (std::size_t bc = 0; bc < store.block_cols(); ++bc) {
      const Block block = store.read_block(br, bc);
      for (std::size_t r = 0; r < block.rows(); ++r)
        for (std::size_t c = 0; c < block.cols(); ++c) out[(br * b + r) * store.cols() + bc * b + c] = block(r, c);
    }
  return out;
}

}  // namespace retina
