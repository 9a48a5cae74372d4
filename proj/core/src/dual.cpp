#include "retina/dual.hpp"

#include <openssl/evp.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <system_error>
#include <vector>

#include "retina/block_ops.hpp"
#include "retina/errors.hpp"
#include "retina/parallel.hpp"

namespace fs = std::filesystem;

namespace retina {

namespace {

constexpr const char* kMetadataFile = "metadata.txt";
constexpr const char* kInverseDir = "inverse";

std::string hexfloat(double v) {
  std::ostringstream out;
  out << std::hexfloat << v;
  return out.str();
}

std::string sha256_hex(const void* data, std::size_t size) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data, size, digest, &length, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 computation failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

std::string block_digest(const Block& block) {
  const auto v = block.values();
  return sha256_hex(v.data(), v.size_bytes());
}

std::string combine_digests(const std::vector<std::string>& digests) {
  std::string all;
  all.reserve(digests.size() * 64);
  for (const auto& d : digests) all += d;
  return sha256_hex(all.data(), all.size());
}

std::map<std::string, std::string> read_metadata(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw StorageError("cannot read cache metadata " + file.string());
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto space = line.find(' ');
    if (space == std::string::npos) continue;
    out[line.substr(0, space)] = line.substr(space + 1);
  }
  return out;
}

const std::string& field(const std::map<std::string, std::string>& m, const std::string& key, const fs::path& file) {
  const auto it = m.find(key);
  if (it == m.end()) throw StorageError("cache metadata " + file.string() + " lacks '" + key + "'");
  return it->second;
}

void write_metadata(const fs::path& file, const DualOperatorCache& cache) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw StorageError("cannot write cache metadata " + file.string());
  out << "format retina-dual 1\n"
      << "key " << cache.key.digest() << '\n'
      << "canonical " << cache.key.canonical() << '\n'
      << "block_size " << cache.block_size << '\n'
      << "residual " << hexfloat(cache.residual) << '\n'
      << "checksum " << cache.checksum << '\n';
  out.flush();
  if (!out) throw StorageError("failed writing cache metadata " + file.string());
}

void preflight_disk(const fs::path& root, std::size_t n, double margin) {
  // Frame operator, inverse and recursion scratch: about four dense n x n stores at peak.
  const double need = margin * 4.0 * static_cast<double>(n) * static_cast<double>(n) * sizeof(double);
  std::error_code ec;
  const auto info = fs::space(root, ec);
  if (ec) return;  // unknown filesystem; the writes themselves will report failure
  if (static_cast<double>(info.available) < need)
    throw ResourceError("dual operator needs about " + std::to_string(static_cast<long long>(need / (1 << 20))) +
                        " MiB of disk under " + root.string() + ", only " +
                        std::to_string(info.available >> 20) + " MiB available");
}

}  // namespace

CacheKey CacheKey::of(const AnalysisOperator& op) {
  if (op.coarse() != CoarseFilter::scaling)
    throw InvalidParameter("the dual decoder needs a frame: coarse layer must be the scaling function");
  CacheKey key;
  key.image_side = static_cast<std::uint32_t>(op.grid().image_side);
  key.layers = static_cast<std::uint16_t>(op.grid().layers);
  key.boundary = op.boundary();
  key.params = op.params();
  return key;
}

std::string CacheKey::canonical() const {
  std::ostringstream out;
  out << "N=" << image_side << ";K=" << layers << ";boundary=" << to_string(boundary)
      << ";wc=" << hexfloat(params.center_weight) << ";ws=" << hexfloat(params.surround_weight)
      << ";ratio=" << hexfloat(params.sigma_ratio) << ";sigma=" << hexfloat(params.finest_center_sigma)
      << ";coarse=scaling;layer_weight=stride;dtype=f64";
  return out.str();
}

std::string CacheKey::digest() const {
  const std::string text = canonical();
  return sha256_hex(text.data(), text.size()).substr(0, 32);
}

fs::path default_cache_root() {
  if (const char* env = std::getenv("RETINA_CODEC_CACHE"); env && *env) return env;
  if (const char* xdg = std::getenv("XDG_CACHE_HOME"); xdg && *xdg) return fs::path(xdg) / "retina-codec";
  if (const char* home = std::getenv("HOME"); home && *home) return fs::path(home) / ".cache" / "retina-codec";
  return fs::temp_directory_path() / "retina-codec-cache";
}

std::string inverse_checksum(const BlockMatrixStore& inverse) {
  const std::size_t nr = inverse.block_rows(), nc = inverse.block_cols();
  std::vector<std::string> digests(nr * nc);
  parallel_for(nr * nc, [&](std::size_t idx) { digests[idx] = block_digest(inverse.read_block(idx / nc, idx % nc)); });
  return combine_digests(digests);
}

BlockMatrixStore build_frame_operator(const AnalysisOperator& op, std::size_t block_size, const fs::path& directory) {
  const std::size_t n = op.cols();
  auto store = BlockMatrixStore::create(directory, n, n, block_size);
  const std::size_t nb = store.block_rows();

  std::vector<std::pair<std::size_t, std::size_t>> lower;
  for (std::size_t bi = 0; bi < nb; ++bi)
    for (std::size_t bj = 0; bj <= bi; ++bj) lower.emplace_back(bi, bj);

  // (Phi* Phi)(a, b) = sum_p Phi(p, a) Phi(p, b): walk column a, pick the part of each row
  // that falls in the block's column range.
  parallel_for(lower.size(), [&](std::size_t t) {
    const auto [bi, bj] = lower[t];
    const std::size_t r0 = bi * block_size, c0 = bj * block_size;
    const std::size_t h = store.block_height(bi), w = store.block_width(bj);
    Block block(h, w);
    bool any = false;
    for (std::size_t r = 0; r < h; ++r) {
      const auto col = op.column(r0 + r);
      for (std::size_t q = 0; q < col.indices.size(); ++q) {
        const auto row = op.row(col.indices[q]);
        const double phi_a = col.values[q];
        auto first = std::lower_bound(row.indices.begin(), row.indices.end(), static_cast<std::uint32_t>(c0));
        for (auto it = first; it != row.indices.end() && *it < c0 + w; ++it) {
          block(r, *it - c0) += phi_a * row.values[static_cast<std::size_t>(it - row.indices.begin())];
          any = true;
        }
      }
    }
    if (!any) return;  // unwritten blocks read as zeros
    store.write_block(bi, bj, block);
    if (bi != bj) store.write_block(bj, bi, block.transposed());
  });
  store.sync();
  return store;
}

std::optional<DualOperatorCache> open_dual(const AnalysisOperator& op, const fs::path& cache_root) {
  const CacheKey key = CacheKey::of(op);
  const fs::path dir = cache_root / key.digest();
  const fs::path meta_file = dir / kMetadataFile;
  if (!fs::exists(meta_file)) return std::nullopt;
  const auto meta = read_metadata(meta_file);
  // A digest collision or a stale format must not be mistaken for a hit.
  if (field(meta, "canonical", meta_file) != key.canonical()) return std::nullopt;

  DualOperatorCache cache;
  cache.key = key;
  cache.directory = dir;
  cache.inverse = BlockMatrixStore::open(dir / kInverseDir);
  cache.block_size = std::stoull(field(meta, "block_size", meta_file));
  cache.residual = std::strtod(field(meta, "residual", meta_file).c_str(), nullptr);
  cache.checksum = field(meta, "checksum", meta_file);
  cache.reused = true;
  const std::size_t n = op.cols();
  if (cache.inverse.rows() != n || cache.inverse.cols() != n)
    throw StorageError("cached inverse at " + dir.string() + " has the wrong dimensions");
  return cache;
}

DualOperatorCache build_dual(const AnalysisOperator& op, std::size_t block_size, const fs::path& cache_root,
                             const DualBuildOptions& options) {
  if (block_size < 16) throw InvalidParameter("block size must be at least 16");
  if (auto hit = open_dual(op, cache_root)) return *hit;

  const CacheKey key = CacheKey::of(op);
  const std::size_t n = op.cols();
  fs::create_directories(cache_root);
  preflight_disk(cache_root, n, options.disk_margin);

  const fs::path staging = cache_root / (".staging-" + key.digest() + "-" + std::to_string(::getpid()));
  fs::remove_all(staging);
  fs::create_directories(staging);
  struct Cleanup {
    fs::path path;
    bool armed = true;
    ~Cleanup() {
      std::error_code ec;
      if (armed) fs::remove_all(path, ec);
    }
  } cleanup{staging};

  DualOperatorCache cache;
  cache.key = key;
  cache.block_size = block_size;
  {
    const BlockMatrixStore frame = build_frame_operator(op, block_size, staging / "frame");
    InvertOptions inv;
    inv.scratch = staging / "scratch";
    inv.symmetric = true;
    cache.inverse = invert_recursive(frame, staging / kInverseDir, inv);
    cache.residual = identity_residual(BlockView::of(frame), BlockView::of(cache.inverse)) /
                     std::sqrt(static_cast<double>(n));
  }
  if (!(cache.residual <= options.residual_threshold)) {
    std::ostringstream msg;
    msg << "inverse frame operator residual " << std::setprecision(3) << cache.residual << " exceeds "
        << options.residual_threshold;
    throw ConsistencyError(msg.str());
  }
  std::error_code ec;
  fs::remove_all(staging / "frame", ec);
  fs::remove_all(staging / "scratch", ec);
  cache.inverse.sync();
  cache.checksum = inverse_checksum(cache.inverse);
  write_metadata(staging / kMetadataFile, cache);
  cache.inverse = BlockMatrixStore();  // release before moving the directory

  const fs::path final_dir = cache_root / key.digest();
  fs::rename(staging, final_dir, ec);
  if (ec) {
    // Another process may have finished the same entry first; use it if it is complete.
    if (auto hit = open_dual(op, cache_root)) return *hit;
    throw StorageError("cannot install cache entry " + final_dir.string() + ": " + ec.message());
  }
  cleanup.armed = false;

  auto installed = open_dual(op, cache_root);
  if (!installed) throw StorageError("cache entry " + final_dir.string() + " vanished after install");
  installed->reused = false;
  return *installed;
}

Image dual_decode(const AnalysisOperator& op, const DualOperatorCache& cache, const RankOrderCode& code) {
  if (!(cache.key == CacheKey::of(op))) throw InvalidParameter("dual cache was built for a different operator");
  check_header_matches(code.header, op);

  const Image x = op.adjoint(masked_coefficients(code));
  const auto xs = x.samples();
  const BlockMatrixStore& s = cache.inverse;
  const std::size_t nr = s.block_rows(), nc = s.block_cols(), b = s.block_size();

  // Each worker owns one block row of the output; per-block digests are collected in block order.
  std::vector<double> y(op.cols(), 0.0);
  std::vector<std::string> digests(nr * nc);
  parallel_for(nr, [&](std::size_t br) {
    const std::size_t h = s.block_height(br);
    for (std::size_t bc = 0; bc < nc; ++bc) {
      const Block block = s.read_block(br, bc);
      digests[br * nc + bc] = block_digest(block);
      const std::size_t w = s.block_width(bc);
      for (std::size_t r = 0; r < h; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < w; ++c) acc += block(r, c) * xs[bc * b + c];
        y[br * b + r] += acc;
      }
    }
  });
  if (combine_digests(digests) != cache.checksum)
    throw CorruptionError("cached inverse at " + cache.directory.string() + " does not match its checksum");
  return Image(op.grid().image_side, std::move(y));
}

}  // namespace retina
