#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "retina/analysis.hpp"
#include "retina/block_store.hpp"
#include "retina/code.hpp"
#include "retina/image.hpp"

namespace retina {

/// Identifies an inverse frame operator: everything that changes Phi.
struct CacheKey {
  std::uint32_t image_side = 0;
  std::uint16_t layers = 0;
  Boundary boundary = Boundary::zero;
  DoGParams params;

  static CacheKey of(const AnalysisOperator& op);
  /// Exact text form; reals are written as hex floats so equal keys mean equal bits.
  std::string canonical() const;
  /// Directory name under the cache root (SHA-256 of canonical(), hex, truncated).
  std::string digest() const;

  friend bool operator==(const CacheKey&, const CacheKey&) = default;
};

/// Per-user cache root: $RETINA_CODEC_CACHE, else $XDG_CACHE_HOME/retina-codec,
/// else $HOME/.cache/retina-codec, else a directory under the system temp path.
std::filesystem::path default_cache_root();

/// Persisted (Phi* Phi)^{-1} for one key.
struct DualOperatorCache {
  CacheKey key;
  std::filesystem::path directory;
  BlockMatrixStore inverse;
  std::size_t block_size = 0;
  /// ||(Phi* Phi) S - I||_F / sqrt(N^2), measured at build time.
  double residual = 0.0;
  /// SHA-256 over the per-block SHA-256 digests of the inverse, in block order.
  std::string checksum;
  /// True when build_dual found an existing entry instead of computing one.
  bool reused = false;
};

struct DualBuildOptions {
  double residual_threshold = 1e-8;
  /// Headroom factor on the disk-space preflight.
  double disk_margin = 1.1;
};

/// Phi* Phi as a symmetric N^2 x N^2 block store, assembled block by block from sparse Phi
/// (lower block triangle computed, upper mirrored).
BlockMatrixStore build_frame_operator(const AnalysisOperator& op, std::size_t block_size,
                                      const std::filesystem::path& directory);

/// Opens the cache entry for `op` if one exists with an exactly matching key.
std::optional<DualOperatorCache> open_dual(const AnalysisOperator& op, const std::filesystem::path& cache_root);

/// Returns the cached inverse frame operator for `op`, computing and persisting it
/// (frame operator, recursive inversion, residual check) on a miss.
DualOperatorCache build_dual(const AnalysisOperator& op, std::size_t block_size,
                             const std::filesystem::path& cache_root, const DualBuildOptions& options = {});

/// f* = (Phi* Phi)^{-1} Phi* c for the coefficients kept in `code` (others zero). The
/// inverse is streamed from disk and its checksum verified on the way.
Image dual_decode(const AnalysisOperator& op, const DualOperatorCache& cache, const RankOrderCode& code);

/// Recomputes the inverse's checksum (reads every block).
std::string inverse_checksum(const BlockMatrixStore& inverse);

}  // namespace retina
