#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "retina/analysis.hpp"
#include "retina/image.hpp"
#include "retina/pyramid.hpp"

namespace retina {

/// Everything a decoder needs to rebuild the analysis operator.
struct CodeHeader {
  std::uint32_t image_side = 0;
  std::uint16_t layers = 0;
  Boundary boundary = Boundary::zero;
  DoGParams params;
  std::uint64_t total_cells = 0;

  friend bool operator==(const CodeHeader&, const CodeHeader&) = default;
};

/// Header describing `op`. Throws InvalidParameter for operators that are not frames
/// (band-pass coarse layer), since those cannot be decoded exactly.
CodeHeader header_for(const AnalysisOperator& op);

/// Throws InvalidParameter naming the first field where `header` and `op` disagree.
void check_header_matches(const CodeHeader& header, const AnalysisOperator& op);

struct CodeEntry {
  std::uint64_t cell = 0;
  double value = 0.0;

  friend bool operator==(const CodeEntry&, const CodeEntry&) = default;
};

/// Rank order code: (cell, coefficient) couples sorted by decreasing |coefficient|.
struct RankOrderCode {
  CodeHeader header;
  std::vector<CodeEntry> entries;

  std::size_t retained() const noexcept { return entries.size(); }
  double fraction() const noexcept {
    return header.total_cells == 0 ? 0.0 : static_cast<double>(entries.size()) / static_cast<double>(header.total_cells);
  }

  friend bool operator==(const RankOrderCode&, const RankOrderCode&) = default;
};

/// Sorts every coefficient by decreasing magnitude; equal magnitudes keep ascending cell order.
RankOrderCode encode(std::span<const double> coefficients, const CodeHeader& header);

/// Number of entries kept for a fraction of the total cell count: ceil(fraction * total).
std::size_t retained_count(double fraction, std::size_t total_cells);

/// Keeps the first retained_count(fraction, total_cells) entries.
RankOrderCode truncate(const RankOrderCode& code, double fraction);

/// Dense coefficient vector with every cell not present in the code set to zero.
std::vector<double> masked_coefficients(const RankOrderCode& code);

/// Byte layout (little-endian): "ROC1", N u32, K u16, boundary u8, w_c f64, w_s f64,
/// sigma_ratio f64, sigma_c_finest f64, total_cells u64, N_s u64, N_s x {p u64, c_p f64},
/// then a CRC-32 (zlib polynomial) of every preceding byte as u32.
std::string serialize(const RankOrderCode& code);

/// Inverse of serialize. Throws FormatError with the byte offset of the first problem.
RankOrderCode deserialize(std::span<const char> bytes);
RankOrderCode deserialize(const std::string& bytes);

/// Phi* applied to the code's coefficients (all other cells zero): the progressive
/// reconstruction sum_p c_p DoG_p, without any rescaling.
Image straightforward_decode(const AnalysisOperator& op, const RankOrderCode& code);

/// Scalar that gives the straightforward synthesis unit DC gain: N^2 / ||Phi 1||^2.
/// Derived from the operator alone, so a decoder can apply it without the original image.
double synthesis_gain(const AnalysisOperator& op);

/// straightforward_decode scaled by synthesis_gain; comparable to the source image.
Image normalized_straightforward_decode(const AnalysisOperator& op, const RankOrderCode& code);

}  // namespace retina
