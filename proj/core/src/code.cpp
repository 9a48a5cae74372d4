#include "retina/code.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>

#include "retina/errors.hpp"

namespace retina {

CodeHeader header_for(const AnalysisOperator& op) {
  if (op.coarse() != CoarseFilter::scaling)
    throw InvalidParameter("only operators with a scaling function are codecs; this one has a band-pass coarse layer");
  CodeHeader header;
  header.image_side = static_cast<std::uint32_t>(op.grid().image_side);
  header.layers = static_cast<std::uint16_t>(op.grid().layers);
  header.boundary = op.boundary();
  header.params = op.params();
  header.total_cells = op.grid().total_cells;
  return header;
}

void check_header_matches(const CodeHeader& header, const AnalysisOperator& op) {
  const CodeHeader expected = header_for(op);
  auto mismatch = [](const std::string& field) {
    throw InvalidParameter("code header does not match operator: " + field + " differs");
  };
  if (header.image_side != expected.image_side) mismatch("image side");
  if (header.layers != expected.layers) mismatch("layer count");
  if (header.boundary != expected.boundary) mismatch("boundary convention");
  if (std::bit_cast<std::uint64_t>(header.params.center_weight) != std::bit_cast<std::uint64_t>(expected.params.center_weight))
    mismatch("center weight");
  if (std::bit_cast<std::uint64_t>(header.params.surround_weight) !=
      std::bit_cast<std::uint64_t>(expected.params.surround_weight))
    mismatch("surround weight");
  if (std::bit_cast<std::uint64_t>(header.params.sigma_ratio) != std::bit_cast<std::uint64_t>(expected.params.sigma_ratio))
    mismatch("sigma ratio");
  if (std::bit_cast<std::uint64_t>(header.params.finest_center_sigma) !=
      std::bit_cast<std::uint64_t>(expected.params.finest_center_sigma))
    mismatch("finest center sigma");
  if (header.total_cells != expected.total_cells) mismatch("total cell count");
}

RankOrderCode encode(std::span<const double> coefficients, const CodeHeader& header) {
  if (coefficients.size() != header.total_cells)
    throw InvalidParameter("encode: " + std::to_string(coefficients.size()) + " coefficients for a header with " +
                           std::to_string(header.total_cells) + " cells");
  std::vector<std::uint64_t> order(coefficients.size());
  std::iota(order.begin(), order.end(), std::uint64_t{0});
  std::sort(order.begin(), order.end(), [&](std::uint64_t a, std::uint64_t b) {
    const double ma = std::abs(coefficients[a]);
    const double mb = std::abs(coefficients[b]);
    if (ma != mb) return ma > mb;
    return a < b;
  });

  RankOrderCode code;
  code.header = header;
  code.entries.reserve(order.size());
  for (std::uint64_t p : order) code.entries.push_back({p, coefficients[p]});
  return code;
}

std::size_t retained_count(double fraction, std::size_t total_cells) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw InvalidParameter("fraction must lie in (0, 1], got " + std::to_string(fraction));
  const double want = std::ceil(fraction * static_cast<double>(total_cells));
  return std::min(total_cells, static_cast<std::size_t>(want));
}

RankOrderCode truncate(const RankOrderCode& code, double fraction) {
  const std::size_t keep = std::min(code.entries.size(), retained_count(fraction, code.header.total_cells));
  RankOrderCode out;
  out.header = code.header;
  out.entries.assign(code.entries.begin(), code.entries.begin() + static_cast<std::ptrdiff_t>(keep));
  return out;
}

std::vector<double> masked_coefficients(const RankOrderCode& code) {
  std::vector<double> dense(code.header.total_cells, 0.0);
  for (const CodeEntry& e : code.entries) {
    if (e.cell >= dense.size())
      throw InvalidParameter("code entry cell " + std::to_string(e.cell) + " >= total cells " +
                             std::to_string(dense.size()));
    dense[e.cell] = e.value;
  }
  return dense;
}

namespace {

constexpr char kMagic[4] = {'R', 'O', 'C', '1'};
constexpr std::size_t kHeaderBytes = 4 + 4 + 2 + 1 + 4 * 8 + 8 + 8;
constexpr std::size_t kEntryBytes = 16;
constexpr std::size_t kTrailerBytes = 4;

template <typename T>
void put(std::string& out, T value) {
  static_assert(std::endian::native == std::endian::little, "stream writer assumes a little-endian host");
  char raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  out.append(raw, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const char> bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* field) {
    if (bytes_.size() - pos_ < sizeof(T))
      throw FormatError(std::string("truncated stream while reading ") + field, pos_);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::size_t position() const noexcept { return pos_; }

 private:
  std::span<const char> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::span<const char> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + done), chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::string serialize(const RankOrderCode& code) {
  std::string out;
  out.reserve(kHeaderBytes + code.entries.size() * kEntryBytes + kTrailerBytes);
  out.append(kMagic, 4);
  const CodeHeader& h = code.header;
  put<std::uint32_t>(out, h.image_side);
  put<std::uint16_t>(out, h.layers);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(h.boundary));
  put<double>(out, h.params.center_weight);
  put<double>(out, h.params.surround_weight);
  put<double>(out, h.params.sigma_ratio);
  put<double>(out, h.params.finest_center_sigma);
  put<std::uint64_t>(out, h.total_cells);
  put<std::uint64_t>(out, code.entries.size());
  for (const CodeEntry& e : code.entries) {
    put<std::uint64_t>(out, e.cell);
    put<double>(out, e.value);
  }
  put<std::uint32_t>(out, crc_of(out));
  return out;
}

RankOrderCode deserialize(std::span<const char> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad magic, expected ROC1", 0);
  if (bytes.size() < kHeaderBytes + kTrailerBytes) throw FormatError("stream shorter than header", bytes.size());

  Reader in(bytes.subspan(4));
  auto at = [&] { return 4 + in.position(); };
  RankOrderCode code;
  CodeHeader& h = code.header;
  h.image_side = in.get<std::uint32_t>("image side");
  h.layers = in.get<std::uint16_t>("layer count");
  const std::size_t boundary_at = at();
  const auto boundary = in.get<std::uint8_t>("boundary");
  h.params.center_weight = in.get<double>("center weight");
  h.params.surround_weight = in.get<double>("surround weight");
  h.params.sigma_ratio = in.get<double>("sigma ratio");
  h.params.finest_center_sigma = in.get<double>("finest center sigma");
  const std::size_t total_at = at();
  h.total_cells = in.get<std::uint64_t>("total cells");
  const std::size_t count_at = at();
  const auto count = in.get<std::uint64_t>("entry count");

  if (count > h.total_cells) throw FormatError("entry count exceeds total cells", count_at);
  if (count > (bytes.size() - kHeaderBytes - kTrailerBytes) / kEntryBytes ||
      bytes.size() != kHeaderBytes + count * kEntryBytes + kTrailerBytes)
    throw FormatError("stream length does not match entry count " + std::to_string(count), count_at);

  const std::size_t body = bytes.size() - kTrailerBytes;
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + body, sizeof stored_crc);
  if (crc_of(bytes.first(body)) != stored_crc) throw FormatError("checksum mismatch", body);

  if (boundary > static_cast<std::uint8_t>(Boundary::periodic))
    throw FormatError("unknown boundary convention " + std::to_string(boundary), boundary_at);
  h.boundary = static_cast<Boundary>(boundary);
  try {
    const GridSpec grid = grid_spec(h.image_side, h.layers, h.params);
    if (grid.total_cells != h.total_cells)
      throw FormatError("total cells " + std::to_string(h.total_cells) + " inconsistent with grid (" +
                            std::to_string(grid.total_cells) + ")",
                        total_at);
  } catch (const InvalidParameter& e) {
    throw FormatError(std::string("invalid header: ") + e.what(), 4);
  }

  code.entries.reserve(count);
  std::vector<bool> seen(h.total_cells, false);
  for (std::uint64_t n = 0; n < count; ++n) {
    const std::size_t entry_at = at();
    CodeEntry e;
    e.cell = in.get<std::uint64_t>("entry cell");
    e.value = in.get<double>("entry value");
    if (e.cell >= h.total_cells) throw FormatError("entry cell out of range", entry_at);
    if (seen[e.cell]) throw FormatError("duplicate entry cell " + std::to_string(e.cell), entry_at);
    if (!std::isfinite(e.value)) throw FormatError("non-finite coefficient", entry_at + 8);
    if (!code.entries.empty() && std::abs(code.entries.back().value) < std::abs(e.value))
      throw FormatError("entries not sorted by decreasing magnitude", entry_at);
    seen[e.cell] = true;
    code.entries.push_back(e);
  }
  return code;
}

RankOrderCode deserialize(const std::string& bytes) { return deserialize(std::span<const char>(bytes.data(), bytes.size())); }

Image straightforward_decode(const AnalysisOperator& op, const RankOrderCode& code) {
  check_header_matches(code.header, op);
  return op.adjoint(masked_coefficients(code));
}

double synthesis_gain(const AnalysisOperator& op) {
  const std::vector<double> ones(op.cols(), 1.0);
  const auto response = op.forward(ones);
  double energy = 0.0;
  for (double v : response) energy += v * v;
  if (!(energy > 0.0)) throw ConsistencyError("operator maps the constant image to zero; no DC gain to normalize");
  return static_cast<double>(op.cols()) / energy;
}

Image normalized_straightforward_decode(const AnalysisOperator& op, const RankOrderCode& code) {
  Image out = straightforward_decode(op, code);
  const double gain = synthesis_gain(op);
  for (double& v : out.samples()) v *= gain;
  return out;
}

}  // namespace retina
