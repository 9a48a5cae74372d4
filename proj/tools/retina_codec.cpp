// retina-codec: encode, decode, build-dual, analyze and psnr on 8-bit square PGM images.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "retina/analysis.hpp"
#include "retina/code.hpp"
#include "retina/dual.hpp"
#include "retina/errors.hpp"
#include "retina/frame_bounds.hpp"
#include "retina/image.hpp"
#include "retina/parallel.hpp"
#include "retina/pyramid.hpp"

namespace {

using namespace retina;

enum Exit : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kFormat = 3,
  kNumerical = 4,
  kResource = 5,
  kStorage = 6,
};

struct Config {
  std::string input;
  std::string second;
  std::string output;
  std::string reference;
  std::string cache;
  std::string mode = "straightforward";
  std::string boundary = "zero";
  int layers = 0;
  double fraction = 1.0;
  std::size_t block_size = 128;
  std::size_t threads = 0;
  std::size_t size = 33;
  std::size_t trials = 1000;
  bool build_dual = false;
};

/// Thrown for conditions that are the caller's fault but are not library parameter errors.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string format_db(double db) {
  if (std::isinf(db)) return "inf";
  std::ostringstream out;
  out.precision(4);
  out << std::fixed << db;
  return out.str();
}

Boundary parse_boundary(const std::string& name) {
  if (name == "zero") return Boundary::zero;
  if (name == "periodic") return Boundary::periodic;
  throw UsageError("unknown boundary '" + name + "' (expected zero or periodic)");
}

std::filesystem::path cache_root(const Config& cfg) {
  return cfg.cache.empty() ? default_cache_root() : std::filesystem::path(cfg.cache);
}

AnalysisOperator operator_for(std::size_t side, int layers, Boundary boundary, const DoGParams& params = {}) {
  const int k = layers > 0 ? layers : max_layers(side);
  OperatorOptions options;
  options.boundary = boundary;
  return build_analysis_operator(grid_spec(side, k, params), params, options);
}

AnalysisOperator operator_for(const CodeHeader& h) {
  return operator_for(h.image_side, h.layers, h.boundary, h.params);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw StorageError("cannot write " + path);
}

void require_input(const std::string& path) {
  if (!std::filesystem::is_regular_file(path)) throw UsageError("input file not found: " + path);
}

void check_fraction(double f) {
  if (!(f > 0.0 && f <= 1.0)) throw UsageError("--fraction must lie in (0, 1]");
}

int cmd_encode(const Config& cfg) {
  require_input(cfg.input);
  check_fraction(cfg.fraction);
  const Image image = read_pgm(cfg.input);
  const auto op = operator_for(image.side(), cfg.layers, parse_boundary(cfg.boundary));
  RankOrderCode code = encode(op.forward(image), header_for(op));
  if (cfg.fraction < 1.0) code = truncate(code, cfg.fraction);
  write_file(cfg.output, serialize(code));
  std::cout << "N=" << image.side() << " K=" << op.grid().layers << " total_cells=" << op.rows()
            << " N_s=" << code.retained() << '\n';
  return kOk;
}

int cmd_decode(const Config& cfg) {
  require_input(cfg.input);
  check_fraction(cfg.fraction);
  if (!cfg.reference.empty()) require_input(cfg.reference);
  if (cfg.mode != "straightforward" && cfg.mode != "dual")
    throw UsageError("--mode must be straightforward or dual");

  RankOrderCode code = deserialize(read_file(cfg.input));
  if (cfg.fraction < 1.0) code = truncate(code, cfg.fraction);
  const auto op = operator_for(code.header);

  Image out;
  if (cfg.mode == "dual") {
    const auto root = cache_root(cfg);
    std::optional<DualOperatorCache> cache = cfg.build_dual ? build_dual(op, cfg.block_size, root) : open_dual(op, root);
    if (!cache) {
      std::ostringstream msg;
      msg << "no dual operator cached under " << root.string() << " for N=" << code.header.image_side
          << " K=" << code.header.layers << "; run: retina-codec build-dual --size " << code.header.image_side
          << " --layers " << code.header.layers << " --boundary " << to_string(code.header.boundary);
      if (!cfg.cache.empty()) msg << " --cache " << cfg.cache;
      msg << "  (or pass --build-dual)";
      throw StorageError(msg.str());
    }
    out = dual_decode(op, *cache, code);
  } else {
    out = normalized_straightforward_decode(op, code);
  }
  if (!cfg.output.empty()) write_pgm(cfg.output, out);

  std::cout << "mode=" << cfg.mode << " N_s=" << code.retained() << " fraction=" << code.fraction();
  if (!cfg.reference.empty()) {
    const Image ref = read_pgm(cfg.reference);
    if (ref.side() != out.side()) throw UsageError("reference image size differs from the decoded image");
    std::cout << " psnr_db=" << format_db(psnr(ref, out));
  }
  std::cout << '\n';
  return kOk;
}

int cmd_build_dual(const Config& cfg) {
  std::size_t side = cfg.size;
  int layers = cfg.layers;
  Boundary boundary = parse_boundary(cfg.boundary);
  DoGParams params;
  if (!cfg.input.empty()) {
    // Take the geometry from an existing code stream.
    require_input(cfg.input);
    const CodeHeader h = deserialize(read_file(cfg.input)).header;
    side = h.image_side;
    layers = h.layers;
    boundary = h.boundary;
    params = h.params;
  }
  const auto op = operator_for(side, layers, boundary, params);
  const auto cache = build_dual(op, cfg.block_size, cache_root(cfg));
  std::cout << (cache.reused ? "reused " : "built ") << cache.directory.string() << " residual=" << cache.residual
            << '\n';
  return kOk;
}

int cmd_analyze(const Config& cfg) {
  if (cfg.trials < 1) throw UsageError("--trials must be >= 1");
  const auto op = operator_for(cfg.size, cfg.layers, parse_boundary(cfg.boundary));
  const FrameReport report = verify_frame_condition(op, cfg.trials);
  if (!cfg.output.empty()) write_file(cfg.output, to_key_value(report));
  std::cout << to_table(report);
  return kOk;
}

int cmd_psnr(const Config& cfg) {
  require_input(cfg.input);
  require_input(cfg.second);
  const Image a = read_pgm(cfg.input);
  const Image b = read_pgm(cfg.second);
  if (a.side() != b.side())
    throw UsageError("image dimensions differ: " + std::to_string(a.side()) + " vs " + std::to_string(b.side()));
  std::cout << format_db(psnr(a, b)) << '\n';
  return kOk;
}

int report(const char* kind, const std::exception& e, int code) {
  std::cerr << "retina-codec: " << kind << ": " << e.what() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  Config cfg;
  CLI::App app{"Scalable grayscale codec built on a rank-ordered DoG filter bank"};
  app.require_subcommand(1);
  app.add_option("--threads", cfg.threads, "Worker threads (0 = all cores)");

  auto* enc = app.add_subcommand("encode", "Encode a PGM image into a rank order code stream");
  enc->add_option("input", cfg.input, "Input PGM (8-bit, square)")->required();
  enc->add_option("-o,--output", cfg.output, "Output code stream")->required();
  enc->add_option("--layers", cfg.layers, "Number of layers K (default: maximal)");
  enc->add_option("--fraction", cfg.fraction, "Fraction of coefficients to keep, in (0, 1]");
  enc->add_option("--boundary", cfg.boundary, "Border handling: zero or periodic");

  auto* dec = app.add_subcommand("decode", "Decode a code stream into a PGM image");
  dec->add_option("input", cfg.input, "Code stream")->required();
  dec->add_option("-o,--output", cfg.output, "Output PGM");
  dec->add_option("--mode", cfg.mode, "straightforward or dual");
  dec->add_option("--fraction", cfg.fraction, "Fraction of all cells to use, in (0, 1]");
  dec->add_option("--reference", cfg.reference, "Original image; prints PSNR");
  dec->add_option("--cache", cfg.cache, "Dual operator cache directory");
  dec->add_option("--block-size", cfg.block_size, "Block size for --build-dual")->check(CLI::Range(16, 1 << 16));
  dec->add_flag("--build-dual", cfg.build_dual, "Build the dual operator if it is not cached");

  auto* bd = app.add_subcommand("build-dual", "Compute and cache the inverse frame operator");
  bd->add_option("input", cfg.input, "Optional code stream whose geometry to use");
  bd->add_option("--size", cfg.size, "Image side N");
  bd->add_option("--layers", cfg.layers, "Number of layers K (default: maximal)");
  bd->add_option("--boundary", cfg.boundary, "Border handling: zero or periodic");
  bd->add_option("--block-size", cfg.block_size, "Block size B (>= 16)")->check(CLI::Range(16, 1 << 16));
  bd->add_option("--cache", cfg.cache, "Cache directory");

  auto* an = app.add_subcommand("analyze", "Check the frame condition and estimate conditioning");
  an->add_option("--size", cfg.size, "Image side N");
  an->add_option("--layers", cfg.layers, "Number of layers K (default: maximal)");
  an->add_option("--boundary", cfg.boundary, "Border handling: zero or periodic");
  an->add_option("--trials", cfg.trials, "Random images to test");
  an->add_option("-o,--output", cfg.output, "Key-value report file");

  auto* ps = app.add_subcommand("psnr", "PSNR between two 8-bit PGM images");
  ps->add_option("a", cfg.input, "First image")->required();
  ps->add_option("b", cfg.second, "Second image")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (cfg.threads > 0) set_worker_count(cfg.threads);
    if (enc->parsed()) return cmd_encode(cfg);
    if (dec->parsed()) return cmd_decode(cfg);
    if (bd->parsed()) return cmd_build_dual(cfg);
    if (an->parsed()) return cmd_analyze(cfg);
    if (ps->parsed()) return cmd_psnr(cfg);
  } catch (const UsageError& e) {
    return report("usage error", e, kUsage);
  } catch (const InvalidParameter& e) {
    return report("invalid parameter", e, kUsage);
  } catch (const FormatError& e) {
    return report("format error", e, kFormat);
  } catch (const UnsupportedInput& e) {
    return report("unsupported input", e, kFormat);
  } catch (const NumericalError& e) {
    return report("numerical error", e, kNumerical);
  } catch (const ConsistencyError& e) {
    return report("consistency error", e, kNumerical);
  } catch (const ResourceError& e) {
    return report("resource error", e, kResource);
  } catch (const StorageError& e) {
    return report("storage error", e, kStorage);
  } catch (const CorruptionError& e) {
    return report("corruption error", e, kStorage);
  } catch (const std::exception& e) {
    return report("error", e, kFailure);
  }
  return kUsage;
}
