// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include "oracles.hpp"
#include "retina/block_ops.hpp"
#include "retina/code.hpp"
#include "retina/dual.hpp"
#include "retina/errors.hpp"
#include "retina/frame_bounds.hpp"
#include "retina/parallel.hpp"

using namespace retina;
using Clock = std::chrono::steady_clock;

namespace {

const std::filesystem::path kData = RETINA_TEST_DATA;
const std::string kBinary = RETINA_CODEC_BIN;
const std::vector<std::string> kCorpus = {"camera_33.pgm", "astronaut_33.pgm", "coins_33.pgm", "moon_33.pgm"};

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

AnalysisOperator make(std::size_t n, int k = 0, Boundary b = Boundary::zero, CoarseFilter coarse = CoarseFilter::scaling) {
  OperatorOptions o;
  o.boundary = b;
  o.coarse = coarse;
  return build_analysis_operator(grid_spec(n, k > 0 ? k : max_layers(n), {}), {}, o);
}

double rel_l2(std::span<const double> a, std::span<const double> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

std::string fmt(double v, int precision = 4) {
  if (std::isinf(v)) return "inf";
  std::ostringstream out;
  out.precision(precision);
  out << v;
  return out.str();
}

// 1. Exact dual reconstruction at 33x33.
void criterion1(Outcome& o) {
  const auto t0 = Clock::now();
  oracle::TempDir cache("acc1");
  const auto op = make(33);
  const auto dual = build_dual(op, 128, cache.path);
  double worst = 0.0, worst_psnr = std::numeric_limits<double>::infinity();
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto f = oracle::random_vector(op.cols(), 500 + s, 0.0, 255.0);
    const auto code = deserialize(serialize(encode(op.forward(f), header_for(op))));
    const Image out = dual_decode(op, dual, code);
    worst = std::max(worst, rel_l2(out.samples(), f));
    worst_psnr = std::min(worst_psnr, psnr(f, out.samples()));
  }
  const double secs = seconds_since(t0);
  o.detail << "worst rel l2 " << fmt(worst, 3) << ", worst PSNR " << fmt(worst_psnr) << " dB, build residual "
           << fmt(dual.residual, 3) << ", " << fmt(secs, 3) << " s";
  o.require(worst <= 1e-10, "rel l2 <= 1e-10");
  o.require(worst_psnr >= 200.0, "PSNR >= 200 dB");
  o.require(secs <= 600.0, "runtime <= 10 min");
}

// 2. Straightforward ceiling on natural images.
void criterion2(Outcome& o) {
  const auto op = make(33);
  for (const auto& name : kCorpus) {
    const Image img = read_pgm(kData / name);
    const double db = psnr(img, normalized_straightforward_decode(op, encode(op.forward(img), header_for(op))));
    o.detail << name << " " << fmt(db) << " dB; ";
    o.require(db >= 20.0 && db <= 35.0, name + " in 20..35 dB");
  }
  const Image cam = read_pgm(kData / "camera_257.pgm");
  const auto big = make(257);
  const double db = psnr(cam, normalized_straightforward_decode(big, encode(big.forward(cam), header_for(big))));
  o.detail << "camera_257 " << fmt(db) << " dB (target 27.9 +/- 3)";
  o.require(std::abs(db - 27.9) <= 3.0, "camera_257 within 27.9 +/- 3 dB");
}

// 3. Dual decoding dominates at every fraction; > 100 dB gap at full rate.
void criterion3(Outcome& o) {
  oracle::TempDir cache("acc3");
  const auto op = make(33);
  const auto dual = build_dual(op, 128, cache.path);
  double min_margin = std::numeric_limits<double>::infinity(), min_gap = std::numeric_limits<double>::infinity();
  for (const auto& name : kCorpus) {
    const Image img = read_pgm(kData / name);
    const auto full = encode(op.forward(img), header_for(op));
    o.detail << name << ":";
    for (double f : {0.005, 0.01, 0.05, 0.1, 1.0}) {
      const auto code = truncate(full, f);
      const double sf = psnr(img, normalized_straightforward_decode(op, code));
      const double du = psnr(img, dual_decode(op, dual, code));
      o.detail << ' ' << fmt(sf, 3) << '/' << fmt(du, 3);
      min_margin = std::min(min_margin, du - sf);
      o.require(du >= sf - 0.1, name + " dominance at " + fmt(f));
      if (f == 1.0) {
        min_gap = std::min(min_gap, du - sf);
        o.require(du - sf > 100.0, name + " gap > 100 dB");
      }
    }
    o.detail << "; ";
  }
  o.detail << "min margin " << fmt(min_margin) << " dB, min full-rate gap " << fmt(min_gap) << " dB";
}

// 4. Frame condition on random images, and the collapse without the scaling function.
void criterion4(Outcome& o) {
  const auto t0 = Clock::now();
  for (std::size_t n : {17u, 33u}) {
    const auto op = make(n);
    try {
      const auto r = verify_frame_condition(op, 1000, 42 + n);
      o.detail << "N=" << n << " alpha " << fmt(r.alpha, 3) << " <= [" << fmt(r.empirical_min) << ", "
               << fmt(r.empirical_max) << "] <= beta " << fmt(r.beta) << "; ";
      o.require(r.alpha > 0.0, "alpha > 0");
      o.require(r.alpha <= r.empirical_min && r.empirical_max <= r.beta, "ratios within bounds");
    } catch (const FrameConditionViolated& e) {
      o.require(false, e.what());
    }
  }
  const std::size_t n = 32;
  const std::vector<double> flat(n * n, 1.0);
  const double alpha = alpha_bound({}, n, max_layers(n));
  const double with = energy_ratio(make(n, 0, Boundary::periodic), flat);
  const double without = energy_ratio(make(n, 0, Boundary::periodic, CoarseFilter::band_pass), flat);
  const double secs = seconds_since(t0);
  o.detail << "constant image ratio " << fmt(with) << " with scaling function, " << fmt(without, 3)
           << " without (alpha " << fmt(alpha, 3) << "); " << fmt(secs, 3) << " s";
  o.require(with >= alpha, "constant ratio >= alpha with scaling function");
  o.require(without < 1e-12 && without < alpha, "constant ratio collapses without scaling function");
  o.require(secs <= 120.0, "runtime <= 2 min");
}

// 5. Out-of-core inversion: residual, block-size independence, block-bounded memory.
void criterion5(Outcome& o) {
  const auto t0 = Clock::now();
  oracle::TempDir dir("acc5");
  const std::size_t workers = worker_count();
  double worst_res = 0.0, worst_agree = 0.0, worst_mem = 0.0;
  for (std::size_t n : {64u, 300u, 1000u}) {
    const Eigen::MatrixXd m = oracle::random_spd(n, 900 + n, static_cast<double>(n));
    std::vector<double> dense(n * n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) dense[r * n + c] = m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    std::vector<double> reference;
    for (std::size_t b : {32u, 64u, 128u}) {
      const auto tag = std::to_string(n) + "_" + std::to_string(b);
      const auto store = store_from_dense(dir.path / ("m" + tag), n, n, b, dense);
      block_memory::reset_peak();
      const std::size_t base = block_memory::live_elements();
      const auto inv = invert_recursive(store, dir.path / ("i" + tag));
      const double peak = static_cast<double>(block_memory::peak_elements() - base);
      const double res = identity_residual(BlockView::of(store), BlockView::of(inv)) / std::sqrt(static_cast<double>(n));
      auto values = store_to_dense(inv);
      worst_res = std::max(worst_res, res);
      worst_mem = std::max(worst_mem, peak / (4.0 * static_cast<double>(b * b * workers)));
      o.require(res <= 1e-8, "residual n=" + std::to_string(n) + " B=" + std::to_string(b));
      o.require(peak < 4.0 * static_cast<double>(b * b * workers), "memory n=" + std::to_string(n) + " B=" + std::to_string(b));
      if (reference.empty()) {
        reference = std::move(values);
      } else {
        const double agree = rel_l2(values, reference);
        worst_agree = std::max(worst_agree, agree);
        o.require(agree <= 1e-10, "block-size agreement n=" + std::to_string(n) + " B=" + std::to_string(b));
      }
      std::filesystem::remove_all(dir.path / ("m" + tag));
      std::filesystem::remove_all(dir.path / ("i" + tag));
    }
  }
  const double secs = seconds_since(t0);
  o.detail << "worst residual " << fmt(worst_res, 3) << ", worst cross-B difference " << fmt(worst_agree, 3)
           << ", worst peak / (4 B^2 x " << workers << " workers) " << fmt(worst_mem, 3) << ", " << fmt(secs, 3) << " s";
  o.require(secs <= 300.0, "runtime <= 5 min");
}

// 6. Adjoint identity and naive convolution oracle.
void criterion6(Outcome& o) {
  const auto op = make(33);
  double worst_adj = 0.0, worst_fwd = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto f = oracle::random_vector(op.cols(), 7000 + 2 * s, -1.0, 1.0);
    const auto c = oracle::random_vector(op.rows(), 7001 + 2 * s, -1.0, 1.0);
    const auto phif = op.forward(f);
    const Image back = op.adjoint(c);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t p = 0; p < c.size(); ++p) lhs += phif[p] * c[p];
    for (std::size_t a = 0; a < f.size(); ++a) rhs += f[a] * back.samples()[a];
    worst_adj = std::max(worst_adj, std::abs(lhs - rhs) / std::abs(lhs));
  }
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto f = oracle::random_vector(op.cols(), 8000 + s, 0.0, 255.0);
    worst_fwd = std::max(worst_fwd, rel_l2(op.forward(f), oracle::convolve(f, 33, op.grid().layers)));
  }
  o.detail << "adjoint rel error " << fmt(worst_adj, 3) << ", forward vs naive convolution " << fmt(worst_fwd, 3);
  o.require(worst_adj <= 1e-12, "adjoint identity <= 1e-12");
  o.require(worst_fwd <= 1e-10, "forward oracle <= 1e-10");
}

// 7. Coefficient count at 257.
void criterion7(Outcome& o) {
  const int k = max_layers(257);
  const auto g = grid_spec(257, k, {});
  const double target = 4.0 / 3.0 * 257.0 * 257.0;
  const double dev = std::abs(static_cast<double>(g.total_cells) - target) / target;
  o.detail << "K=" << k << " total_cells " << g.total_cells << " vs " << fmt(target, 7) << " (" << fmt(100 * dev, 3)
           << "%)";
  o.require(dev <= 0.02, "within 2%");
}

// 8. The analyze command reports a bounded condition estimate and the reference value.
void criterion8(Outcome& o) {
  oracle::TempDir dir("acc8");
  const auto report = dir.path / "report.txt";
  const std::string cmd = kBinary + " analyze --size 33 --trials 100 -o " + report.string() + " > /dev/null 2>&1";
  const int raw = std::system(cmd.c_str());
  o.require(WIFEXITED(raw) && WEXITSTATUS(raw) == 0, "analyze exits 0");
  std::ifstream in(report);
  std::map<std::string, double> kv;
  std::string key;
  double value;
  while (in >> key >> value) kv[key] = value;
  const bool has = kv.count("condition_estimate") && kv.count("condition_reference_257");
  o.require(has, "report contains condition_estimate and condition_reference_257");
  if (!has) return;
  const double c = kv["condition_estimate"];
  o.detail << "condition estimate " << fmt(c) << " at 33x33, reference " << fmt(kv["condition_reference_257"]);
  o.require(std::isfinite(c) && c < 100.0, "finite and < 100");
  o.require(kv["condition_reference_257"] == 16.0, "reference 16 logged");
}

// 9. Stream round trip, determinism, corruption.
void criterion9(Outcome& o) {
  const auto op = make(33);
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-300.0, 300.0), frac(0.0, 1.0);
  std::size_t round_trips = 0, rejected = 0, trials = 0;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> c(op.rows());
    for (double& v : c) v = u(rng);
    const auto code = truncate(encode(c, header_for(op)), std::max(frac(rng), 1e-4));
    const std::string bytes = serialize(code);
    if (deserialize(bytes) == code) ++round_trips;
    // One random byte changed to a different value.
    std::string bad = bytes;
    const std::size_t at = rng() % bad.size();
    bad[at] = static_cast<char>(bad[at] ^ static_cast<char>(1 + rng() % 255));
    ++trials;
    try {
      deserialize(bad);
    } catch (const FormatError&) {
      ++rejected;
    }
  }
  const Image img = read_pgm(kData / "camera_33.pgm");
  const std::string first = serialize(encode(op.forward(img), header_for(op)));
  bool identical = true;
  const std::size_t saved = worker_count();
  for (std::size_t workers : {1u, 2u, 5u}) {
    set_worker_count(workers);
    identical = identical && serialize(encode(op.forward(img), header_for(op))) == first;
  }
  set_worker_count(saved);
  o.detail << round_trips << "/100 round trips, " << rejected << "/" << trials
           << " corrupted streams rejected, repeated encodes " << (identical ? "identical" : "DIFFER");
  o.require(round_trips == 100, "round trip");
  o.require(rejected == trials, "corruption rejected");
  o.require(identical, "byte-identical encodes");
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<void(Outcome&)>>> criteria = {
      {"exact dual-frame reconstruction", criterion1}, {"straightforward decoder ceiling", criterion2},
      {"progressive dominance", criterion3},           {"frame condition suite", criterion4},
      {"out-of-core inversion oracle", criterion5},    {"adjoint and oracle identities", criterion6},
      {"coefficient count", criterion7},               {"conditioning report", criterion8},
      {"stream round trip and determinism", criterion9},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first
              << "): " << o.detail.str() << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
