#include <benchmark/benchmark.h>

#include <filesystem>
#include <random>

#include "retina/analysis.hpp"
#include "retina/block_ops.hpp"
#include "retina/code.hpp"

namespace {

using namespace retina;

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

std::filesystem::path scratch_dir(const char* tag) {
  auto p = std::filesystem::temp_directory_path() / (std::string("retina-bench-") + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

void BM_Forward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto op = build_analysis_operator(grid_spec(n, max_layers(n), {}), {});
  const auto f = random_values(n * n, 1);
  for (auto _ : state) benchmark::DoNotOptimize(op.forward(f));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(op.nonzeros()));
}
BENCHMARK(BM_Forward)->Arg(33)->Arg(129)->Arg(257)->Unit(benchmark::kMillisecond);

void BM_Adjoint(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto op = build_analysis_operator(grid_spec(n, max_layers(n), {}), {});
  const auto c = random_values(op.rows(), 2);
  for (auto _ : state) benchmark::DoNotOptimize(op.adjoint(c));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(op.nonzeros()));
}
BENCHMARK(BM_Adjoint)->Arg(33)->Arg(129)->Arg(257)->Unit(benchmark::kMillisecond);

void BM_Encode(benchmark::State& state) {
  const auto op = build_analysis_operator(grid_spec(257, 9, {}), {});
  const auto c = op.forward(random_values(op.cols(), 3));
  const auto header = header_for(op);
  for (auto _ : state) benchmark::DoNotOptimize(serialize(encode(c, header)));
}
BENCHMARK(BM_Encode)->Unit(benchmark::kMillisecond);

void BM_BlockGemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto b = static_cast<std::size_t>(state.range(1));
  const auto dir = scratch_dir("gemm");
  const auto a = store_from_dense(dir / "a", n, n, b, random_values(n * n, 4));
  const auto m = store_from_dense(dir / "b", n, n, b, random_values(n * n, 5));
  auto c = BlockMatrixStore::create(dir / "c", n, n, b);
  for (auto _ : state) block_gemm(BlockView::of(a), BlockView::of(m), BlockView::of(c), 1.0, 0.0);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
  std::filesystem::remove_all(dir);
}
BENCHMARK(BM_BlockGemm)->Args({512, 64})->Args({512, 128})->Args({1024, 128})->Unit(benchmark::kMillisecond);

void BM_InvertRecursive(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto b = static_cast<std::size_t>(state.range(1));
  const auto dir = scratch_dir("inv");
  // Diagonally dominant symmetric matrix: SPD without a Gram product.
  auto v = random_values(n * n, 6);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < r; ++c) v[c * n + r] = v[r * n + c];
  for (std::size_t r = 0; r < n; ++r) v[r * n + r] = static_cast<double>(n);
  const auto m = store_from_dense(dir / "m", n, n, b, v);
  std::size_t round = 0;
  for (auto _ : state) {
    const auto out = dir / ("inv" + std::to_string(round++));
    benchmark::DoNotOptimize(invert_recursive(m, out));
    state.PauseTiming();
    std::filesystem::remove_all(out);
    state.ResumeTiming();
  }
  std::filesystem::remove_all(dir);
}
BENCHMARK(BM_InvertRecursive)->Args({512, 64})->Args({1089, 128})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
