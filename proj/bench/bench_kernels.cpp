// Serial reference vs OpenMP kernels at desk and full tower sizes.
// Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "cmfplan/acmt.hpp"
#include "cmfplan/kernels.hpp"

using namespace cmf;
namespace k = cmf::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

std::vector<Vec3> random_points(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-60.0, 60.0);
  std::vector<Vec3> v(n);
  for (auto& p : v) p = Vec3(u(rng), u(rng), u(rng));
  return v;
}

// Correlation-sized a^T b: (d x n)^T (d x n).
template <bool Parallel>
void BM_GemmTN(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 64;
  const auto a = random_values(d * n, 1), b = random_values(d * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::parallel::gemm_tn({a.data(), d, n}, {b.data(), d, n}, 1.0, {c.data(), n, n});
    else
      k::serial::gemm_tn({a.data(), d, n}, {b.data(), d, n}, 1.0, {c.data(), n, n});
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(d * n * n));
}

template <bool Parallel>
void BM_Linear(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t in = 128, out = 128;
  const auto w = random_values(out * in, 3), x = random_values(in * n, 4);
  const std::vector<double> bias(out, 0.1);
  std::vector<double> y(out * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::parallel::linear_forward({w.data(), out, in}, bias, {x.data(), in, n}, {y.data(), out, n});
    else
      k::serial::linear_forward({w.data(), out, in}, bias, {x.data(), in, n}, {y.data(), out, n});
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_KernelDisplacement(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto face = random_points(n, 5), pre = random_points(n, 6);
  auto post = pre;
  for (auto& p : post) p += Vec3(1.0, 2.0, -0.5);
  for (auto _ : state) {
    auto v = Parallel ? k::parallel::kernel_displacement(face, pre, post, 15.0)
                      : k::serial::kernel_displacement(face, pre, post, 15.0);
    benchmark::DoNotOptimize(v.data());
  }
}

template <bool Parallel>
void BM_Knn(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto q = random_points(n, 7), s = random_points(n / 4, 8);
  for (auto _ : state) {
    auto nb = Parallel ? k::parallel::knn(q, s, 3) : k::serial::knn(q, s, 3);
    benchmark::DoNotOptimize(nb.index.data());
  }
}

template <bool Parallel>
void BM_BallQuery(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto src = random_points(n, 9), centers = random_points(n / 4, 10);
  for (auto _ : state) {
    auto g = Parallel ? k::parallel::ball_query(centers, src, 20.0, 16)
                      : k::serial::ball_query(centers, src, 20.0, 16);
    benchmark::DoNotOptimize(g.members.data());
  }
}

template <bool Parallel>
void BM_FpsStep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto pts = random_points(n, 11);
  std::vector<double> d(n, 1e300);
  std::size_t latest = 0;
  for (auto _ : state) {
    latest = Parallel ? k::parallel::fps_step(pts, latest, d) : k::serial::fps_step(pts, latest, d);
    benchmark::DoNotOptimize(latest);
  }
}

// Whole forward pass of the desk-scale model.
void BM_AcmtForward(benchmark::State& state) {
  const auto model = make_acmt(desk_scale_config(), Direction::FaceToBone, 1);
  const auto face = random_points(256, 12), bone = random_points(256, 13);
  const auto mv = random_points(256, 14);
  for (auto _ : state) {
    auto v = acmt_forward(model, face, bone, mv);
    benchmark::DoNotOptimize(v.values().data());
  }
}

}  // namespace

BENCHMARK(BM_GemmTN<false>)->Name("gemm_tn/serial")->Arg(256)->Arg(1024);
BENCHMARK(BM_GemmTN<true>)->Name("gemm_tn/parallel")->Arg(256)->Arg(1024);
BENCHMARK(BM_Linear<false>)->Name("linear_forward/serial")->Arg(256)->Arg(4096);
BENCHMARK(BM_Linear<true>)->Name("linear_forward/parallel")->Arg(256)->Arg(4096);
BENCHMARK(BM_KernelDisplacement<false>)->Name("kernel_displacement/serial")->Arg(256)->Arg(4096);
BENCHMARK(BM_KernelDisplacement<true>)->Name("kernel_displacement/parallel")->Arg(256)->Arg(4096);
BENCHMARK(BM_Knn<false>)->Name("knn/serial")->Arg(1024)->Arg(4096);
BENCHMARK(BM_Knn<true>)->Name("knn/parallel")->Arg(1024)->Arg(4096);
BENCHMARK(BM_BallQuery<false>)->Name("ball_query/serial")->Arg(1024)->Arg(4096);
BENCHMARK(BM_BallQuery<true>)->Name("ball_query/parallel")->Arg(1024)->Arg(4096);
BENCHMARK(BM_FpsStep<false>)->Name("fps_step/serial")->Arg(4096)->Arg(16384);
BENCHMARK(BM_FpsStep<true>)->Name("fps_step/parallel")->Arg(4096)->Arg(16384);
BENCHMARK(BM_AcmtForward)->Name("acmt_forward/desk")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
