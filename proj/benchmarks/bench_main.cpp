#include <benchmark/benchmark.h>

#include "s2m/geometry.hpp"
#include "s2m/graph.hpp"
#include "s2m/implicit_field.hpp"
#include "s2m/marching_cubes.hpp"
#include "s2m/metrics.hpp"

using namespace s2m;

namespace {

ScalarField sphere_field(int n) {
  ScalarField f(n);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        f.values[static_cast<size_t>(f.index(i, j, k))] =
            0.5 + (0.3 - (f.center(i, j, k) - Vec3{0.5, 0.5, 0.5}).norm());
  return f;
}

PointCloud random_cloud(Rng& rng, int n) {
  PointCloud pc;
  for (int i = 0; i < n; ++i)
    pc.points.push_back({rng.next_double(), rng.next_double(), rng.next_double()});
  return pc;
}

void BM_MarchingCubes(benchmark::State& state) {
  const ScalarField f = sphere_field(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(marching_cubes(f, 0.5));
}

void BM_ChamferGrid(benchmark::State& state) {
  Rng rng(1);
  const PointCloud a = random_cloud(rng, static_cast<int>(state.range(0)));
  const PointCloud b = random_cloud(rng, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(chamfer_point_cloud(a, b));
}

void BM_ChamferBrute(benchmark::State& state) {
  Rng rng(1);
  const PointCloud a = random_cloud(rng, static_cast<int>(state.range(0)));
  const PointCloud b = random_cloud(rng, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(chamfer_point_cloud_brute(a, b));
}

void BM_Voxelize(benchmark::State& state) {
  const TriMesh m = normalize_mesh(make_shape_mesh({ShapeSpec::Kind::kSphere, 0.4}, 24));
  for (auto _ : state) benchmark::DoNotOptimize(voxelize(m, static_cast<int>(state.range(0))));
}

void BM_ImplicitDecoderForward(benchmark::State& state) {
  ImplicitDecoderConfig cfg;
  ParamStore ps;
  Rng rng(2);
  ensure_implicit_decoder(ps, cfg, rng);
  std::vector<double> latent(static_cast<size_t>(cfg.latent_dim), 0.1);
  const int pts = static_cast<int>(state.range(0));
  Tensor points({pts, 3});
  for (auto& v : points.data) v = rng.next_double();
  for (auto _ : state) benchmark::DoNotOptimize(implicit_forward(ps, cfg, latent, points));
}

BENCHMARK(BM_MarchingCubes)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ChamferGrid)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ChamferBrute)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Voxelize)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ImplicitDecoderForward)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
