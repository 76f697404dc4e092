#include <benchmark/benchmark.h>

#include "promptseg/network.hpp"
#include "promptseg/rng.hpp"

namespace {

using namespace promptseg;

Volume noise(Size3 size, std::uint64_t seed) {
  Volume v(size, 2);
  Rng rng(seed);
  for (float& x : v.data()) x = static_cast<float>(rng.normal());
  return v;
}

void BM_CropForward(benchmark::State& state) {
  const Network net = Network::initialized(NetworkSpec::fully_supervised({10, 10, 6}), 1);
  const Volume x = noise({10, 10, 6}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
}

void BM_VolumeForward(benchmark::State& state) {
  const Network net = Network::initialized(NetworkSpec::weakly_supervised(), 1);
  const Volume x = noise({64, 64, 24}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
}

void BM_VolumeGradient(benchmark::State& state) {
  const Network net = Network::initialized(NetworkSpec::weakly_supervised(), 1);
  const Volume x = noise({64, 64, 24}, 2);
  Gradients g = net.zero_gradients();
  for (auto _ : state) benchmark::DoNotOptimize(net.accumulate_gradient(x, 1, 1.0, g));
}

}  // namespace

BENCHMARK(BM_CropForward)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_VolumeForward)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_VolumeGradient)->Unit(benchmark::kMillisecond);
