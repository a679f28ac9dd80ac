#include <random>

#include <benchmark/benchmark.h>

#include "retinareg/features.hpp"
#include "retinareg/geometry.hpp"
#include "retinareg/keypoints.hpp"
#include "retinareg/matching.hpp"
#include "retinareg/synth.hpp"

using namespace retinareg;

namespace {

CorrespondenceSet noisy_pairs(std::size_t n, double outlier_fraction, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(0.0, 511.0);
  std::normal_distribution<double> noise(0.0, 0.5);
  const Homography h = Homography::from_matrix(Eigen::Matrix3d{{1.02, 0.03, 6.0}, {-0.02, 0.98, -4.0}, {1e-5, -2e-5, 1.0}});
  CorrespondenceSet c;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 p{coord(rng), coord(rng)};
    if (i < n * outlier_fraction) {
      c.push_back({p, {coord(rng), coord(rng)}});
    } else {
      const Point2 q = h.apply(p);
      c.push_back({p, {q.x + noise(rng), q.y + noise(rng)}});
    }
  }
  return c;
}

const SynthPair& sample_pair() {
  static const SynthPair pair = synth_generate(SynthConfig{});
  return pair;
}

void BM_Dlt(benchmark::State& state) {
  const auto c = noisy_pairs(static_cast<std::size_t>(state.range(0)), 0.0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_homography_dlt(c));
}
BENCHMARK(BM_Dlt)->Arg(4)->Arg(64)->Arg(1024);

void BM_Ransac(benchmark::State& state) {
  const auto c = noisy_pairs(static_cast<std::size_t>(state.range(0)), 0.5, 2);
  RansacConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(ransac_homography(c, cfg));
}
BENCHMARK(BM_Ransac)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_Extract(benchmark::State& state) {
  const ImageBuffer img = preprocess_image(sample_pair().image_a, Modality::kSynthA);
  for (auto _ : state) benchmark::DoNotOptimize(reference_extract(img));
}
BENCHMARK(BM_Extract)->Unit(benchmark::kMillisecond);

void BM_HeatmapAndNms(benchmark::State& state) {
  const auto fm = reference_extract(preprocess_image(sample_pair().image_a, Modality::kSynthA));
  for (auto _ : state) benchmark::DoNotOptimize(extract_keypoints(confidence_heatmap(fm), 4000, 0.0, 4.0));
}
BENCHMARK(BM_HeatmapAndNms)->Unit(benchmark::kMillisecond);

void BM_MutualNn(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  std::normal_distribution<float> g;
  DescriptorSet a(n, 256), b(n, 256);
  for (std::size_t i = 0; i < n; ++i)
    for (int k = 0; k < 256; ++k) {
      a.row(i)[k] = g(rng);
      b.row(i)[k] = g(rng);
    }
  for (auto _ : state) benchmark::DoNotOptimize(mutual_nn_match(a, b));
}
BENCHMARK(BM_MutualNn)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
