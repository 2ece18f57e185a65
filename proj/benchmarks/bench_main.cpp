#include <benchmark/benchmark.h>

#include <random>

#include "relseg/inference.hpp"
#include "relseg/metrics.hpp"
#include "relseg/opsearch.hpp"
#include "relseg/phantom.hpp"
#include "relseg/rabc.hpp"
#include "relseg/tensor.hpp"

using namespace relseg;

namespace {

Tensor random_map(std::uint64_t seed, std::vector<int> shape, float lo, float hi) {
    std::mt19937_64 rng(seed);
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        t[i] = lo + (hi - lo) * static_cast<float>(static_cast<double>(rng() >> 11) * 0x1.0p-53);
    }
    return t;
}

} // namespace

// deployment-side budget: flip4 averaging + threshold + morphology on a
// 224x224 probability map, single-threaded
static void BM_Pipeline224_Flip4(benchmark::State& state) {
    const Tensor prob = random_map(1, {224, 224}, 0.0f, 1.0f);
    const OperatingPoint op{0.30f, 0.0f, TtaMode::Flip4, true, true};
    for (auto _ : state) {
        benchmark::DoNotOptimize(run_pipeline(identity_prob_source(), prob, op).final_mask);
    }
}
BENCHMARK(BM_Pipeline224_Flip4)->Unit(benchmark::kMillisecond);

static void BM_Pipeline224_RawP0(benchmark::State& state) {
    const Tensor prob = random_map(2, {224, 224}, 0.0f, 1.0f);
    for (auto _ : state) {
        benchmark::DoNotOptimize(run_pipeline(identity_prob_source(), prob, raw_p0()).final_mask);
    }
}
BENCHMARK(BM_Pipeline224_RawP0)->Unit(benchmark::kMillisecond);

static void BM_Conv2d3x3(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0));
    const Tensor in = random_map(3, {c, 64, 64}, -1.0f, 1.0f);
    const Tensor wt = random_map(4, {c, c, 3, 3}, -0.2f, 0.2f);
    const std::vector<float> bias(static_cast<size_t>(c), 0.1f);
    for (auto _ : state) {
        benchmark::DoNotOptimize(conv2d(in, wt, bias, Padding::Same));
    }
    state.SetItemsProcessed(state.iterations() * 64 * 64 * c * c * 9);
}
BENCHMARK(BM_Conv2d3x3)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

static void BM_SquaredEdt224(benchmark::State& state) {
    Tensor seeds({224, 224});
    std::mt19937_64 rng(5);
    for (int i = 0; i < 80; ++i) {
        seeds[static_cast<std::int64_t>(rng() % (224 * 224))] = 1.0f;
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(squared_edt(seeds));
    }
}
BENCHMARK(BM_SquaredEdt224)->Unit(benchmark::kMillisecond);

static void BM_BoundaryDistance224(benchmark::State& state) {
    PhantomSpec spec;
    spec.n_images = 2;
    spec.seed = 9;
    const auto images = gen_phantom_memory(spec);
    const Tensor pred = threshold(images[0].prob, 0.5f);
    for (auto _ : state) {
        benchmark::DoNotOptimize(boundary_distance(pred, images[0].gt));
    }
}
BENCHMARK(BM_BoundaryDistance224)->Unit(benchmark::kMillisecond);

static void BM_RabcApply64(benchmark::State& state) {
    PhantomSpec spec;
    spec.n_images = 1;
    spec.height = 64;
    spec.width = 64;
    spec.seed = 11;
    const auto images = gen_phantom_memory(spec);
    RabcConfig cfg;
    cfg.c_dec = 8;
    const RabcParams params = RabcParams::random_init(cfg, 3);
    const RabcCues cues =
        RabcCues::make(images[0].logits, images[0].cue_b, images[0].cue_u, images[0].phi);
    for (auto _ : state) {
        benchmark::DoNotOptimize(rabc_apply(cues, params).z_hat);
    }
}
BENCHMARK(BM_RabcApply64)->Unit(benchmark::kMillisecond);

static void BM_GridSearch(benchmark::State& state) {
    PhantomSpec spec;
    spec.n_images = 8;
    spec.height = 64;
    spec.width = 64;
    spec.noise = 0.6f;
    spec.seed = 13;
    const auto images = gen_phantom_memory(spec);
    std::vector<Tensor> probs, gts;
    for (const auto& img : images) {
        probs.push_back(img.prob);
        gts.push_back(img.gt);
    }
    SearchSpace space;
    space.taus = {0.2f, 0.3f, 0.4f, 0.5f};
    space.sigmas = {0.0f, 1.0f};
    space.tta_modes = {TtaMode::None};
    for (auto _ : state) {
        benchmark::DoNotOptimize(grid_search(probs, gts, space).best);
    }
}
BENCHMARK(BM_GridSearch)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
