#include <benchmark/benchmark.h>

#include <random>

#include "scaforge/keyrank.hpp"
#include "scaforge/neural_net.hpp"
#include "scaforge/random_forest.hpp"
#include "scaforge/simulator.hpp"
#include "scaforge/template_attack.hpp"

namespace {

using namespace scaforge;

TraceSet sim(std::size_t len, std::size_t n, std::uint64_t seed) {
    SimConfig c;
    c.trace_len = len;
    c.leak_points = FeatureIndexList{{len / 5, len / 2, len - 3}};
    c.seed = seed;
    return simulate(c, n);
}

void BM_ScoreKeys(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Matrix logits(n, 256);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g;
    for (auto& v : logits.values()) v = g(rng);
    const auto lp = LogProbMatrix::from_scores(logits);
    std::vector<std::uint8_t> pts(n);
    for (auto& p : pts) p = static_cast<std::uint8_t>(rng());
    for (auto _ : state) benchmark::DoNotOptimize(score_keys(lp, pts));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_ScoreKeys)->Arg(1000)->Arg(10000);

void BM_TemplatePredict(benchmark::State& state) {
    const auto prof = sim(100, 5000, 2);
    const auto att = sim(100, 1000, 3);
    const auto model = fit_templates(prof.samples, *prof.labels);
    for (auto _ : state) benchmark::DoNotOptimize(predict_log_proba(model, att.samples));
    state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_TemplatePredict)->Unit(benchmark::kMillisecond);

void BM_ForestFit(benchmark::State& state) {
    const auto prof = sim(static_cast<std::size_t>(state.range(0)), 2000, 4);
    ForestConfig cfg;
    cfg.n_trees = 10;
    for (auto _ : state) benchmark::DoNotOptimize(fit_forest(prof.samples, *prof.labels, cfg));
}
BENCHMARK(BM_ForestFit)->Arg(100)->Arg(700)->Unit(benchmark::kMillisecond);

void BM_DeskCnnForward(benchmark::State& state) {
    nn::Network net(nn::NetConfig::desk_cnn(128), 5);
    net.set_mode(nn::Mode::eval);
    const auto x = sim(128, 100, 6).samples;
    for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
    state.SetItemsProcessed(state.iterations() * 100);
}
BENCHMARK(BM_DeskCnnForward)->Unit(benchmark::kMillisecond);

void BM_DeskCnnTrainStep(benchmark::State& state) {
    nn::Network net(nn::NetConfig::desk_cnn(128), 5);
    const auto set = sim(128, 100, 7);
    nn::RmsProp opt({});
    const auto params = net.parameters();
    for (auto _ : state) {
        benchmark::DoNotOptimize(nn::loss_and_grad(net, set.samples, *set.labels));
        opt.step(params);
    }
}
BENCHMARK(BM_DeskCnnTrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
