#include <benchmark/benchmark.h>

#include "bdg/losses.hpp"
#include "bdg/rng.hpp"
#include "bdg/training.hpp"

using namespace bdg;

namespace {

ad::Tensor random_tensor(Rng& rng, std::size_t rows, std::size_t cols) {
    ad::Tensor t({rows, cols});
    for (auto& v : t.data()) v = rng.uniform(-1.0, 1.0);
    return t;
}

void BM_MatmulForward(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    ad::Tensor a = random_tensor(rng, n, n);
    ad::Tensor b = random_tensor(rng, n, n);
    for (auto _ : state) {
        ad::Tape tape(false);
        benchmark::DoNotOptimize(ad::matmul(tape, a, b));
    }
    state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_MatmulForward)->Arg(32)->Arg(64)->Arg(128);

void BM_MatmulBackward(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(2);
    ad::Tensor a = random_tensor(rng, n, n);
    ad::Tensor b = random_tensor(rng, n, n);
    for (auto _ : state) {
        ad::Tape tape;
        ad::Tensor at = tape.watch(a);
        ad::Tensor bt = tape.watch(b);
        ad::Tensor loss = ad::mean_all(tape, ad::matmul(tape, at, bt));
        tape.backward(loss);
        benchmark::DoNotOptimize(tape.grad_of(a));
    }
}
BENCHMARK(BM_MatmulBackward)->Arg(32)->Arg(64);

void BM_SoftmaxRows(benchmark::State& state) {
    Rng rng(3);
    ad::Tensor x = random_tensor(rng, 256, 32);
    for (auto _ : state) {
        ad::Tape tape(false);
        benchmark::DoNotOptimize(ad::softmax_rows(tape, x));
    }
}
BENCHMARK(BM_SoftmaxRows);

struct LossFixture {
    nn::Generator g_s{2, 64}, g_t{2, 64};
    nn::Classifier c_s{2, 64, 5}, c_t{2, 64, 5};
    ad::Tensor x_s, x_t;
    std::vector<int> y_s, yhat_t;

    LossFixture() {
        Rng rng(4);
        g_s.init(rng);
        g_t.init(rng);
        c_s.init(rng);
        c_t.init(rng);
        x_s = random_tensor(rng, 64, 2);
        x_t = random_tensor(rng, 64, 2);
        for (int i = 0; i < 64; ++i) {
            y_s.push_back(i % 5);
            yhat_t.push_back((i + 2) % 5);
        }
    }
};

void BM_TotalLossForward(benchmark::State& state) {
    LossFixture f;
    for (auto _ : state) {
        ad::Tape tape(false);
        losses::BatchBundle b =
            losses::make_bundle(tape, f.g_s, f.g_t, f.x_s, f.y_s, f.x_t, f.yhat_t, 5);
        benchmark::DoNotOptimize(
            losses::total_loss(tape, f.c_s, f.c_t, b, 1.0, 1.0, losses::Side::generator));
    }
}
BENCHMARK(BM_TotalLossForward);

void BM_TotalLossBackward(benchmark::State& state) {
    LossFixture f;
    for (auto _ : state) {
        ad::Tape tape;
        losses::BatchBundle b =
            losses::make_bundle(tape, f.g_s, f.g_t, f.x_s, f.y_s, f.x_t, f.yhat_t, 5);
        losses::TotalLoss total =
            losses::total_loss(tape, f.c_s, f.c_t, b, 1.0, 1.0, losses::Side::generator);
        tape.backward(total.value);
        benchmark::DoNotOptimize(tape.grad_of(f.g_s.l1.w));
    }
}
BENCHMARK(BM_TotalLossBackward);

void BM_TrainingIteration(benchmark::State& state) {
    data::ShiftSpec spec;
    spec.classes = 5;
    spec.per_domain = 500;
    spec.rotation = 0.7853981633974483;
    spec.noise_sigma = 0.35;
    spec.seed = 7;
    auto [source, target] = data::make_domain_pair(spec);
    train::TrainConfig cfg;
    cfg.pretrain_iters = 50;
    train::Trainer trainer(cfg, std::move(source), std::move(target));
    trainer.step_a_pretrain();
    for (auto _ : state) {
        train::TrainBatch batch = trainer.draw_batch();
        trainer.step_b_classifiers(batch);
        trainer.step_c_generators(batch);
    }
}
BENCHMARK(BM_TrainingIteration)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
