#include <benchmark/benchmark.h>

#include "dmt/fusion.hpp"
#include "dmt/ops.hpp"
#include "dmt/teacher_bank.hpp"
#include "dmt/trainer.hpp"

using namespace dmt;

namespace {

Tensor noise(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (double& v : t.storage()) v = rng.normal(0.0, 1.0);
  return t;
}

}  // namespace

// Token-sized products: [N+1, D] x [D, 4D] is the MLP shape of the toy encoders.
static void BM_Matmul(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0)), k = static_cast<std::size_t>(state.range(1)),
             n = static_cast<std::size_t>(state.range(2));
  Rng rng(1);
  const Tensor a = noise(rng, {m, k}), b = noise(rng, {k, n});
  for (auto _ : state) {
    Tape tape(GradMode::kNoGrad);
    benchmark::DoNotOptimize(tape.value(ops::matmul(tape, tape.input(a), tape.input(b))).storage().data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * k * n));
}
BENCHMARK(BM_Matmul)->Args({17, 16, 64})->Args({17, 32, 128})->Args({65, 64, 256})->Args({197, 192, 768});

static void BM_TeacherEncode(benchmark::State& state) {
  const ViTEncoder teacher(toy_teacher_config(), 1);
  const Dataset data = make_synthetic_dataset(1, 0);
  const Tensor img = data.image(0);
  for (auto _ : state) benchmark::DoNotOptimize(teacher.encode(img).tokens.storage().data());
}
BENCHMARK(BM_TeacherEncode);

static void BM_FuseThreeTeachers(benchmark::State& state) {
  Rng rng(2);
  const std::vector<Tensor> t{noise(rng, {17, 32}), noise(rng, {17, 32}), noise(rng, {17, 32})};
  for (auto _ : state) benchmark::DoNotOptimize(make_fused_target(t, 4, 4).tokens.storage().data());
}
BENCHMARK(BM_FuseThreeTeachers);

// One optimizer step of the reference student against three teachers.
static void BM_DistillStep(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const TrainConfig cfg = reference_train_config();
  TeacherBank bank;
  for (std::uint64_t i = 0; i < 3; ++i) bank.add(ViTEncoder(toy_teacher_config(), 10 + i), "t" + std::to_string(i));
  StudentState student = StudentState::initialize(cfg, bank.embed_dim());
  const Dataset data = make_synthetic_dataset(batch, 0);
  std::vector<Tensor> images;
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < batch; ++i) {
    images.push_back(data.image(i));
    seeds.push_back(i);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        distill_step(images, seeds, cfg.augment, bank, student, 1e-4, LossMode::kTfdSfd).total);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch));
}
BENCHMARK(BM_DistillStep)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
