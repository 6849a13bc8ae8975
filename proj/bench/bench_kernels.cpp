// Serial reference vs OpenMP kernels: lifting a batch of trajectories and
// assembling the DRO program.

#include <benchmark/benchmark.h>
#include <omp.h>

#include <map>
#include <vector>

#include "dropep/dro.hpp"
#include "dropep/lifting.hpp"
#include "dropep/pipeline.hpp"

using namespace dropep;

namespace {

struct Fixture {
  ExperimentConfig config;
  FunctionClass cls;
  std::vector<Trajectory> trajs;
  std::vector<std::uint64_t> seeds;
  PepForms forms;
};

const Fixture& fixture(int N, int K) {
  static std::map<std::pair<int, int>, Fixture> cache;
  auto it = cache.find({N, K});
  if (it != cache.end()) return it->second;
  Fixture f;
  f.config.distribution.mp.mu = 0.0;
  f.config.distribution.mp.L = 1.0;
  f.config.distribution.mp.d = 100;
  f.config.distribution.seed = 7;
  f.config.mu = 0.0;
  f.config.L = 1.0;
  f.config.algorithms = {Method::kFgmKOverK3};
  f.config.initial.r = 1.0;
  f.cls = resolve_class(f.config);
  const AlgorithmSpec spec = algorithm_spec(f.config, f.cls, Method::kFgmKOverK3, K);
  for (int i = 0; i < N; ++i) {
    const std::uint64_t s = train_seed(f.config.distribution.seed, i);
    const Instance inst = sample_mp_quadratic(f.config.distribution.mp, s);
    const Reference ref = reference_solution(inst);
    const Eigen::VectorXd x0 = initial_point(X0Mode::kSphere, ref.x_star, 1.0, x0_seed(s));
    f.trajs.push_back(run(spec, inst, x0, ref));
    f.seeds.push_back(s);
  }
  f.forms = experiment_forms(f.config, f.cls, Method::kFgmKOverK3, K);
  return cache.emplace(std::make_pair(N, K), std::move(f)).first->second;
}

DroSpec dro_spec(const Fixture& f, RiskForm form) {
  DroSpec spec;
  spec.samples = lift_batch_serial(f.trajs, f.seeds);
  spec.epsilon = 0.1;
  spec.form = form;
  spec.alpha = form == RiskForm::kCvar ? 0.1 : 1.0;
  spec.forms = f.forms;
  spec.D = preconditioner(spec.samples);
  return spec;
}

void BM_LiftSerial(benchmark::State& state) {
  const Fixture& f = fixture(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(lift_batch_serial(f.trajs, f.seeds));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_LiftParallel(benchmark::State& state) {
  const Fixture& f = fixture(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(lift_batch(f.trajs, f.seeds));
  state.SetItemsProcessed(state.iterations() * state.range(0));
  state.counters["threads"] = omp_get_max_threads();
}

template <Assembly A, RiskForm R>
void BM_BuildDro(benchmark::State& state) {
  const Fixture& f = fixture(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  const DroSpec spec = dro_spec(f, R);
  for (auto _ : state) benchmark::DoNotOptimize(build_dro(spec, A));
  state.SetItemsProcessed(state.iterations() * state.range(0));
  state.counters["threads"] = omp_get_max_threads();
}

void args(benchmark::internal::Benchmark* b) {
  for (int N : {20, 50, 100})
    for (int K : {5, 15}) b->Args({N, K});
}

}  // namespace

BENCHMARK(BM_LiftSerial)->Apply(args)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_LiftParallel)->Apply(args)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_BuildDro<Assembly::kSerial, RiskForm::kExpectation>)->Apply(args)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_BuildDro<Assembly::kParallel, RiskForm::kExpectation>)->Apply(args)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_BuildDro<Assembly::kSerial, RiskForm::kCvar>)->Apply(args)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_BuildDro<Assembly::kParallel, RiskForm::kCvar>)->Apply(args)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
