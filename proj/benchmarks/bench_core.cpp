#include <benchmark/benchmark.h>

#include <vector>

#include "bnf/bernstein.hpp"
#include "bnf/flow.hpp"
#include "bnf/propagation.hpp"
#include "bnf/training.hpp"

using namespace bnf;

namespace {

BernsteinTensor random_tensor(const DegreeVector& degree, Rng& rng) {
  BernsteinTensor t(degree);
  for (double& v : t.coeffs()) v = 0.05 + rng.uniform();
  return t;
}

std::vector<BernsteinTensor> random_factors(const FlowLayout& layout, Rng& rng) {
  UnconstrainedParams p = uniform_params(layout);
  for (auto& t : p.theta)
    for (double& v : t.coeffs()) v += 2.0 * rng.uniform() - 1.0;
  return constrain(layout, p);
}

DiagonalTransform unit_transform() { return DiagonalTransform({AxisMap::affine(0.0, 1.0), AxisMap::affine(0.0, 1.0)}); }

void BM_Eval2D(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  Rng rng(1);
  const BernsteinTensor p = random_tensor({d, d}, rng);
  const double u[] = {0.3, 0.7};
  for (auto _ : state) benchmark::DoNotOptimize(eval(p, u));
}
BENCHMARK(BM_Eval2D)->Arg(10)->Arg(20)->Arg(30)->Arg(60);

void BM_DegreeRaise(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  Rng rng(2);
  const BernsteinTensor p = random_tensor({d, d}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(degree_raise(p, {2 * d, 2 * d}));
}
BENCHMARK(BM_DegreeRaise)->Arg(10)->Arg(20)->Arg(30);

void BM_PropagateStep(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  Rng rng(3);
  const ConditionalFlowModel transition = make_conditional_flow(FlowLayout{{d, d}, {d, d}}, random_factors(FlowLayout{{d, d}, {d, d}}, rng));
  const FlowModel initial = make_flow(FlowLayout{{d, d}, {}}, random_factors(FlowLayout{{d, d}, {}}, rng));
  const TransitionOperator op(transition);
  const Belief b1 = propagate_step(initial_belief(initial, unit_transform()), op);
  for (auto _ : state) benchmark::DoNotOptimize(propagate_step(b1, op));
  state.SetLabel("belief degree " + std::to_string(b1.density.degree(0)) + "x" + std::to_string(b1.density.degree(1)));
}
BENCHMARK(BM_PropagateStep)->Arg(10)->Arg(20)->Arg(30)->Unit(benchmark::kMillisecond);

void BM_BuildTransitionOperator(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  Rng rng(4);
  const FlowLayout layout{{d, d}, {d, d}};
  const ConditionalFlowModel transition = make_conditional_flow(layout, random_factors(layout, rng));
  for (auto _ : state) benchmark::DoNotOptimize(TransitionOperator(transition));
}
BENCHMARK(BM_BuildTransitionOperator)->Arg(10)->Arg(20)->Arg(30)->Unit(benchmark::kMillisecond);

void BM_EvaluateBox(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  Rng rng(5);
  const FlowModel m = make_flow(FlowLayout{{d, d}, {}}, random_factors(FlowLayout{{d, d}, {}}, rng));
  const Belief b = initial_belief(m, unit_transform());
  StateBox r{{{0.2, 0.6}, {0.1, 0.9}}};
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(b, r));
}
BENCHMARK(BM_EvaluateBox)->Arg(10)->Arg(30);

void BM_NllGradientBatch(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const bool conditional = state.range(1) != 0;
  Rng rng(6);
  const FlowLayout layout{{d, d}, conditional ? DegreeVector{d, d} : DegreeVector{}};
  const UnconstrainedParams p{random_factors(layout, rng)};
  UnitData batch{PointSet(2), conditional ? PointSet(2) : PointSet()};
  for (int i = 0; i < 1024; ++i) {
    const double u[] = {rng.uniform_open(), rng.uniform_open()};
    batch.target.push_back(u);
    if (conditional) batch.given.push_back(u);
  }
  for (auto _ : state) benchmark::DoNotOptimize(nll_and_gradient(layout, p, batch));
  state.SetItemsProcessed(state.iterations() * 1024);
}
BENCHMARK(BM_NllGradientBatch)->Args({10, 0})->Args({30, 0})->Args({10, 1})->Args({30, 1})->Unit(benchmark::kMillisecond);

void BM_SampleFlow(benchmark::State& state) {
  Rng rng(7);
  const FlowModel m = make_flow(FlowLayout{{20, 20}, {}}, random_factors(FlowLayout{{20, 20}, {}}, rng));
  for (auto _ : state) benchmark::DoNotOptimize(sample(m, rng, 1000));
  state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_SampleFlow)->Unit(benchmark::kMillisecond);

void BM_SampleBelief(benchmark::State& state) {
  Rng rng(8);
  const FlowModel m = make_flow(FlowLayout{{20, 20}, {}}, random_factors(FlowLayout{{20, 20}, {}}, rng));
  const Belief b = initial_belief(m, unit_transform());
  for (auto _ : state) benchmark::DoNotOptimize(sample_belief_unit(b, rng, 1000));
  state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_SampleBelief)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
