// Microbenchmarks for the hot paths: table construction, the coordinate
// transform, mask construction, and the attention/block kernels at the demo
// scale (4x8x8 lattice, 256 tokens, D=64, 4 heads).

#include <benchmark/benchmark.h>

#include "trajctl/attention.hpp"
#include "trajctl/det_rng.hpp"
#include "trajctl/masking.hpp"
#include "trajctl/rope.hpp"
#include "trajctl/trajectory.hpp"

namespace {

using namespace trajctl;

const TokenLattice kLattice{4, 8, 8};

Trajectory demo_trajectory() {
  Trajectory traj;
  traj.boxes = {
      {0, 0, 2, 2},
      {2, 2, 4, 4},
      {4, 4, 6, 6},
      {6, 6, 8, 8},
  };
  return traj;
}

RopeTable base_table() {
  return build_3d_rope(kLattice, RopeLayout::default_split(16));
}

FeatureSequence demo_features() {
  return make_correlated_features(kLattice, 64, 4, 0xBE7C, 0.5);
}

BlockWeights demo_weights() {
  return BlockWeights::seeded({64, 4, 4, 0.7, 0xBE7C});
}

void BM_Build3dRope(benchmark::State& state) {
  const RopeLayout layout = RopeLayout::default_split(16);
  for (auto _ : state) {
    RopeTable table = build_3d_rope(kLattice, layout);
    benchmark::DoNotOptimize(table);
  }
}
BENCHMARK(BM_Build3dRope);

void BM_StdRope(benchmark::State& state) {
  const RopeTable table = base_table();
  const Trajectory traj = demo_trajectory();
  for (auto _ : state) {
    RopeTable out = std_rope(table, traj, 0, {.allow_resample = false});
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_StdRope);

void BM_BuildSelfMask(benchmark::State& state) {
  const RopeTable table = std_rope(base_table(), demo_trajectory(), 0,
                                   {.allow_resample = false});
  const TokenSet fg = foreground_token_set(demo_trajectory(), kLattice);
  for (auto _ : state) {
    const RepeatSets reps = repeat_token_sets(table, kLattice);
    AttentionMask mask =
        build_self_mask(fg, r_token_set(reps.all, fg), kLattice.size());
    benchmark::DoNotOptimize(mask);
  }
}
BENCHMARK(BM_BuildSelfMask);

void BM_SelfAttention3d(benchmark::State& state) {
  const RopeTable table = base_table();
  const FeatureSequence x = demo_features();
  const BlockWeights weights = demo_weights();
  for (auto _ : state) {
    FeatureSequence out = self_attention_3d(x, table, nullptr, weights);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_SelfAttention3d);

void BM_DitBlock(benchmark::State& state) {
  const RopeTable table = base_table();
  const FeatureSequence x = demo_features();
  const BlockWeights weights = demo_weights();
  ConditionEmbedding cond;
  cond.keys = Mat(8, 64);
  DetRng rng(0xBE7C);
  for (double& v : cond.keys.data) v = rng.normal();
  cond.layout.fg_span = {0, 4};
  cond.layout.bg_span = {4, 8};
  DitBlockInputs inputs;
  inputs.table = &table;
  inputs.cond = &cond;
  for (auto _ : state) {
    FeatureSequence out = dit_block(x, inputs, weights);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_DitBlock);

void BM_DitBlockF32(benchmark::State& state) {
  const RopeTable table = base_table();
  const FeatureSequence x = demo_features();
  const BlockWeights weights = demo_weights();
  DitBlockInputs inputs;
  inputs.table = &table;
  for (auto _ : state) {
    FeatureSequence out = dit_block_f32(x, inputs, weights);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_DitBlockF32);

}  // namespace

BENCHMARK_MAIN();
