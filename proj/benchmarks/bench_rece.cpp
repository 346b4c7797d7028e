#include <rece/checkpoint_io.hpp>
#include <rece/derivation.hpp>
#include <rece/edit_core.hpp>
#include <rece/oracle.hpp>
#include <rece/rece_driver.hpp>
#include <rece/synthetic.hpp>

#include <benchmark/benchmark.h>

using namespace rece;

namespace {

// SD-shaped layers (32 matrices, d = 768) and the synthetic concept table.
struct SdFixture {
  TensorFile checkpoint = make_synthetic_checkpoint(1);
  AttentionLayerSet layers = select_cross_attention(checkpoint, {});
  TensorFile table = make_synthetic_embeddings(1);
  EraseSpec spec{{{embedding_from_file(table, "concept"), embedding_from_file(table, "empty_text"),
                   "concept"}},
                 {embedding_from_file(table, "preserve")}};
};

const SdFixture& sd() {
  static const SdFixture fixture;
  return fixture;
}

void BM_EditLayerSet(benchmark::State& state) {
  const auto& f = sd();
  for (auto _ : state) {
    benchmark::DoNotOptimize(edit_layer_set(f.layers, f.spec.tasks, f.spec.preserve, 0.1, 0.1));
  }
}
BENCHMARK(BM_EditLayerSet)->Unit(benchmark::kMillisecond);

void BM_DeriveEmbedding(benchmark::State& state) {
  const auto& f = sd();
  const auto edited = edit_layer_set(f.layers, f.spec.tasks, f.spec.preserve, 0.1, 0.1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(derive_embedding(f.spec.tasks[0].source, edited, f.layers, 0.1));
  }
}
BENCHMARK(BM_DeriveEmbedding)->Unit(benchmark::kMillisecond);

void BM_ReceErase(benchmark::State& state) {
  const auto& f = sd();
  EditConfig config = EditConfig::unsafe_preset();
  config.epochs = static_cast<int>(state.range(0));
  DriverOptions options;
  options.keep_snapshots = false;
  for (auto _ : state) benchmark::DoNotOptimize(rece_erase(f.layers, f.spec, config, options));
}
BENCHMARK(BM_ReceErase)->Arg(0)->Arg(5)->Unit(benchmark::kMillisecond)->Iterations(2);

void BM_MergeAndSerialize(benchmark::State& state) {
  const auto& f = sd();
  for (auto _ : state) {
    benchmark::DoNotOptimize(serialize_tensor_file(merge_back(f.layers, f.checkpoint)));
  }
}
BENCHMARK(BM_MergeAndSerialize)->Unit(benchmark::kMillisecond);

void BM_UceEditByDim(benchmark::State& state) {
  RandomSource rng(3);
  const auto d = state.range(0);
  const auto w = rng.projection("w", ProjKind::Key, 2 * d, d);
  const std::vector<ConceptTask> erase{{rng.embedding(d, 1), rng.embedding(d, 1), "c"}};
  const std::vector<Embedding> keep{rng.embedding(d, 1)};
  for (auto _ : state) benchmark::DoNotOptimize(uce_edit(w, erase, keep, 0.1, 0.1));
  state.SetComplexityN(d);
}
BENCHMARK(BM_UceEditByDim)->RangeMultiplier(2)->Range(64, 1024)->Complexity();

void BM_OracleDerive(benchmark::State& state) {
  RandomSource rng(4);
  const auto old_set = rng.layer_set(4, 16, 8, 32);
  const std::vector<ConceptTask> erase{{rng.embedding(16, 1), rng.embedding(16, 1), "c"}};
  const auto new_set = edit_layer_set(old_set, erase, {}, 0.1, 0.1);
  const auto c = rng.embedding(16, 1);
  for (auto _ : state) benchmark::DoNotOptimize(oracle_derive(c, new_set, old_set, 0.1));
}
BENCHMARK(BM_OracleDerive)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
