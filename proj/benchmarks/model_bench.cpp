#include <benchmark/benchmark.h>

#include "mlcap/beam.hpp"
#include "mlcap/random.hpp"
#include "mlcap/trainer.hpp"

namespace mlcap {
namespace {

std::vector<TrainingExample> make_batch_examples(std::size_t batch, std::size_t length,
                                                 std::size_t vocab, std::size_t feature) {
  Rng rng(3);
  std::vector<TrainingExample> out(batch);
  for (auto& ex : out) {
    ex.image_id = "bench";
    ex.feature.resize(feature);
    for (double& x : ex.feature) x = rng.uniform(-1.0, 1.0);
    for (std::size_t t = 0; t + 1 < length; ++t) {
      ex.target.ids.push_back(4 + rng.uniform_index(vocab - 4));
    }
    ex.target.ids.push_back(Vocabulary::kEos);
    ex.start_id = 3;
  }
  return out;
}

void BM_LstmStepForward(benchmark::State& state) {
  const auto h = static_cast<std::size_t>(state.range(0));
  const ModelParams p = init_params({1000, h, h, 64}, 1);
  const auto x = ad::Tensor::filled({32, h}, 0.1);
  const LstmState s = LstmState::zeros(32, h);
  for (auto _ : state) {
    ad::Tape tape(ad::Tape::Mode::kNoGrad);
    benchmark::DoNotOptimize(lstm_step(tape, x, s, p).logits.data().data());
  }
}
BENCHMARK(BM_LstmStepForward)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_SequenceLossBackward(benchmark::State& state) {
  const auto h = static_cast<std::size_t>(state.range(0));
  ModelParams p = init_params({500, h, h, 64}, 1);
  const auto examples = make_batch_examples(32, 12, 500, 64);
  const Batch batch = make_batch(examples);
  for (auto _ : state) {
    p.zero_grad();
    ad::Tape tape;
    tape.backward(sequence_loss(tape, batch, p));
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * batch.token_count()));
}
BENCHMARK(BM_SequenceLossBackward)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_BeamSearch(benchmark::State& state) {
  const auto width = static_cast<std::size_t>(state.range(0));
  std::vector<std::string> words;
  for (int i = 0; i < 200; ++i) words.push_back("w" + std::to_string(i));
  const Vocabulary vocab = Vocabulary::from_parts({"en", "jp"}, words);
  const ModelParams p = init_params({vocab.size(), 64, 64, 16}, 2);
  const std::vector<double> feature(16, 0.25);
  for (auto _ : state) {
    benchmark::DoNotOptimize(beam_search(feature, 3, p, vocab, {width, 16, false}));
  }
}
BENCHMARK(BM_BeamSearch)->Arg(1)->Arg(5)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace mlcap
