#pragma once

// Teacher-forced negative log-likelihood training with Adam, epoch loop and
// model selection by validation CIDEr.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mlcap/adam.hpp"
#include "mlcap/autodiff.hpp"
#include "mlcap/beam.hpp"
#include "mlcap/dataset.hpp"
#include "mlcap/model.hpp"
#include "mlcap/random.hpp"
#include "mlcap/vocab.hpp"

namespace mlcap {

enum class LossMode {
  kTokenMean,  // summed NLL divided by the number of scored tokens
  kSum,        // raw summed NLL
};

struct TrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 128;
  std::size_t hidden = 512;
  std::size_t embed = 512;
  std::size_t beam = 5;      // test-time generation
  std::size_t val_beam = 1;  // per-epoch validation decoding
  std::size_t max_len = 30;
  std::uint64_t seed = 42;
  int min_count = 5;
  std::vector<std::string> languages;  // empty: every language in the data
  LossMode loss_mode = LossMode::kTokenMean;
  bool clip = false;
  double clip_norm = 5.0;
  bool lowercase = false;
  bool feature_l2norm = false;
  bool length_norm = false;
  AdamConfig adam;

  // Throws ContractError when a count is zero or a value is out of range.
  void validate() const;
};

std::string config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const std::string& text);

// One (image, caption, language) triple; an image captioned in two languages
// yields two examples sharing the feature.
struct TrainingExample {
  std::string image_id;
  std::vector<double> feature;
  TokenSequence target;
  TokenId start_id = 0;
};

// Captions in languages outside `languages` (when non-empty) are skipped.
std::vector<TrainingExample> make_examples(std::span<const ImageRecord> records,
                                           const Vocabulary& vocab,
                                           std::span<const std::string> languages,
                                           bool lowercase_tokens);

// Padded batch. targets and mask are row-major [size x steps]; mask is 1
// exactly at real target positions, each row's span ending in <eos>.
struct Batch {
  ad::Tensor features;  // [size x D]
  std::vector<TokenId> targets;
  std::vector<double> mask;
  std::vector<TokenId> start_ids;
  std::size_t size = 0;
  std::size_t steps = 0;

  std::size_t token_count() const;
};

Batch make_batch(std::span<const TrainingExample* const> examples);
Batch make_batch(std::span<const TrainingExample> examples);

// NLL over unmasked positions; per-token mean or raw sum. Throws
// ContractError for a batch without scored positions.
ad::Tensor sequence_loss(ad::Tape& tape, const Batch& batch,
                         const ModelParams& params,
                         LossMode mode = LossMode::kTokenMean);

// Scales every stored gradient so their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_gradients(ModelParams& params, double max_norm);

struct EpochStats {
  double mean_loss = 0.0;  // token-weighted mean NLL
  std::size_t tokens = 0;
  std::size_t batches = 0;
};

// Shuffles with rng, then one loss + backward + Adam step per batch.
EpochStats train_epoch(std::span<const TrainingExample> examples,
                       ModelParams& params, AdamState& adam,
                       const TrainConfig& config, Rng& rng);

// Index of the highest score; ties go to the earliest epoch.
std::size_t select_best_epoch(std::span<const double> history);

// Mean over languages of the CIDEr of decoded captions against the records'
// references in that language. Images without such references are skipped.
double validation_cider(const ModelParams& params, const Vocabulary& vocab,
                        std::span<const ImageRecord> records,
                        std::span<const std::string> languages,
                        const BeamConfig& beam);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_cider = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  ModelParams best;
  std::size_t best_epoch = 0;  // 1-based
  std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&, const ModelParams&)>;

// Full protocol: `config.epochs` epochs from `initial`, validation CIDEr after
// each, best epoch kept. Shuffling uses the seed's "shuffle" stream.
TrainResult train(ModelParams initial, std::span<const TrainingExample> train_set,
                  std::span<const ImageRecord> val_set, const Vocabulary& vocab,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace mlcap
