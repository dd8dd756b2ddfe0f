#include "mlcap/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "mlcap/errors.hpp"
#include "mlcap/metrics.hpp"

namespace mlcap {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs == 0) throw ContractError("epochs must be at least 1");
  if (batch_size == 0) throw ContractError("batch size must be at least 1");
  if (hidden == 0 || embed == 0) throw ContractError("hidden and embed sizes must be at least 1");
  if (beam == 0 || val_beam == 0) throw ContractError("beam widths must be at least 1");
  if (max_len == 0) throw ContractError("max_len must be at least 1");
  if (min_count < 1) throw ContractError("min_count must be at least 1");
  if (!(clip_norm > 0.0)) throw ContractError("clip norm must be positive");
  if (!(adam.learning_rate >= 0.0) || !(adam.epsilon > 0.0) || adam.beta1 < 0.0 ||
      adam.beta1 >= 1.0 || adam.beta2 < 0.0 || adam.beta2 >= 1.0) {
    throw ContractError("invalid Adam hyperparameters");
  }
}

std::string config_to_json(const TrainConfig& c) {
  json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["hidden"] = c.hidden;
  j["embed"] = c.embed;
  j["beam"] = c.beam;
  j["val_beam"] = c.val_beam;
  j["max_len"] = c.max_len;
  j["seed"] = c.seed;
  j["min_count"] = c.min_count;
  j["languages"] = c.languages;
  j["loss"] = c.loss_mode == LossMode::kSum ? "sum" : "token_mean";
  j["clip"] = c.clip;
  j["clip_norm"] = c.clip_norm;
  j["lowercase"] = c.lowercase;
  j["feature_l2norm"] = c.feature_l2norm;
  j["length_norm"] = c.length_norm;
  j["adam"] = {{"learning_rate", c.adam.learning_rate},
               {"beta1", c.adam.beta1},
               {"beta2", c.adam.beta2},
               {"epsilon", c.adam.epsilon}};
  return j.dump();
}

TrainConfig config_from_json(const std::string& text) {
  TrainConfig c;
  try {
    const json j = json::parse(text);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.hidden = j.value("hidden", c.hidden);
    c.embed = j.value("embed", c.embed);
    c.beam = j.value("beam", c.beam);
    c.val_beam = j.value("val_beam", c.val_beam);
    c.max_len = j.value("max_len", c.max_len);
    c.seed = j.value("seed", c.seed);
    c.min_count = j.value("min_count", c.min_count);
    c.languages = j.value("languages", c.languages);
    c.loss_mode = j.value("loss", std::string("token_mean")) == "sum" ? LossMode::kSum
                                                                     : LossMode::kTokenMean;
    c.clip = j.value("clip", c.clip);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.lowercase = j.value("lowercase", c.lowercase);
    c.feature_l2norm = j.value("feature_l2norm", c.feature_l2norm);
    c.length_norm = j.value("length_norm", c.length_norm);
    if (j.contains("adam")) {
      const json& a = j.at("adam");
      c.adam.learning_rate = a.value("learning_rate", c.adam.learning_rate);
      c.adam.beta1 = a.value("beta1", c.adam.beta1);
      c.adam.beta2 = a.value("beta2", c.adam.beta2);
      c.adam.epsilon = a.value("epsilon", c.adam.epsilon);
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid training config: ") + e.what());
  }
  return c;
}

std::vector<TrainingExample> make_examples(std::span<const ImageRecord> records,
                                           const Vocabulary& vocab,
                                           std::span<const std::string> languages,
                                           bool lowercase_tokens) {
  std::vector<TrainingExample> out;
  for (const auto& rec : records) {
    for (const auto& cap : rec.captions) {
      if (!languages.empty() &&
          std::find(languages.begin(), languages.end(), cap.language) == languages.end()) {
        continue;
      }
      TrainingExample ex;
      ex.image_id = rec.image_id;
      ex.feature = rec.feature;
      ex.target = lowercase_tokens
                      ? encode(lowercase(cap.tokens), cap.language, vocab)
                      : encode(cap.tokens, cap.language, vocab);
      ex.start_id = vocab.start_id(cap.language);
      out.push_back(std::move(ex));
    }
  }
  return out;
}

std::size_t Batch::token_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1.0));
}

Batch make_batch(std::span<const TrainingExample* const> examples) {
  if (examples.empty()) throw ContractError("cannot build an empty batch");
  const std::size_t dim = examples.front()->feature.size();
  Batch batch;
  batch.size = examples.size();
  for (const TrainingExample* ex : examples) {
    if (ex->target.ids.empty() || ex->target.ids.back() != Vocabulary::kEos) {
      throw ContractError("training sequence " + ex->image_id + " must end with <eos>");
    }
    if (ex->feature.size() != dim || dim == 0) {
      throw DimensionError("example " + ex->image_id + " has feature size " +
                           std::to_string(ex->feature.size()) + ", batch uses " +
                           std::to_string(dim));
    }
    batch.steps = std::max(batch.steps, ex->target.ids.size());
  }
  std::vector<double> features;
  features.reserve(batch.size * dim);
  batch.targets.assign(batch.size * batch.steps, Vocabulary::kPad);
  batch.mask.assign(batch.size * batch.steps, 0.0);
  for (std::size_t b = 0; b < batch.size; ++b) {
    const TrainingExample& ex = *examples[b];
    features.insert(features.end(), ex.feature.begin(), ex.feature.end());
    batch.start_ids.push_back(ex.start_id);
    for (std::size_t t = 0; t < ex.target.ids.size(); ++t) {
      if (ex.target.ids[t] == Vocabulary::kPad) {
        throw ContractError("training sequence " + ex.image_id + " contains <pad>");
      }
      batch.targets[b * batch.steps + t] = ex.target.ids[t];
      batch.mask[b * batch.steps + t] = 1.0;
    }
  }
  batch.features = ad::Tensor::from_data({batch.size, dim}, std::move(features));
  return batch;
}

Batch make_batch(std::span<const TrainingExample> examples) {
  std::vector<const TrainingExample*> ptrs;
  for (const auto& ex : examples) ptrs.push_back(&ex);
  return make_batch(std::span<const TrainingExample* const>(ptrs));
}

ad::Tensor sequence_loss(ad::Tape& tape, const Batch& batch,
                         const ModelParams& params, LossMode mode) {
  const std::size_t tokens = batch.token_count();
  if (tokens == 0) throw ContractError("sequence_loss: batch has no scored positions");
  const TeacherForcedOutput run = teacher_forced(
      tape, batch.features, batch.start_ids, batch.targets, batch.steps, params);

  ad::Tensor total;
  std::vector<TokenId> column(batch.size);
  std::vector<double> weights(batch.size);
  for (std::size_t t = 0; t < batch.steps; ++t) {
    for (std::size_t b = 0; b < batch.size; ++b) {
      column[b] = batch.targets[b * batch.steps + t];
      weights[b] = batch.mask[b * batch.steps + t];
    }
    ad::Tensor step_loss = ad::weighted_cross_entropy(tape, run.logits[t], column, weights);
    total = t == 0 ? step_loss : ad::add(tape, total, step_loss);
  }
  if (mode == LossMode::kTokenMean) {
    total = ad::scale(tape, total, 1.0 / static_cast<double>(tokens));
  }
  return total;
}

double clip_gradients(ModelParams& params, double max_norm) {
  double sq = 0.0;
  for (const ad::Tensor* t : params.tensors()) {
    if (!t->has_grad()) continue;
    for (double g : t->grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (ad::Tensor* t : params.tensors()) {
      if (!t->has_grad()) continue;
      for (double& g : t->mutable_grad()) g *= factor;
    }
  }
  return norm;
}

EpochStats train_epoch(std::span<const TrainingExample> examples,
                       ModelParams& params, AdamState& adam,
                       const TrainConfig& config, Rng& rng) {
  if (examples.empty()) throw ContractError("train_epoch: empty training split");
  if (config.batch_size == 0) throw ContractError("batch size must be at least 1");

  std::vector<const TrainingExample*> order;
  order.reserve(examples.size());
  for (const auto& ex : examples) order.push_back(&ex);
  rng.shuffle(std::span(order));

  EpochStats stats;
  double weighted_loss = 0.0;
  for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
    const std::size_t end = std::min(order.size(), begin + config.batch_size);
    const Batch batch = make_batch(
        std::span<const TrainingExample* const>(order.data() + begin, end - begin));
    const std::size_t tokens = batch.token_count();

    params.zero_grad();
    ad::Tape tape;
    const ad::Tensor loss = sequence_loss(tape, batch, params, config.loss_mode);
    tape.backward(loss);
    if (config.clip) clip_gradients(params, config.clip_norm);
    adam_step(params, adam, config.adam);
    params.zero_grad();

    const double per_token = config.loss_mode == LossMode::kSum
                                 ? loss.item() / static_cast<double>(tokens)
                                 : loss.item();
    weighted_loss += per_token * static_cast<double>(tokens);
    stats.tokens += tokens;
    ++stats.batches;
  }
  stats.mean_loss = weighted_loss / static_cast<double>(stats.tokens);
  return stats;
}

std::size_t select_best_epoch(std::span<const double> history) {
  if (history.empty()) throw ContractError("select_best_epoch: empty history");
  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i] > history[best]) best = i;
  }
  return best;
}

double validation_cider(const ModelParams& params, const Vocabulary& vocab,
                        std::span<const ImageRecord> records,
                        std::span<const std::string> languages,
                        const BeamConfig& beam) {
  const std::vector<std::string> langs =
      languages.empty() ? vocab.languages()
                        : std::vector<std::string>(languages.begin(), languages.end());
  std::vector<double> scores;
  for (const auto& lang : langs) {
    const TokenId start = vocab.start_id(lang);
    std::vector<EvalItem> corpus;
    for (const auto& rec : records) {
      EvalItem item;
      for (const auto& cap : rec.captions) {
        if (cap.language == lang) item.references.push_back(cap.tokens);
      }
      if (item.references.empty()) continue;
      const auto decoded = beam_search(rec.feature, start, params, vocab, beam);
      if (!decoded.empty()) item.candidate = decode(decoded.front().ids, vocab);
      corpus.push_back(std::move(item));
    }
    if (!corpus.empty()) scores.push_back(cider(corpus));
  }
  if (scores.empty()) return 0.0;
  return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
}

TrainResult train(ModelParams initial, std::span<const TrainingExample> train_set,
                  std::span<const ImageRecord> val_set, const Vocabulary& vocab,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty()) throw ContractError("training split is empty");
  if (val_set.empty()) throw ContractError("validation split is empty");
  initial.validate();

  ModelParams params = std::move(initial);
  AdamState adam = make_adam_state(params);
  Rng rng = Rng::substream(config.seed, "shuffle");
  const BeamConfig val_beam{config.val_beam, config.max_len, config.length_norm};
  std::vector<std::string> langs = config.languages;

  TrainResult result;
  std::vector<double> scores;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const EpochStats stats = train_epoch(train_set, params, adam, config, rng);
    const double score = validation_cider(params, vocab, val_set, langs, val_beam);
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;

    EpochRecord record{epoch, stats.mean_loss, score, elapsed.count()};
    result.history.push_back(record);
    scores.push_back(score);
    if (select_best_epoch(scores) == epoch - 1) {
      result.best = params.clone();
      result.best_epoch = epoch;
    }
    if (on_epoch) on_epoch(record, params);
  }
  return result;
}

}  // namespace mlcap
