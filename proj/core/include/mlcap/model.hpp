#pragma once

// Single-layer LSTM caption decoder.
//
// Step -1 feeds the projected image feature, step 0 the language start token,
// and every following step the embedding of the previous ground-truth (or
// decoded) word. Each step emits logits over the vocabulary. All parameters
// are shared across languages; only the start token differs.

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "mlcap/autodiff.hpp"
#include "mlcap/vocab.hpp"

namespace mlcap {

struct ModelDims {
  std::size_t vocab = 0;     // V
  std::size_t embed = 512;   // E
  std::size_t hidden = 512;  // H
  std::size_t feature = 0;   // D

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

// Gate blocks along the 4H axis of lstm_wx, lstm_wh and lstm_bias.
enum class Gate : std::size_t { kInput = 0, kForget = 1, kOutput = 2, kCell = 3 };

struct ModelParams {
  ModelDims dims;
  ad::Tensor embed;       // [V x E] word embedding
  ad::Tensor image_proj;  // [D x E]
  ad::Tensor image_bias;  // [E]
  ad::Tensor lstm_wx;     // [E x 4H]
  ad::Tensor lstm_wh;     // [H x 4H]
  ad::Tensor lstm_bias;   // [4H]
  ad::Tensor out_w;       // [H x V]
  ad::Tensor out_bias;    // [V]

  static constexpr std::size_t kCount = 8;
  // Serialization order; matches tensors().
  static constexpr std::array<std::string_view, kCount> kNames = {
      "embed", "image_proj", "image_bias", "lstm_wx",
      "lstm_wh", "lstm_bias", "out_w", "out_bias"};

  static ad::Shape expected_shape(const ModelDims& dims, std::size_t index);

  std::array<ad::Tensor*, kCount> tensors();
  std::array<const ad::Tensor*, kCount> tensors() const;

  // Deep copy; gradients are not copied.
  ModelParams clone() const;
  void zero_grad();
  // Throws DimensionError on shape disagreement, ContractError on non-finite.
  void validate() const;
};

// All-zero parameters of the right shapes (requires_grad set).
ModelParams zero_params(const ModelDims& dims);

// Weights ~ Uniform(-0.08, 0.08) from the seed's "init" stream; biases 0
// except the forget-gate block of lstm_bias, which is 1.
ModelParams init_params(const ModelDims& dims, std::uint64_t seed);

struct LstmState {
  ad::Tensor h;  // [B x H]
  ad::Tensor c;  // [B x H]

  static LstmState zeros(std::size_t batch, std::size_t hidden);
};

struct StepOutput {
  LstmState state;
  ad::Tensor logits;  // [B x V]
};

// One recurrence step on a batch of inputs x [B x E] (or a single [E]):
//   i, f, o = sigmoid(x Wx + h Wh + b) gate slices, g = tanh(...)
//   c' = f * c + i * g,  h' = o * tanh(c'),  logits = h' Wout + bout
StepOutput lstm_step(ad::Tape& tape, const ad::Tensor& x,
                     const LstmState& state, const ModelParams& params);

// features [B x D] -> [B x E].
ad::Tensor project_image(ad::Tape& tape, const ad::Tensor& features,
                         const ModelParams& params);
// ids -> [B x E].
ad::Tensor embed_tokens(ad::Tape& tape, std::span<const TokenId> ids,
                        const ModelParams& params);

struct TeacherForcedOutput {
  ad::Tensor image_logits;          // unscored output of the feature step
  std::vector<ad::Tensor> logits;   // logits[t] predicts targets column t
  LstmState final_state;
};

// Batched teacher-forced unroll. targets is row-major [B x steps]; column t
// is predicted from start_ids (t = 0) or targets column t - 1.
TeacherForcedOutput teacher_forced(ad::Tape& tape, const ad::Tensor& features,
                                   std::span<const TokenId> start_ids,
                                   std::span<const TokenId> targets,
                                   std::size_t steps,
                                   const ModelParams& params);

struct ForwardTrace {
  std::vector<double> image_distribution;
  // distributions[t] is the predicted distribution for sequence.ids[t].
  std::vector<std::vector<double>> distributions;
  // Word inputs fed at steps 0..N-1: start id then ids[0..N-2].
  std::vector<TokenId> inputs;
  LstmState final_state;
};

ForwardTrace forward_sequence(std::span<const double> feature,
                              const TokenSequence& sequence, TokenId start_id,
                              const ModelParams& params);

// Either a token id or a feature vector (the injection step).
using StepInput = std::variant<TokenId, std::span<const double>>;

struct StepDistribution {
  LstmState state;
  std::vector<double> log_probs;
};

// Pure single-step interface used by decoders. state is [1 x H].
StepDistribution step_distribution(const LstmState& state,
                                   const StepInput& input,
                                   const ModelParams& params);

LstmState initial_state(const ModelParams& params);

}  // namespace mlcap
