#include "mlcap/model.hpp"

#include <cmath>
#include <string>

#include "mlcap/errors.hpp"
#include "mlcap/random.hpp"

namespace mlcap {
namespace {

constexpr double kInitRange = 0.08;

void check_dims(const ModelDims& dims) {
  if (dims.vocab == 0 || dims.embed == 0 || dims.hidden == 0 ||
      dims.feature == 0) {
    throw ContractError("model dimensions must all be at least 1 (V=" +
                        std::to_string(dims.vocab) + " E=" +
                        std::to_string(dims.embed) + " H=" +
                        std::to_string(dims.hidden) + " D=" +
                        std::to_string(dims.feature) + ")");
  }
}

ad::Tensor as_row_matrix(ad::Tape& tape, const ad::Tensor& x) {
  if (x.rank() == 1) return ad::reshape(tape, x, {1, x.size()});
  return x;
}

}  // namespace

ad::Shape ModelParams::expected_shape(const ModelDims& d, std::size_t index) {
  switch (index) {
    case 0: return {d.vocab, d.embed};
    case 1: return {d.feature, d.embed};
    case 2: return {d.embed};
    case 3: return {d.embed, 4 * d.hidden};
    case 4: return {d.hidden, 4 * d.hidden};
    case 5: return {4 * d.hidden};
    case 6: return {d.hidden, d.vocab};
    case 7: return {d.vocab};
    default: throw IndexError("parameter index " + std::to_string(index));
  }
}

std::array<ad::Tensor*, ModelParams::kCount> ModelParams::tensors() {
  return {&embed, &image_proj, &image_bias, &lstm_wx,
          &lstm_wh, &lstm_bias, &out_w, &out_bias};
}

std::array<const ad::Tensor*, ModelParams::kCount> ModelParams::tensors() const {
  return {&embed, &image_proj, &image_bias, &lstm_wx,
          &lstm_wh, &lstm_bias, &out_w, &out_bias};
}

ModelParams ModelParams::clone() const {
  ModelParams copy;
  copy.dims = dims;
  auto dst = copy.tensors();
  auto src = tensors();
  for (std::size_t i = 0; i < kCount; ++i) *dst[i] = src[i]->clone();
  return copy;
}

void ModelParams::zero_grad() {
  for (ad::Tensor* t : tensors()) t->zero_grad();
}

void ModelParams::validate() const {
  check_dims(dims);
  const auto ts = tensors();
  for (std::size_t i = 0; i < kCount; ++i) {
    const ad::Shape want = expected_shape(dims, i);
    if (!ts[i]->defined() || ts[i]->shape() != want) {
      throw DimensionError(
          "parameter " + std::string(kNames[i]) + " has shape " +
          (ts[i]->defined() ? ad::shape_string(ts[i]->shape()) : "undefined") +
          ", expected " + ad::shape_string(want));
    }
    for (double x : ts[i]->data()) {
      if (!std::isfinite(x)) {
        throw ContractError("parameter " + std::string(kNames[i]) +
                            " contains a non-finite value");
      }
    }
  }
}

ModelParams zero_params(const ModelDims& dims) {
  check_dims(dims);
  ModelParams params;
  params.dims = dims;
  auto ts = params.tensors();
  for (std::size_t i = 0; i < ModelParams::kCount; ++i) {
    *ts[i] = ad::Tensor::zeros(ModelParams::expected_shape(dims, i), true);
  }
  return params;
}

ModelParams init_params(const ModelDims& dims, std::uint64_t seed) {
  ModelParams params = zero_params(dims);
  Rng rng = Rng::substream(seed, "init");
  for (ad::Tensor* w : {&params.embed, &params.image_proj, &params.lstm_wx,
                        &params.lstm_wh, &params.out_w}) {
    for (double& x : w->data()) x = rng.uniform(-kInitRange, kInitRange);
  }
  const std::size_t h = dims.hidden;
  auto bias = params.lstm_bias.data();
  const std::size_t forget = static_cast<std::size_t>(Gate::kForget) * h;
  for (std::size_t j = 0; j < h; ++j) bias[forget + j] = 1.0;
  return params;
}

LstmState LstmState::zeros(std::size_t batch, std::size_t hidden) {
  return {ad::Tensor::zeros({batch, hidden}), ad::Tensor::zeros({batch, hidden})};
}

StepOutput lstm_step(ad::Tape& tape, const ad::Tensor& x,
                     const LstmState& state, const ModelParams& params) {
  const ModelDims& d = params.dims;
  const ad::Tensor input = as_row_matrix(tape, x);
  if (input.cols() != d.embed) {
    throw DimensionError("lstm_step: input " + ad::shape_string(input.shape()) +
                         " does not match embedding size " +
                         std::to_string(d.embed));
  }
  const std::size_t batch = input.rows();
  const ad::Shape state_shape{batch, d.hidden};
  if (state.h.shape() != state_shape || state.c.shape() != state_shape) {
    throw DimensionError("lstm_step: state " + ad::shape_string(state.h.shape()) +
                         "/" + ad::shape_string(state.c.shape()) +
                         " expected " + ad::shape_string(state_shape));
  }

  const std::size_t h = d.hidden;
  const ad::Tensor pre = ad::add_bias(
      tape,
      ad::add(tape, ad::matmul(tape, input, params.lstm_wx),
              ad::matmul(tape, state.h, params.lstm_wh)),
      params.lstm_bias);
  auto block = [&](Gate gate) {
    return ad::slice_cols(tape, pre, static_cast<std::size_t>(gate) * h, h);
  };
  const ad::Tensor in_gate = ad::sigmoid(tape, block(Gate::kInput));
  const ad::Tensor forget_gate = ad::sigmoid(tape, block(Gate::kForget));
  const ad::Tensor out_gate = ad::sigmoid(tape, block(Gate::kOutput));
  const ad::Tensor candidate = ad::tanh(tape, block(Gate::kCell));

  LstmState next;
  next.c = ad::add(tape, ad::hadamard(tape, forget_gate, state.c),
                   ad::hadamard(tape, in_gate, candidate));
  next.h = ad::hadamard(tape, out_gate, ad::tanh(tape, next.c));
  ad::Tensor logits = ad::add_bias(
      tape, ad::matmul(tape, next.h, params.out_w), params.out_bias);
  return {std::move(next), std::move(logits)};
}

ad::Tensor project_image(ad::Tape& tape, const ad::Tensor& features,
                         const ModelParams& params) {
  const ad::Tensor f = as_row_matrix(tape, features);
  if (f.cols() != params.dims.feature) {
    throw DimensionError("image feature " + ad::shape_string(f.shape()) +
                         " does not match feature size " +
                         std::to_string(params.dims.feature));
  }
  return ad::add_bias(tape, ad::matmul(tape, f, params.image_proj),
                      params.image_bias);
}

ad::Tensor embed_tokens(ad::Tape& tape, std::span<const TokenId> ids,
                        const ModelParams& params) {
  return ad::gather_rows(tape, params.embed, ids);
}

TeacherForcedOutput teacher_forced(ad::Tape& tape, const ad::Tensor& features,
                                   std::span<const TokenId> start_ids,
                                   std::span<const TokenId> targets,
                                   std::size_t steps,
                                   const ModelParams& params) {
  const std::size_t batch = start_ids.size();
  if (batch == 0 || steps == 0) {
    throw ContractError("teacher_forced: empty batch or zero steps");
  }
  if (targets.size() != batch * steps) {
    throw DimensionError("teacher_forced: targets hold " +
                         std::to_string(targets.size()) + " ids, expected " +
                         std::to_string(batch) + "x" + std::to_string(steps));
  }
  if (features.rank() != 2 || features.rows() != batch) {
    throw DimensionError("teacher_forced: features " +
                         ad::shape_string(features.shape()) + " for batch of " +
                         std::to_string(batch));
  }

  TeacherForcedOutput out;
  StepOutput step = lstm_step(tape, project_image(tape, features, params),
                              LstmState::zeros(batch, params.dims.hidden), params);
  out.image_logits = step.logits;

  std::vector<TokenId> inputs(start_ids.begin(), start_ids.end());
  for (std::size_t t = 0; t < steps; ++t) {
    if (t > 0) {
      for (std::size_t b = 0; b < batch; ++b) inputs[b] = targets[b * steps + t - 1];
    }
    step = lstm_step(tape, embed_tokens(tape, inputs, params), step.state, params);
    out.logits.push_back(step.logits);
  }
  out.final_state = step.state;
  return out;
}

ForwardTrace forward_sequence(std::span<const double> feature,
                              const TokenSequence& sequence, TokenId start_id,
                              const ModelParams& params) {
  if (sequence.ids.empty()) throw ContractError("forward_sequence: empty sequence");
  if (feature.size() != params.dims.feature) {
    throw DimensionError("forward_sequence: feature has " +
                         std::to_string(feature.size()) + " values, model expects " +
                         std::to_string(params.dims.feature));
  }
  if (start_id >= params.dims.vocab) {
    throw IndexError("forward_sequence: start id " + std::to_string(start_id) +
                     " outside vocabulary");
  }
  ad::Tape tape(ad::Tape::Mode::kNoGrad);
  const auto features = ad::Tensor::from_data(
      {1, feature.size()}, std::vector<double>(feature.begin(), feature.end()));
  const std::size_t steps = sequence.ids.size();
  const TokenId start[] = {start_id};
  const TeacherForcedOutput run =
      teacher_forced(tape, features, start, sequence.ids, steps, params);

  ForwardTrace trace;
  trace.image_distribution = ad::softmax(run.image_logits.data());
  for (const ad::Tensor& logits : run.logits) {
    trace.distributions.push_back(ad::softmax(logits.data()));
  }
  trace.inputs.push_back(start_id);
  for (std::size_t t = 0; t + 1 < steps; ++t) trace.inputs.push_back(sequence.ids[t]);
  trace.final_state = run.final_state;
  return trace;
}

StepDistribution step_distribution(const LstmState& state,
                                   const StepInput& input,
                                   const ModelParams& params) {
  ad::Tape tape(ad::Tape::Mode::kNoGrad);
  ad::Tensor x;
  if (const auto* id = std::get_if<TokenId>(&input)) {
    const TokenId ids[] = {*id};
    x = embed_tokens(tape, ids, params);
  } else {
    const auto feature = std::get<std::span<const double>>(input);
    x = project_image(
        tape,
        ad::Tensor::from_data({1, feature.size()},
                              std::vector<double>(feature.begin(), feature.end())),
        params);
  }
  StepOutput out = lstm_step(tape, x, state, params);
  return {std::move(out.state), ad::log_softmax(out.logits.data())};
}

LstmState initial_state(const ModelParams& params) {
  return LstmState::zeros(1, params.dims.hidden);
}

}  // namespace mlcap
