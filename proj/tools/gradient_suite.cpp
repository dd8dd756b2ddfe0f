#include "gradient_suite.hpp"

#include <functional>

#include "mlcap/trainer.hpp"

namespace mlcap::cli {
namespace {

ad::Tensor random_tensor(Rng& rng, ad::Shape shape, bool requires_grad = true) {
  std::vector<double> data(ad::num_elements(shape));
  for (double& x : data) x = rng.uniform(-1.0, 1.0);
  return ad::Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

// Contracting against a fixed random tensor gives every output entry a
// distinct weight, which sum() alone would not.
ad::Tensor contract(ad::Tape& tape, const ad::Tensor& x, const ad::Tensor& weights) {
  return ad::sum(tape, ad::hadamard(tape, x, weights));
}

std::vector<ad::Tensor> param_list(ModelParams& params) {
  std::vector<ad::Tensor> out;
  for (ad::Tensor* t : params.tensors()) out.push_back(*t);
  return out;
}

}  // namespace

void randomize(ModelParams& params, Rng& rng, double lo, double hi) {
  for (ad::Tensor* t : params.tensors()) {
    for (double& x : t->data()) x = rng.uniform(lo, hi);
  }
}

std::vector<SuiteEntry> run_gradient_suite(std::uint64_t seed, double h, double tolerance) {
  Rng rng = Rng::substream(seed, "gradcheck");
  std::vector<SuiteEntry> entries;
  const auto check = [&](std::string name, const ad::ScalarFunction& f,
                         std::vector<ad::Tensor> inputs) {
    SuiteEntry entry{std::move(name), ad::gradient_check(f, inputs, h), false};
    entry.passed = entry.result.max_relative_error < tolerance;
    entries.push_back(std::move(entry));
  };

  {
    ad::Tensor a = random_tensor(rng, {3, 4});
    ad::Tensor b = random_tensor(rng, {4, 2});
    const ad::Tensor w = random_tensor(rng, {3, 2}, false);
    check("matmul", [&](ad::Tape& t) { return contract(t, ad::matmul(t, a, b), w); }, {a, b});
  }
  {
    ad::Tensor a = random_tensor(rng, {5});
    ad::Tensor b = random_tensor(rng, {5});
    const ad::Tensor w = random_tensor(rng, {5}, false);
    check("add", [&](ad::Tape& t) { return contract(t, ad::add(t, a, b), w); }, {a, b});
    check("hadamard", [&](ad::Tape& t) { return contract(t, ad::hadamard(t, a, b), w); }, {a, b});
    check("sigmoid", [&](ad::Tape& t) { return contract(t, ad::sigmoid(t, a), w); }, {a});
    check("tanh", [&](ad::Tape& t) { return contract(t, ad::tanh(t, a), w); }, {a});
    check("scale", [&](ad::Tape& t) { return contract(t, ad::scale(t, a, -1.7), w); }, {a});
  }
  {
    ad::Tensor m = random_tensor(rng, {3, 4});
    ad::Tensor bias = random_tensor(rng, {4});
    const ad::Tensor w = random_tensor(rng, {3, 4}, false);
    const ad::Tensor w2 = random_tensor(rng, {3, 2}, false);
    check("add_bias", [&](ad::Tape& t) { return contract(t, ad::add_bias(t, m, bias), w); },
          {m, bias});
    check("slice_cols",
          [&](ad::Tape& t) { return contract(t, ad::slice_cols(t, m, 1, 2), w2); }, {m});
  }
  {
    ad::Tensor table = random_tensor(rng, {5, 3});
    const std::vector<std::size_t> ids = {4, 0, 4};
    const ad::Tensor w = random_tensor(rng, {3, 3}, false);
    check("gather_rows",
          [&](ad::Tape& t) { return contract(t, ad::gather_rows(t, table, ids), w); }, {table});
  }
  {
    ad::Tensor logits = random_tensor(rng, {7});
    check("softmax_cross_entropy",
          [&](ad::Tape& t) { return ad::softmax_cross_entropy(t, logits, 3); }, {logits});
  }
  {
    ModelParams params = zero_params({4, 3, 2, 2});
    randomize(params, rng);
    const ad::Tensor x = random_tensor(rng, {1, 3}, false);
    const LstmState state{random_tensor(rng, {1, 2}, false), random_tensor(rng, {1, 2}, false)};
    check("lstm_step",
          [&](ad::Tape& t) { return ad::sum(t, lstm_step(t, x, state, params).logits); },
          param_list(params));
  }
  {
    const ModelDims dims{10, 6, 8, 5};
    ModelParams params = zero_params(dims);
    randomize(params, rng);
    std::vector<TrainingExample> examples(2);
    examples[0].target.ids = {4, 7, 9, Vocabulary::kEos};
    examples[0].start_id = 3;
    examples[1].target.ids = {8, 5, Vocabulary::kEos};
    examples[1].start_id = 3;
    for (auto& ex : examples) {
      ex.image_id = "gradcheck";
      ex.feature.resize(dims.feature);
      for (double& x : ex.feature) x = rng.uniform(-1.0, 1.0);
    }
    const Batch batch = make_batch(examples);
    check("sequence_loss",
          [&](ad::Tape& t) { return sequence_loss(t, batch, params); }, param_list(params));
  }
  return entries;
}

}  // namespace mlcap::cli
