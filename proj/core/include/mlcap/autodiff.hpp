#pragma once

// Minimal reverse-mode automatic differentiation over dense float64 tensors.
//
// A Tensor is a shared handle to a row-major buffer. Leaf tensors created with
// requires_grad = true act as trainable inputs; every operation taking at least
// one such input is recorded on a Tape together with its backward rule.
// Tape::backward replays those rules in reverse order.
//
// Gradients are not accumulated across backward passes: a leaf that still holds
// a gradient from an earlier pass makes backward throw until zero_grad() is
// called on it.

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mlcap::ad {

using Shape = std::vector<std::size_t>;

std::size_t num_elements(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor {
 public:
  // Null handle; most operations reject it.
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t rows() const;  // rank-2 only
  std::size_t cols() const;  // rank-2 only

  std::span<double> data();
  std::span<const double> data() const;
  double item() const;  // single-element tensors only
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;  // throws when absent
  // Handle semantics: usable through a const handle, like shared_ptr.
  std::span<double> mutable_grad() const;  // allocates zeros when absent
  void zero_grad();                      // drops the gradient buffer

  // Deep copy of data (gradient not copied); same requires_grad flag.
  Tensor clone() const;

  bool same_object(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::optional<std::vector<double>> grad;
    bool requires_grad = false;
    bool leaf = true;
  };

  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  Impl& impl() const;

  std::shared_ptr<Impl> impl_;

  friend class Tape;
};

class Tape {
 public:
  enum class Mode { kRecord, kNoGrad };

  explicit Tape(Mode mode = Mode::kRecord) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  bool recording() const { return mode_ == Mode::kRecord; }
  std::size_t size() const { return records_.size(); }

  // Populates grad() on every requires_grad tensor reachable from `loss`.
  // Throws ContractError for a non-scalar loss, a loss produced elsewhere, a
  // second call on the same tape, or a leaf still carrying a gradient.
  void backward(const Tensor& loss);

  using BackwardRule = std::function<void(std::span<const double> out_grad)>;

  // Creates the output tensor of an operation. When recording and any input
  // requires a gradient, the output requires one too and the rule is stored.
  Tensor emit(Shape shape, std::vector<double> data,
              std::vector<Tensor> inputs, BackwardRule rule);

 private:
  struct Record {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardRule rule;
  };

  Mode mode_;
  bool consumed_ = false;
  std::vector<Record> records_;
};

// Operations. Shapes: matrices are rank 2, vectors rank 1, scalars rank 0.
// Shape violations throw DimensionError naming the offending shapes.

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor hadamard(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sigmoid(Tape& tape, const Tensor& a);
Tensor tanh(Tape& tape, const Tensor& a);

// The only broadcast: bias[n] added to every row of a[m x n].
Tensor add_bias(Tape& tape, const Tensor& a, const Tensor& bias);

Tensor scale(Tape& tape, const Tensor& a, double factor);
Tensor sum(Tape& tape, const Tensor& a);
Tensor reshape(Tape& tape, const Tensor& a, Shape shape);

// Columns [begin, begin + count) of a rank-2 tensor.
Tensor slice_cols(Tape& tape, const Tensor& a, std::size_t begin,
                  std::size_t count);

// Row lookup table[ids[i]] for each i; equals one-hot(ids) * table.
Tensor gather_rows(Tape& tape, const Tensor& table,
                   std::span<const std::size_t> ids);

// -log softmax(logits)[target] for a single logit vector ([V] or [1 x V]).
Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits,
                             std::size_t target);

// sum_i weights[i] * -log softmax(logits[i])[targets[i]] over rows of
// logits[B x V]. Rows with weight 0 contribute neither loss nor gradient.
Tensor weighted_cross_entropy(Tape& tape, const Tensor& logits,
                              std::span<const std::size_t> targets,
                              std::span<const double> weights);

// Untaped helpers, max-subtracted.
std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);

}  // namespace mlcap::ad
