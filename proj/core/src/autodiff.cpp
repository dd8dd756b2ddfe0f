#include "mlcap/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mlcap/errors.hpp"

namespace mlcap::ad {

std::size_t num_elements(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return filled(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  const std::size_t n = num_elements(shape);
  return from_data(std::move(shape), std::vector<double>(n, value),
                   requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) {
      throw DimensionError("tensor dimensions must be positive, got " +
                           shape_string(shape));
    }
  }
  if (num_elements(shape) != data.size()) {
    throw DimensionError("tensor shape " + shape_string(shape) + " needs " +
                         std::to_string(num_elements(shape)) +
                         " values, got " + std::to_string(data.size()));
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({}, {value}, requires_grad);
}

Tensor::Impl& Tensor::impl() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }
std::size_t Tensor::size() const { return impl().data.size(); }

std::size_t Tensor::rows() const {
  if (rank() != 2) {
    throw DimensionError("rows() needs a matrix, got " +
                         shape_string(shape()));
  }
  return shape()[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) {
    throw DimensionError("cols() needs a matrix, got " +
                         shape_string(shape()));
  }
  return shape()[1];
}

std::span<double> Tensor::data() { return impl().data; }
std::span<const double> Tensor::data() const { return impl().data; }

double Tensor::item() const {
  if (size() != 1) {
    throw DimensionError("item() needs a single element, got " +
                         shape_string(shape()));
  }
  return impl().data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  return impl().data[row * cols() + col];
}

bool Tensor::requires_grad() const { return impl().requires_grad; }
bool Tensor::is_leaf() const { return impl().leaf; }
bool Tensor::has_grad() const { return impl().grad.has_value(); }

std::span<const double> Tensor::grad() const {
  if (!impl().grad) throw ContractError("tensor has no gradient");
  return *impl().grad;
}

std::span<double> Tensor::mutable_grad() const {
  Impl& self = impl();
  if (!self.grad) self.grad.emplace(self.data.size(), 0.0);
  return *self.grad;
}

void Tensor::zero_grad() { impl().grad.reset(); }

Tensor Tensor::clone() const {
  return from_data(shape(), impl().data, requires_grad());
}

// ---------------------------------------------------------------------------
// Tape

Tensor Tape::emit(Shape shape, std::vector<double> data,
                  std::vector<Tensor> inputs, BackwardRule rule) {
  Tensor out = Tensor::from_data(std::move(shape), std::move(data));
  const bool tracked =
      recording() && std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
  if (tracked) {
    out.impl().requires_grad = true;
    out.impl().leaf = false;
    records_.push_back(Record{std::move(inputs), out, std::move(rule)});
  }
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward needs a scalar loss, got " +
                        (loss.defined() ? shape_string(loss.shape())
                                        : std::string("undefined")));
  }
  if (consumed_) {
    throw ContractError(
        "backward already ran on this tape; build a new tape and reset "
        "gradients with zero_grad()");
  }
  consumed_ = true;
  if (!loss.requires_grad()) return;

  Tensor root = loss;
  if (root.is_leaf()) {
    if (root.has_grad()) {
      throw ContractError("stale gradient on loss leaf; call zero_grad()");
    }
    root.mutable_grad()[0] = 1.0;
    return;
  }

  std::size_t end = records_.size();
  while (end > 0 && !records_[end - 1].output.same_object(root)) --end;
  if (end == 0) throw ContractError("loss tensor was not produced by this tape");

  for (std::size_t r = 0; r < end; ++r) {
    for (const Tensor& in : records_[r].inputs) {
      if (in.requires_grad() && in.is_leaf() && in.has_grad()) {
        throw ContractError(
            "leaf tensor still holds a gradient from an earlier backward "
            "pass; call zero_grad() first");
      }
    }
  }

  root.mutable_grad()[0] = 1.0;
  for (std::size_t r = end; r-- > 0;) {
    Record& rec = records_[r];
    if (!rec.output.has_grad()) continue;
    rec.rule(rec.output.grad());
  }
}

// ---------------------------------------------------------------------------
// Operations

namespace {

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) {
    throw ContractError(std::string(op) + ": undefined operand");
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_matrix(const Tensor& t, const char* op) {
  require_defined(t, op);
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " +
                         shape_string(t.shape()));
  }
}

// Applies f elementwise; dfdx maps (input, output) to the local derivative.
template <typename F, typename D>
Tensor unary(Tape& tape, const Tensor& a, const char* op, F f, D dfdx) {
  require_defined(a, op);
  const auto in = a.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  std::vector<double> saved = out;
  return tape.emit(a.shape(), std::move(out), {a},
                   [a, saved = std::move(saved), dfdx](std::span<const double> g) {
                     auto ga = a.mutable_grad();
                     const auto x = a.data();
                     for (std::size_t i = 0; i < g.size(); ++i) {
                       ga[i] += g[i] * dfdx(x[i], saved[i]);
                     }
                   });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Writes -log softmax(row)[target] and the softmax probabilities.
double row_cross_entropy(std::span<const double> row, std::size_t target,
                         std::span<double> probs) {
  const double max = *std::max_element(row.begin(), row.end());
  double total = 0.0;
  for (std::size_t j = 0; j < row.size(); ++j) {
    probs[j] = std::exp(row[j] - max);
    total += probs[j];
  }
  for (double& p : probs) p /= total;
  return std::log(total) - (row[target] - max);
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree for " +
                         shape_string(a.shape()) + " * " +
                         shape_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ad[i * k + p];
      const double* brow = bd.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return tape.emit({m, n}, std::move(out), {a, b},
                   [a, b, m, k, n](std::span<const double> g) {
                     const auto ad = a.data();
                     const auto bd = b.data();
                     if (a.requires_grad()) {
                       auto ga = a.mutable_grad();
                       for (std::size_t i = 0; i < m; ++i) {
                         for (std::size_t p = 0; p < k; ++p) {
                           double acc = 0.0;
                           for (std::size_t j = 0; j < n; ++j) {
                             acc += g[i * n + j] * bd[p * n + j];
                           }
                           ga[i * k + p] += acc;
                         }
                       }
                     }
                     if (b.requires_grad()) {
                       auto gb = b.mutable_grad();
                       for (std::size_t i = 0; i < m; ++i) {
                         for (std::size_t p = 0; p < k; ++p) {
                           const double aip = ad[i * k + p];
                           double* grow = gb.data() + p * n;
                           for (std::size_t j = 0; j < n; ++j) {
                             grow[j] += aip * g[i * n + j];
                           }
                         }
                       }
                     }
                   });
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  return tape.emit(a.shape(), std::move(out), {a, b},
                   [a, b](std::span<const double> g) {
                     if (a.requires_grad()) {
                       auto ga = a.mutable_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                     }
                     if (b.requires_grad()) {
                       auto gb = b.mutable_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                     }
                   });
}

Tensor hadamard(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  return tape.emit(a.shape(), std::move(out), {a, b},
                   [a, b](std::span<const double> g) {
                     if (a.requires_grad()) {
                       auto ga = a.mutable_grad();
                       const auto bd = b.data();
                       for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bd[i];
                     }
                     if (b.requires_grad()) {
                       auto gb = b.mutable_grad();
                       const auto ad = a.data();
                       for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ad[i];
                     }
                   });
}

Tensor sigmoid(Tape& tape, const Tensor& a) {
  return unary(tape, a, "sigmoid", stable_sigmoid,
               [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(Tape& tape, const Tensor& a) {
  return unary(tape, a, "tanh", [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor add_bias(Tape& tape, const Tensor& a, const Tensor& bias) {
  require_matrix(a, "add_bias");
  require_defined(bias, "add_bias");
  const std::size_t m = a.rows(), n = a.cols();
  if (bias.rank() != 1 || bias.size() != n) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) +
                         " does not match rows of " + shape_string(a.shape()));
  }
  const auto ad = a.data();
  const auto bd = bias.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = ad[i * n + j] + bd[j];
  }
  return tape.emit(a.shape(), std::move(out), {a, bias},
                   [a, bias, m, n](std::span<const double> g) {
                     if (a.requires_grad()) {
                       auto ga = a.mutable_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                     }
                     if (bias.requires_grad()) {
                       auto gb = bias.mutable_grad();
                       for (std::size_t i = 0; i < m; ++i) {
                         for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
                       }
                     }
                   });
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  return unary(tape, a, "scale", [factor](double x) { return factor * x; },
               [factor](double, double) { return factor; });
}

Tensor sum(Tape& tape, const Tensor& a) {
  require_defined(a, "sum");
  double total = 0.0;
  for (double x : a.data()) total += x;
  return tape.emit({}, {total}, {a}, [a](std::span<const double> g) {
    auto ga = a.mutable_grad();
    for (double& x : ga) x += g[0];
  });
}

Tensor reshape(Tape& tape, const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  if (num_elements(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + shape_string(a.shape()) +
                         " as " + shape_string(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return tape.emit(std::move(shape), std::move(out), {a},
                   [a](std::span<const double> g) {
                     auto ga = a.mutable_grad();
                     for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                   });
}

Tensor slice_cols(Tape& tape, const Tensor& a, std::size_t begin,
                  std::size_t count) {
  require_matrix(a, "slice_cols");
  const std::size_t m = a.rows(), n = a.cols();
  if (count == 0 || begin + count > n) {
    throw DimensionError("slice_cols: columns [" + std::to_string(begin) +
                         ", " + std::to_string(begin + count) +
                         ") outside " + shape_string(a.shape()));
  }
  const auto ad = a.data();
  std::vector<double> out(m * count);
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(ad.begin() + static_cast<std::ptrdiff_t>(i * n + begin), count,
                out.begin() + static_cast<std::ptrdiff_t>(i * count));
  }
  return tape.emit({m, count}, std::move(out), {a},
                   [a, m, n, begin, count](std::span<const double> g) {
                     auto ga = a.mutable_grad();
                     for (std::size_t i = 0; i < m; ++i) {
                       for (std::size_t j = 0; j < count; ++j) {
                         ga[i * n + begin + j] += g[i * count + j];
                       }
                     }
                   });
}

Tensor gather_rows(Tape& tape, const Tensor& table,
                   std::span<const std::size_t> ids) {
  require_matrix(table, "gather_rows");
  if (ids.empty()) throw DimensionError("gather_rows: no ids");
  const std::size_t v = table.rows(), e = table.cols();
  const auto td = table.data();
  std::vector<double> out(ids.size() * e);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= v) {
      throw IndexError("gather_rows: id " + std::to_string(ids[r]) +
                       " outside table of " + std::to_string(v) + " rows");
    }
    std::copy_n(td.begin() + static_cast<std::ptrdiff_t>(ids[r] * e), e,
                out.begin() + static_cast<std::ptrdiff_t>(r * e));
  }
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  return tape.emit({ids.size(), e}, std::move(out), {table},
                   [table, rows = std::move(rows), e](std::span<const double> g) {
                     auto gt = table.mutable_grad();
                     for (std::size_t r = 0; r < rows.size(); ++r) {
                       for (std::size_t j = 0; j < e; ++j) {
                         gt[rows[r] * e + j] += g[r * e + j];
                       }
                     }
                   });
}

Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits,
                             std::size_t target) {
  require_defined(logits, "softmax_cross_entropy");
  const bool vector = logits.rank() == 1;
  const bool row = logits.rank() == 2 && logits.shape()[0] == 1;
  if (!vector && !row) {
    throw DimensionError("softmax_cross_entropy: expected [V] or [1xV], got " +
                         shape_string(logits.shape()));
  }
  const std::size_t v = logits.size();
  if (target >= v) {
    throw IndexError("softmax_cross_entropy: target " + std::to_string(target) +
                     " outside vocabulary of " + std::to_string(v));
  }
  std::vector<double> probs(v);
  const double loss = row_cross_entropy(logits.data(), target, probs);
  return tape.emit({}, {loss}, {logits},
                   [logits, probs = std::move(probs), target](std::span<const double> g) {
                     auto gl = logits.mutable_grad();
                     for (std::size_t j = 0; j < probs.size(); ++j) {
                       gl[j] += g[0] * (probs[j] - (j == target ? 1.0 : 0.0));
                     }
                   });
}

Tensor weighted_cross_entropy(Tape& tape, const Tensor& logits,
                              std::span<const std::size_t> targets,
                              std::span<const double> weights) {
  require_matrix(logits, "weighted_cross_entropy");
  const std::size_t b = logits.rows(), v = logits.cols();
  if (targets.size() != b || weights.size() != b) {
    throw DimensionError("weighted_cross_entropy: " + std::to_string(b) +
                         " rows but " + std::to_string(targets.size()) +
                         " targets and " + std::to_string(weights.size()) +
                         " weights");
  }
  const auto ld = logits.data();
  std::vector<double> probs(b * v, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    if (weights[i] == 0.0) continue;
    if (targets[i] >= v) {
      throw IndexError("weighted_cross_entropy: target " +
                       std::to_string(targets[i]) + " outside vocabulary of " +
                       std::to_string(v));
    }
    const double loss =
        row_cross_entropy(ld.subspan(i * v, v), targets[i],
                          std::span<double>(probs).subspan(i * v, v));
    total += weights[i] * loss;
  }
  std::vector<std::size_t> t(targets.begin(), targets.end());
  std::vector<double> w(weights.begin(), weights.end());
  return tape.emit({}, {total}, {logits},
                   [logits, probs = std::move(probs), t = std::move(t),
                    w = std::move(w), v](std::span<const double> g) {
                     auto gl = logits.mutable_grad();
                     for (std::size_t i = 0; i < t.size(); ++i) {
                       if (w[i] == 0.0) continue;
                       const double s = g[0] * w[i];
                       for (std::size_t j = 0; j < v; ++j) {
                         gl[i * v + j] +=
                             s * (probs[i * v + j] - (j == t[i] ? 1.0 : 0.0));
                       }
                     }
                   });
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw DimensionError("softmax: empty input");
  const double max = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - max);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  if (logits.empty()) throw DimensionError("log_softmax: empty input");
  const double max = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double x : logits) total += std::exp(x - max);
  const double log_total = std::log(total);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = logits[i] - max - log_total;
  }
  return out;
}

}  // namespace mlcap::ad
