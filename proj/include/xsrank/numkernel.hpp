#pragma once

// Dense 64-bit tensors and a reverse-mode gradient tape.
//
// Tensors are rank-1 or rank-2 row-major arrays. Matrix-style operations treat
// a rank-1 tensor of length n as a single 1 x n row. Every public operation
// rejects results containing NaN or Inf with NumericError.

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "xsrank/errors.hpp"
#include "xsrank/rng.hpp"

namespace xsrank::nk {

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor filled(std::vector<std::size_t> shape, double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor scalar(double value) { return vector({value}); }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  /// Row count when viewed as a matrix (1 for rank-1).
  std::size_t rows() const noexcept { return shape_.size() == 2 ? shape_[0] : (shape_.empty() ? 0 : 1); }
  /// Column count when viewed as a matrix.
  std::size_t cols() const noexcept { return shape_.empty() ? 0 : shape_.back(); }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols(), cols()}; }

  bool all_finite() const noexcept;
  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

// Pure tensor functions. The tape variants below record these for backward.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// Row-wise softmax with max subtraction.
Tensor softmax(const Tensor& v);
/// Row-wise layer normalisation with population variance.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-6);
/// Inverted dropout; identity when !training or rate == 0.
Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training);

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape() const noexcept { return tape_; }
  std::uint32_t id() const noexcept { return id_; }
  const Tensor& value() const;

 private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

enum class Op : std::uint8_t {
  Leaf,
  Constant,
  MatMul,
  Add,
  Sub,
  Mul,
  AddRowBias,
  AddConstant,
  Scale,
  Tanh,
  Relu,
  SoftmaxRows,
  LayerNormRows,
  Dropout,
  Transpose,
  SliceCols,
  ConcatCols,
  Sum,
  Mean,
  ScalarFromGradient,
};

/// Single-owner record of operations in topological order.
///
/// Records are appended as operations execute, so every input id precedes the
/// record that consumes it. backward() replays the records once in reverse.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);
  Var constant(Tensor value);

  const Tensor& value(Var v) const;
  std::size_t size() const noexcept { return records_.size(); }
  Op op(Var v) const { return records_.at(v.id()).op; }

  /// Reverse-mode sweep from a scalar loss. Gradients from a previous call
  /// are discarded.
  void backward(Var loss);

  /// Gradient of the last backward() loss w.r.t. v; zeros if v was not reached.
  Tensor grad(Var v) const;
  std::vector<Tensor> gradients(std::span<const Var> leaves) const;

  void clear();

  // Recording entry points used by the free functions below.
  Var record(Op op, std::initializer_list<Var> inputs, Tensor value, Tensor saved = {},
             std::vector<double> saved_aux = {}, double scalar = 0.0, std::size_t aux = 0);
  Var record_concat(std::span<const Var> inputs, Tensor value);

 private:
  struct Record {
    Op op = Op::Leaf;
    std::array<std::uint32_t, 3> in{};
    std::uint8_t n_in = 0;
    std::vector<std::uint32_t> many_in;
    bool requires_grad = false;
    Tensor value;
    Tensor saved;
    std::vector<double> saved_aux;
    double scalar = 0.0;
    std::size_t aux = 0;
  };

  void check_owner(Var v) const;
  void propagate(const Record& r, const Tensor& g);
  Tensor& grad_slot(std::uint32_t id);

  std::vector<Record> records_;
  std::vector<Tensor> grads_;
  bool have_grads_ = false;
};

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// Adds a length-n bias to every row of an m x n value.
Var add_row_bias(Var x, Var bias);
/// Adds a constant tensor of the same shape; no gradient flows to it.
Var add_constant(Var x, const Tensor& c);
Var scale(Var x, double factor);
Var tanh(Var x);
Var relu(Var x);
Var softmax_rows(Var x);
Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-6);
Var dropout(Var x, double rate, Rng& rng, bool training);
Var transpose(Var x);
Var slice_cols(Var x, std::size_t start, std::size_t width);
Var concat_cols(std::span<const Var> parts);
Var sum(Var x);
Var mean(Var x);
/// Scalar node whose value and local gradient w.r.t. `input` were computed
/// outside the tape (fused losses).
Var scalar_from_gradient(Var input, double value, Tensor local_grad);

}  // namespace xsrank::nk
