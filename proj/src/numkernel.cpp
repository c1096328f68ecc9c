#include "xsrank/numkernel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

namespace xsrank::nk {

namespace {

std::string shape_str(const std::vector<std::size_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

void require_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) throw NumericError(std::string(what) + ": non-finite value produced");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_.empty() || shape_.size() > 2) throw ShapeError("tensor rank must be 1 or 2");
  std::size_t n = 1;
  for (const auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive");
    n *= d;
  }
  if (n != values_.size()) {
    throw ShapeError("tensor value count " + std::to_string(values_.size()) + " does not match shape " +
                     shape_str(shape_));
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(std::vector<std::size_t> shape, double value) {
  std::size_t n = 1;
  for (const auto d : shape) n *= d;
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul: operands must be rank-2");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " * " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  Tensor t = Tensor::matrix(m, n, std::move(out));
  require_finite(t, "matmul");
  return t;
}

Tensor transpose(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a(i, j);
  return Tensor::matrix(n, m, std::move(out));
}

Tensor softmax(const Tensor& v) {
  if (v.empty()) throw ShapeError("softmax: empty input");
  Tensor out = v;
  const std::size_t n = v.cols();
  for (std::size_t r = 0; r < v.rows(); ++r) {
    double* row = out.values().data() + r * n;
    const double mx = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      total += row[j];
    }
    for (std::size_t j = 0; j < n; ++j) row[j] /= total;
  }
  require_finite(out, "softmax");
  return out;
}

namespace {

// Shared forward for layer norm; fills normalised values and per-row 1/std.
Tensor layer_norm_impl(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps, Tensor* xhat_out,
                       std::vector<double>* inv_std_out) {
  const std::size_t n = x.cols();
  if (gain.size() != n || bias.size() != n) throw ShapeError("layer_norm: gain/bias length mismatch");
  if (!(eps >= 0.0)) throw ConfigError("layer_norm: eps must be non-negative");
  Tensor out = x;
  Tensor xhat = x;
  std::vector<double> inv_std(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    const double mu = std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (const double v : row) var += (v - mu) * (v - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (row[j] - mu) * is;
      xhat(r, j) = h;
      out(r, j) = h * gain[j] + bias[j];
    }
  }
  require_finite(out, "layer_norm");
  if (xhat_out) *xhat_out = std::move(xhat);
  if (inv_std_out) *inv_std_out = std::move(inv_std);
  return out;
}

Tensor dropout_mask(const Tensor& x, double rate, Rng& rng) {
  Tensor mask = Tensor::zeros(x.shape());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.uniform() < rate ? 0.0 : keep_scale;
  return mask;
}

void check_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout: rate must lie in [0, 1)");
}

}  // namespace

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  return layer_norm_impl(x, gain, bias, eps, nullptr, nullptr);
}

Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training) {
  check_rate(rate);
  if (!training || rate == 0.0) return x;
  Tensor mask = dropout_mask(x, rate, rng);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] *= x[i];
  return mask;
}

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const {
  if (!tape_) throw UsageError("Var is not attached to a tape");
  return tape_->value(*this);
}

Var Tape::leaf(Tensor value) {
  require_finite(value, "leaf");
  Record r;
  r.op = Op::Leaf;
  r.requires_grad = true;
  r.value = std::move(value);
  records_.push_back(std::move(r));
  return {this, static_cast<std::uint32_t>(records_.size() - 1)};
}

Var Tape::constant(Tensor value) {
  require_finite(value, "constant");
  Record r;
  r.op = Op::Constant;
  r.value = std::move(value);
  records_.push_back(std::move(r));
  return {this, static_cast<std::uint32_t>(records_.size() - 1)};
}

void Tape::check_owner(Var v) const {
  if (v.tape() != this || v.id() >= records_.size()) throw UsageError("value does not belong to this tape");
}

const Tensor& Tape::value(Var v) const {
  check_owner(v);
  return records_[v.id()].value;
}

Var Tape::record(Op op, std::initializer_list<Var> inputs, Tensor value, Tensor saved,
                 std::vector<double> saved_aux, double scalar, std::size_t aux) {
  require_finite(value, "tape op");
  Record r;
  r.op = op;
  for (const Var v : inputs) {
    check_owner(v);
    r.in[r.n_in++] = v.id();
    r.requires_grad = r.requires_grad || records_[v.id()].requires_grad;
  }
  r.value = std::move(value);
  r.saved = std::move(saved);
  r.saved_aux = std::move(saved_aux);
  r.scalar = scalar;
  r.aux = aux;
  records_.push_back(std::move(r));
  return {this, static_cast<std::uint32_t>(records_.size() - 1)};
}

Var Tape::record_concat(std::span<const Var> inputs, Tensor value) {
  Record r;
  r.op = Op::ConcatCols;
  for (const Var v : inputs) {
    check_owner(v);
    r.many_in.push_back(v.id());
    r.requires_grad = r.requires_grad || records_[v.id()].requires_grad;
  }
  r.value = std::move(value);
  records_.push_back(std::move(r));
  return {this, static_cast<std::uint32_t>(records_.size() - 1)};
}

void Tape::clear() {
  records_.clear();
  grads_.clear();
  have_grads_ = false;
}

Tensor& Tape::grad_slot(std::uint32_t id) {
  Tensor& g = grads_[id];
  if (g.empty()) g = Tensor::zeros(records_[id].value.shape());
  return g;
}

void Tape::backward(Var loss) {
  check_owner(loss);
  if (records_[loss.id()].value.size() != 1) throw ShapeError("backward: loss must be a scalar");
  grads_.assign(records_.size(), Tensor{});
  grads_[loss.id()] = Tensor::filled(records_[loss.id()].value.shape(), 1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    const Record& r = records_[i];
    if (!r.requires_grad || grads_[i].empty()) continue;
    propagate(r, grads_[i]);
  }
  have_grads_ = true;
}

Tensor Tape::grad(Var v) const {
  check_owner(v);
  if (!have_grads_) throw UsageError("grad requested before backward");
  const Tensor& g = grads_[v.id()];
  return g.empty() ? Tensor::zeros(records_[v.id()].value.shape()) : g;
}

std::vector<Tensor> Tape::gradients(std::span<const Var> leaves) const {
  std::vector<Tensor> out;
  out.reserve(leaves.size());
  for (const Var v : leaves) out.push_back(grad(v));
  return out;
}

void Tape::propagate(const Record& r, const Tensor& g) {
  auto needs = [&](std::uint32_t id) { return records_[id].requires_grad; };
  const auto a = r.in[0];
  const auto b = r.in[1];
  switch (r.op) {
    case Op::Leaf:
    case Op::Constant:
      break;
    case Op::MatMul: {
      const Tensor& av = records_[a].value;
      const Tensor& bv = records_[b].value;
      const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
      if (needs(a)) {
        Tensor& ga = grad_slot(a);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += g(i, j) * bv(p, j);
            ga(i, p) += acc;
          }
      }
      if (needs(b)) {
        Tensor& gb = grad_slot(b);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = av(i, p);
            for (std::size_t j = 0; j < n; ++j) gb(p, j) += aip * g(i, j);
          }
      }
      break;
    }
    case Op::Add:
      if (needs(a)) {
        Tensor& ga = grad_slot(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (needs(b)) {
        Tensor& gb = grad_slot(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
      break;
    case Op::Sub:
      if (needs(a)) {
        Tensor& ga = grad_slot(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (needs(b)) {
        Tensor& gb = grad_slot(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
      break;
    case Op::Mul: {
      const Tensor& av = records_[a].value;
      const Tensor& bv = records_[b].value;
      if (needs(a)) {
        Tensor& ga = grad_slot(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (needs(b)) {
        Tensor& gb = grad_slot(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
      break;
    }
    case Op::AddRowBias: {
      const std::size_t n = g.cols();
      if (needs(a)) {
        Tensor& ga = grad_slot(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (needs(b)) {
        Tensor& gb = grad_slot(b);
        for (std::size_t rr = 0; rr < g.rows(); ++rr)
          for (std::size_t j = 0; j < n; ++j) gb[j] += g(rr, j);
      }
      break;
    }
    case Op::AddConstant:
      if (needs(a)) {
        Tensor& ga = grad_slot(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      break;
    case Op::Scale:
      if (needs(a)) {
        Tensor& ga = grad_slot(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * r.scalar;
      }
      break;
    case Op::Tanh:
      if (needs(a)) {
        Tensor& ga = grad_slot(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - r.value[i] * r.value[i]);
      }
      break;
    case Op::Relu:
      if (needs(a)) {
        Tensor& ga = grad_slot(a);
        const Tensor& av = records_[a].value;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += av[i] > 0.0 ? g[i] : 0.0;
      }
      break;
    case Op::SoftmaxRows:
      if (needs(a)) {
        Tensor& ga = grad_slot(a);
        const Tensor& y = r.value;
        const std::size_t n = y.cols();
        for (std::size_t rr = 0; rr < y.rows(); ++rr) {
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += g(rr, j) * y(rr, j);
          for (std::size_t j = 0; j < n; ++j) ga(rr, j) += y(rr, j) * (g(rr, j) - dot);
        }
      }
      break;
    case Op::LayerNormRows: {
      const auto c = r.in[2];
      const Tensor& xhat = r.saved;
      const Tensor& gain = records_[b].value;
      const std::size_t n = xhat.cols();
      const double inv_n = 1.0 / static_cast<double>(n);
      if (needs(a)) {
        Tensor& ga = grad_slot(a);
        for (std::size_t rr = 0; rr < xhat.rows(); ++rr) {
          double sum_d = 0.0, sum_dx = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double d = g(rr, j) * gain[j];
            sum_d += d;
            sum_dx += d * xhat(rr, j);
          }
          const double is = r.saved_aux[rr];
          for (std::size_t j = 0; j < n; ++j) {
            const double d = g(rr, j) * gain[j];
            ga(rr, j) += is * (d - inv_n * sum_d - xhat(rr, j) * inv_n * sum_dx);
          }
        }
      }
      if (needs(b)) {
        Tensor& gg = grad_slot(b);
        for (std::size_t rr = 0; rr < xhat.rows(); ++rr)
          for (std::size_t j = 0; j < n; ++j) gg[j] += g(rr, j) * xhat(rr, j);
      }
      if (needs(c)) {
        Tensor& gbias = grad_slot(c);
        for (std::size_t rr = 0; rr < xhat.rows(); ++rr)
          for (std::size_t j = 0; j < n; ++j) gbias[j] += g(rr, j);
      }
      break;
    }
    case Op::Dropout:
      if (needs(a)) {
        Tensor& ga = grad_slot(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * r.saved[i];
      }
      break;
    case Op::Transpose:
      if (needs(a)) {
        Tensor& ga = grad_slot(a);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) ga(j, i) += g(i, j);
      }
      break;
    case Op::SliceCols:
      if (needs(a)) {
        Tensor& ga = grad_slot(a);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) ga(i, r.aux + j) += g(i, j);
      }
      break;
    case Op::ConcatCols: {
      std::size_t offset = 0;
      for (const auto id : r.many_in) {
        const std::size_t w = records_[id].value.cols();
        if (needs(id)) {
          Tensor& gi = grad_slot(id);
          for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < w; ++j) gi(i, j) += g(i, offset + j);
        }
        offset += w;
      }
      break;
    }
    case Op::Sum:
      if (needs(a)) {
        Tensor& ga = grad_slot(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
      }
      break;
    case Op::Mean:
      if (needs(a)) {
        Tensor& ga = grad_slot(a);
        const double w = g[0] / static_cast<double>(ga.size());
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += w;
      }
      break;
    case Op::ScalarFromGradient:
      if (needs(a)) {
        Tensor& ga = grad_slot(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0] * r.saved[i];
      }
      break;
  }
}

// ---------------------------------------------------------------------------
// Recorded operations

namespace {

Tape& tape_of(Var a, Var b) {
  if (!a.tape() || a.tape() != b.tape()) throw UsageError("operands belong to different tapes");
  return *a.tape();
}

Tape& tape_of(Var a) {
  if (!a.tape()) throw UsageError("operand is not attached to a tape");
  return *a.tape();
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  return t.record(Op::MatMul, {a, b}, matmul(a.value(), b.value()));
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return t.record(Op::Add, {a, b}, std::move(out));
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return t.record(Op::Sub, {a, b}, std::move(out));
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return t.record(Op::Mul, {a, b}, std::move(out));
}

Var add_row_bias(Var x, Var bias) {
  Tape& t = tape_of(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (bv.size() != xv.cols()) throw ShapeError("add_row_bias: bias length must equal column count");
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t j = 0; j < out.cols(); ++j) out(r, j) += bv[j];
  return t.record(Op::AddRowBias, {x, bias}, std::move(out));
}

Var add_constant(Var x, const Tensor& c) {
  Tape& t = tape_of(x);
  require_same_shape(x.value(), c, "add_constant");
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += c[i];
  return t.record(Op::AddConstant, {x}, std::move(out));
}

Var scale(Var x, double factor) {
  Tape& t = tape_of(x);
  Tensor out = x.value();
  for (auto& v : out.values()) v *= factor;
  return t.record(Op::Scale, {x}, std::move(out), {}, {}, factor);
}

Var tanh(Var x) {
  Tape& t = tape_of(x);
  Tensor out = x.value();
  for (auto& v : out.values()) v = std::tanh(v);
  return t.record(Op::Tanh, {x}, std::move(out));
}

Var relu(Var x) {
  Tape& t = tape_of(x);
  Tensor out = x.value();
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return t.record(Op::Relu, {x}, std::move(out));
}

Var softmax_rows(Var x) {
  Tape& t = tape_of(x);
  return t.record(Op::SoftmaxRows, {x}, softmax(x.value()));
}

Var layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  Tape& t = tape_of(x, gain);
  tape_of(x, bias);
  Tensor xhat;
  std::vector<double> inv_std;
  Tensor out = layer_norm_impl(x.value(), gain.value(), bias.value(), eps, &xhat, &inv_std);
  return t.record(Op::LayerNormRows, {x, gain, bias}, std::move(out), std::move(xhat), std::move(inv_std));
}

Var dropout(Var x, double rate, Rng& rng, bool training) {
  check_rate(rate);
  if (!training || rate == 0.0) return x;
  Tape& t = tape_of(x);
  Tensor mask = dropout_mask(x.value(), rate, rng);
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return t.record(Op::Dropout, {x}, std::move(out), std::move(mask));
}

Var transpose(Var x) {
  Tape& t = tape_of(x);
  return t.record(Op::Transpose, {x}, transpose(x.value()));
}

Var slice_cols(Var x, std::size_t start, std::size_t width) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  if (width == 0 || start + width > xv.cols()) throw ShapeError("slice_cols: range out of bounds");
  std::vector<double> out(xv.rows() * width);
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t j = 0; j < width; ++j) out[r * width + j] = xv(r, start + j);
  return t.record(Op::SliceCols, {x}, Tensor::matrix(xv.rows(), width, std::move(out)), {}, {}, 0.0, start);
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Tape& t = tape_of(parts.front());
  const std::size_t rows = parts.front().value().rows();
  std::size_t width = 0;
  for (const Var p : parts) {
    tape_of(parts.front(), p);
    if (p.value().rows() != rows) throw ShapeError("concat_cols: row counts differ");
    width += p.value().cols();
  }
  std::vector<double> out(rows * width);
  std::size_t offset = 0;
  for (const Var p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < pv.cols(); ++j) out[r * width + offset + j] = pv(r, j);
    offset += pv.cols();
  }
  return t.record_concat(parts, Tensor::matrix(rows, width, std::move(out)));
}

Var sum(Var x) {
  Tape& t = tape_of(x);
  const auto v = x.value().values();
  return t.record(Op::Sum, {x}, Tensor::scalar(std::accumulate(v.begin(), v.end(), 0.0)));
}

Var mean(Var x) {
  Tape& t = tape_of(x);
  const auto v = x.value().values();
  return t.record(Op::Mean, {x},
                  Tensor::scalar(std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size())));
}

Var scalar_from_gradient(Var input, double value, Tensor local_grad) {
  Tape& t = tape_of(input);
  if (local_grad.size() != input.value().size()) throw ShapeError("scalar_from_gradient: gradient size mismatch");
  require_finite(local_grad, "scalar_from_gradient");
  return t.record(Op::ScalarFromGradient, {input}, Tensor::scalar(value), std::move(local_grad));
}

}  // namespace xsrank::nk
