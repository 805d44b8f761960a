// Copyright 2026 The hsdacs Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "hsdacs/tensor.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include "hsdacs/errors.h"

namespace hsdacs {

struct TensorAccess {
  static detail::TensorImpl& impl(const Tensor& t) { return *t.impl_; }
};

namespace {

thread_local GradTape* g_active_tape = nullptr;

detail::TensorImpl& impl(const Tensor& t) { return TensorAccess::impl(t); }

// Gradient buffer of t, zero-allocated on first use.
std::span<double> grad_buffer(const Tensor& t) {
  auto& i = impl(t);
  if (i.grad.empty()) i.grad.assign(i.data.size(), 0.0);
  return i.grad;
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " +
                         shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

// c[m x n] += a[m x k] * b[k x n]. Each output element accumulates over k in
// ascending order, which is the same order as dot().
void gemm_accumulate(const double* __restrict a, const double* __restrict b,
                     double* __restrict c, std::size_t m, std::size_t k,
                     std::size_t n) {
  std::size_t i = 0;
  // Four output rows share each pass over b.
  for (; i + 4 <= m; i += 4) {
    double* __restrict c0 = c + i * n;
    double* __restrict c1 = c0 + n;
    double* __restrict c2 = c1 + n;
    double* __restrict c3 = c2 + n;
    const double* a0 = a + i * k;
    const double* a1 = a0 + k;
    const double* a2 = a1 + k;
    const double* a3 = a2 + k;
    for (std::size_t p = 0; p < k; ++p) {
      const double x0 = a0[p], x1 = a1[p], x2 = a2[p], x3 = a3[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double bj = brow[j];
        c0[j] += x0 * bj;
        c1[j] += x1 * bj;
        c2[j] += x2 * bj;
        c3[j] += x3 * bj;
      }
    }
  }
  for (; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

std::vector<double> transposed(std::span<const double> a, std::size_t rows,
                               std::size_t cols) {
  std::vector<double> t(a.size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = a[i * cols + j];
  return t;
}

// Softmax of one row; masked columns (allowed[j] == 0) get exactly 0.
void softmax_row(const double* x, double* y, std::size_t n,
                 const AttentionMask* mask, std::size_t r) {
  double max = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t j = 0; j < n; ++j) {
    if (mask && !(*mask)(r, j)) continue;
    max = any ? std::max(max, x[j]) : x[j];
    any = true;
  }
  if (!any) throw ContractError("softmax_rows: row " + std::to_string(r) +
                                " has no attendable column");
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    y[j] = (mask && !(*mask)(r, j)) ? 0.0 : std::exp(x[j] - max);
    total += y[j];
  }
  for (std::size_t j = 0; j < n; ++j) y[j] = y[j] / total;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : Tensor(Shape{}, 0.0) {}

Tensor::Tensor(Shape shape, double fill)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("Tensor: shape " + shape_string(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, value); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("Tensor::matrix: ragged rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r, c}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
  return impl_->shape.empty() ? 1 : impl_->shape.front();
}

std::size_t Tensor::cols() const {
  return impl_->shape.empty() ? 1 : impl_->shape.back();
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const double>(impl_->data).subspan(r * c, c);
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item: tensor of shape " + shape_string(shape()) +
                        " is not a scalar");
  }
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool value) {
  impl_->requires_grad = value;
  return *this;
}

std::span<double> Tensor::mutable_grad() { return grad_buffer(*this); }

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data); }

Tensor Tensor::reshape(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw DimensionError("reshape: cannot view " + shape_string(this->shape()) +
                         " as " + shape_string(shape));
  }
  Tensor out(std::move(shape), impl_->data);
  if (GradTape::should_record({this})) {
    Tensor self = *this;
    GradTape::record(out, [self](std::span<const double> g) {
      auto gx = grad_buffer(self);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// GradTape

GradTape::GradTape() : previous_(g_active_tape) { g_active_tape = this; }

GradTape::~GradTape() { g_active_tape = previous_; }

GradTape* GradTape::active() { return g_active_tape; }

bool GradTape::should_record(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

void GradTape::record(Tensor& out, BackwardFn fn) {
  if (g_active_tape == nullptr) return;
  out.impl_->requires_grad = true;
  g_active_tape->records_.push_back(Record{out.impl_, std::move(fn)});
}

void GradTape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward: loss is not connected to any parameter");
  }
  grad_buffer(loss)[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // not reachable from loss
    it->backward(it->output->grad);
  }
}

// ---------------------------------------------------------------------------
// Scalar kernels

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void softmax_inplace(std::span<double> row) {
  std::vector<double> in(row.begin(), row.end());
  softmax_row(in.data(), row.data(), row.size(), nullptr, 0);
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ, " +
                         shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Tensor out(Shape{m, n});
  gemm_accumulate(a.values().data(), b.values().data(),
                  out.mutable_values().data(), m, k, n);
  if (GradTape::should_record({&a, &b})) {
    GradTape::record(out, [a, b, m, k, n](std::span<const double> g) {
      if (a.requires_grad()) {
        const auto bt = transposed(b.values(), k, n);
        gemm_accumulate(g.data(), bt.data(), grad_buffer(a).data(), m, n, k);
      }
      if (b.requires_grad()) {
        const auto at = transposed(a.values(), m, k);
        gemm_accumulate(at.data(), g.data(), grad_buffer(b).data(), k, m, n);
      }
    });
  }
  return out;
}

Tensor matmul_transposed(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_transposed");
  require_rank2(b, "matmul_transposed");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_transposed: inner dimensions differ, " +
                         shape_string(a.shape()) + " x " +
                         shape_string(b.shape()) + "^T");
  }
  Tensor out(Shape{m, n});
  const auto bt = transposed(b.values(), n, k);
  gemm_accumulate(a.values().data(), bt.data(), out.mutable_values().data(), m,
                  k, n);
  if (GradTape::should_record({&a, &b})) {
    GradTape::record(out, [a, b, m, k, n](std::span<const double> g) {
      if (a.requires_grad()) {
        gemm_accumulate(g.data(), b.values().data(), grad_buffer(a).data(), m,
                        n, k);
      }
      if (b.requires_grad()) {
        const auto gt = transposed(g, m, n);
        gemm_accumulate(gt.data(), a.values().data(), grad_buffer(b).data(), n,
                        m, k);
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out(Shape{n, m}, transposed(a.values(), m, n));
  if (GradTape::should_record({&a})) {
    GradTape::record(out, [a, m, n](std::span<const double> g) {
      auto ga = grad_buffer(a);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  auto o = out.mutable_values();
  const auto x = a.values(), y = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  if (GradTape::should_record({&a, &b})) {
    GradTape::record(out, [a, b](std::span<const double> g) {
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto gt = grad_buffer(*t);
        for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  auto o = out.mutable_values();
  const auto x = a.values(), y = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  if (GradTape::should_record({&a, &b})) {
    GradTape::record(out, [a, b](std::span<const double> g) {
      if (a.requires_grad()) {
        auto ga = grad_buffer(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = grad_buffer(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  auto o = out.mutable_values();
  const auto x = a.values(), y = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  if (GradTape::should_record({&a, &b})) {
    GradTape::record(out, [a, b](std::span<const double> g) {
      if (a.requires_grad()) {
        auto ga = grad_buffer(a);
        const auto y = b.values();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
      }
      if (b.requires_grad()) {
        auto gb = grad_buffer(b);
        const auto x = a.values();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
      }
    });
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || x.rank() == 0 || x.cols() != bias.numel()) {
    throw DimensionError("add_bias: cannot add " + shape_string(bias.shape()) +
                         " to " + shape_string(x.shape()));
  }
  const std::size_t n = bias.numel();
  Tensor out(x.shape());
  auto o = out.mutable_values();
  const auto xv = x.values(), bv = bias.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] + bv[i % n];
  if (GradTape::should_record({&x, &bias})) {
    GradTape::record(out, [x, bias, n](std::span<const double> g) {
      if (x.requires_grad()) {
        auto gx = grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (bias.requires_grad()) {
        auto gb = grad_buffer(bias);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, double factor) {
  Tensor out(x.shape());
  auto o = out.mutable_values();
  const auto xv = x.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] * factor;
  if (GradTape::should_record({&x})) {
    GradTape::record(out, [x, factor](std::span<const double> g) {
      auto gx = grad_buffer(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  auto o = out.mutable_values();
  const auto xv = x.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  if (GradTape::should_record({&x})) {
    GradTape::record(out, [x](std::span<const double> g) {
      auto gx = grad_buffer(x);
      const auto xv = x.values();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xv[i] > 0.0) gx[i] += g[i];
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out(x.shape());
  auto o = out.mutable_values();
  const auto xv = x.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = sigmoid_scalar(xv[i]);
  if (GradTape::should_record({&x})) {
    Tensor y = out;
    GradTape::record(out, [x, y](std::span<const double> g) {
      auto gx = grad_buffer(x);
      const auto yv = y.values();
      for (std::size_t i = 0; i < g.size(); ++i)
        gx[i] += g[i] * yv[i] * (1.0 - yv[i]);
    });
  }
  return out;
}

Tensor exp(const Tensor& x) {
  Tensor out(x.shape());
  auto o = out.mutable_values();
  const auto xv = x.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::exp(xv[i]);
  if (GradTape::should_record({&x})) {
    Tensor y = out;
    GradTape::record(out, [x, y](std::span<const double> g) {
      auto gx = grad_buffer(x);
      const auto yv = y.values();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * yv[i];
    });
  }
  return out;
}

Tensor log(const Tensor& x) {
  Tensor out(x.shape());
  auto o = out.mutable_values();
  const auto xv = x.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::log(xv[i]);
  if (GradTape::should_record({&x})) {
    GradTape::record(out, [x](std::span<const double> g) {
      auto gx = grad_buffer(x);
      const auto xv = x.values();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / xv[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalisers

Tensor softmax_rows(const Tensor& x, const AttentionMask* mask) {
  if (x.rank() == 0) throw DimensionError("softmax_rows: scalar input");
  const std::size_t n = x.cols(), m = x.numel() / std::max<std::size_t>(n, 1);
  if (mask && (mask->rows() != m || mask->cols() != n)) {
    throw DimensionError("softmax_rows: mask " +
                         shape_string({mask->rows(), mask->cols()}) +
                         " does not match input " + shape_string(x.shape()));
  }
  Tensor out(x.shape());
  const double* xv = x.values().data();
  double* o = out.mutable_values().data();
  for (std::size_t r = 0; r < m; ++r) softmax_row(xv + r * n, o + r * n, n, mask, r);
  if (GradTape::should_record({&x})) {
    Tensor y = out;
    GradTape::record(out, [x, y, m, n](std::span<const double> g) {
      auto gx = grad_buffer(x);
      const auto yv = y.values();
      for (std::size_t r = 0; r < m; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += g[r * n + j] * yv[r * n + j];
        for (std::size_t j = 0; j < n; ++j)
          gx[r * n + j] += yv[r * n + j] * (g[r * n + j] - s);
      }
    });
  }
  return out;
}

Tensor log_softmax_rows(const Tensor& x) {
  if (x.rank() == 0) throw DimensionError("log_softmax_rows: scalar input");
  const std::size_t n = x.cols(), m = x.numel() / std::max<std::size_t>(n, 1);
  Tensor out(x.shape());
  const auto xv = x.values();
  auto o = out.mutable_values();
  for (std::size_t r = 0; r < m; ++r) {
    double max = xv[r * n];
    for (std::size_t j = 1; j < n; ++j) max = std::max(max, xv[r * n + j]);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(xv[r * n + j] - max);
    const double lse = max + std::log(total);
    for (std::size_t j = 0; j < n; ++j) o[r * n + j] = xv[r * n + j] - lse;
  }
  if (GradTape::should_record({&x})) {
    Tensor y = out;
    GradTape::record(out, [x, y, m, n](std::span<const double> g) {
      auto gx = grad_buffer(x);
      const auto yv = y.values();
      for (std::size_t r = 0; r < m; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += g[r * n + j];
        for (std::size_t j = 0; j < n; ++j)
          gx[r * n + j] += g[r * n + j] - std::exp(yv[r * n + j]) * s;
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  if (x.rank() == 0 || gain.rank() != 1 || bias.rank() != 1 ||
      gain.numel() != x.cols() || bias.numel() != x.cols()) {
    throw DimensionError("layer_norm: gain " + shape_string(gain.shape()) +
                         " / bias " + shape_string(bias.shape()) +
                         " do not match input " + shape_string(x.shape()));
  }
  const std::size_t d = x.cols(), m = x.numel() / d;
  Tensor out(x.shape());
  std::vector<double> xhat(x.numel());
  std::vector<double> rstd(m);
  const auto xv = x.values(), gv = gain.values(), bv = bias.values();
  auto o = out.mutable_values();
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (row[j] - mu) * rstd[r];
      o[r * d + j] = xhat[r * d + j] * gv[j] + bv[j];
    }
  }
  if (GradTape::should_record({&x, &gain, &bias})) {
    GradTape::record(out, [x, gain, bias, d, m, xhat = std::move(xhat),
                           rstd = std::move(rstd)](std::span<const double> g) {
      const auto gv = gain.values();
      if (gain.requires_grad()) {
        auto gg = grad_buffer(gain);
        for (std::size_t i = 0; i < g.size(); ++i) gg[i % d] += g[i] * xhat[i];
      }
      if (bias.requires_grad()) {
        auto gb = grad_buffer(bias);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % d] += g[i];
      }
      if (x.requires_grad()) {
        auto gx = grad_buffer(x);
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < m; ++r) {
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxhat = g[r * d + j] * gv[j];
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * xhat[r * d + j];
          }
          mean_dxhat *= inv_d;
          mean_dxhat_xhat *= inv_d;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxhat = g[r * d + j] * gv[j];
            gx[r * d + j] += rstd[r] * (dxhat - mean_dxhat -
                                        xhat[r * d + j] * mean_dxhat_xhat);
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  Tensor out = Tensor::scalar(s);
  if (GradTape::should_record({&x})) {
    GradTape::record(out, [x](std::span<const double> g) {
      auto gx = grad_buffer(x);
      for (double& v : gx) v += g[0];
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ContractError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

// ---------------------------------------------------------------------------
// Slicing and concatenation

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.rank() == 0 || begin > end || end > x.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") out of range for " +
                         shape_string(x.shape()));
  }
  const std::size_t stride = x.numel() / std::max<std::size_t>(x.rows(), 1);
  Shape shape = x.shape();
  shape[0] = end - begin;
  const auto xv = x.values();
  Tensor out(shape, std::vector<double>(xv.begin() + begin * stride,
                                        xv.begin() + end * stride));
  if (GradTape::should_record({&x})) {
    GradTape::record(out, [x, begin, stride](std::span<const double> g) {
      auto gx = grad_buffer(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[begin * stride + i] += g[i];
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank2(x, "slice_cols");
  const std::size_t m = x.rows(), n = x.cols();
  if (begin > end || end > n) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") out of range for " +
                         shape_string(x.shape()));
  }
  const std::size_t w = end - begin;
  Tensor out(Shape{m, w});
  auto o = out.mutable_values();
  const auto xv = x.values();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < w; ++j) o[r * w + j] = xv[r * n + begin + j];
  if (GradTape::should_record({&x})) {
    GradTape::record(out, [x, m, n, w, begin](std::span<const double> g) {
      auto gx = grad_buffer(x);
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t j = 0; j < w; ++j) gx[r * n + begin + j] += g[r * w + j];
    });
  }
  return out;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t n = parts.front().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.cols() != n) {
      throw DimensionError("concat_rows: column mismatch " +
                           shape_string(parts.front().shape()) + " vs " +
                           shape_string(p.shape()));
    }
    rows += p.rows();
  }
  std::vector<double> values;
  values.reserve(rows * n);
  for (const auto& p : parts) values.insert(values.end(), p.values().begin(), p.values().end());
  Tensor out(Shape{rows, n}, std::move(values));
  bool any = false;
  for (const auto& p : parts) any = any || GradTape::should_record({&p});
  if (any) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    GradTape::record(out, [inputs](std::span<const double> g) {
      std::size_t offset = 0;
      for (const auto& p : inputs) {
        if (p.requires_grad()) {
          auto gp = grad_buffer(p);
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset + i];
        }
        offset += p.numel();
      }
    });
  }
  return out;
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t m = parts.front().rows();
  std::size_t n = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.rows() != m) {
      throw DimensionError("concat_cols: row mismatch " +
                           shape_string(parts.front().shape()) + " vs " +
                           shape_string(p.shape()));
    }
    n += p.cols();
  }
  Tensor out(Shape{m, n});
  auto o = out.mutable_values();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    const auto pv = p.values();
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t j = 0; j < w; ++j) o[r * n + offset + j] = pv[r * w + j];
    offset += w;
  }
  bool any = false;
  for (const auto& p : parts) any = any || GradTape::should_record({&p});
  if (any) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    GradTape::record(out, [inputs, m, n](std::span<const double> g) {
      std::size_t offset = 0;
      for (const auto& p : inputs) {
        const std::size_t w = p.cols();
        if (p.requires_grad()) {
          auto gp = grad_buffer(p);
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t j = 0; j < w; ++j) gp[r * w + j] += g[r * n + offset + j];
        }
        offset += w;
      }
    });
  }
  return out;
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  require_rank2(table, "embedding");
  const std::size_t v = table.rows(), d = table.cols();
  std::vector<double> values;
  values.reserve(ids.size() * d);
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw DimensionError("embedding: id " + std::to_string(id) +
                           " outside table of " + std::to_string(v) + " rows");
    }
    const auto r = table.row(static_cast<std::size_t>(id));
    values.insert(values.end(), r.begin(), r.end());
  }
  Tensor out(Shape{ids.size(), d}, std::move(values));
  if (GradTape::should_record({&table})) {
    std::vector<int> idx(ids.begin(), ids.end());
    GradTape::record(out, [table, idx, d](std::span<const double> g) {
      auto gt = grad_buffer(table);
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < d; ++j)
          gt[static_cast<std::size_t>(idx[i]) * d + j] += g[i * d + j];
    });
  }
  return out;
}

}  // namespace hsdacs
