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

// Dense row-major tensors of doubles with tape-based reverse-mode
// differentiation.
//
// Operations are recorded only while a GradTape is alive on the current
// thread and at least one operand requires a gradient. Without a tape every
// op is a plain value computation, which is how inference runs.
//
// Every reduction (dot products, sums, softmax normalisers) accumulates
// left-to-right along the last axis starting from 0.0. Code that needs a
// bit-identical scalar version of a tensor op (the step-wise decoder) relies on
// that order.

#ifndef HSDACS_TENSOR_H_
#define HSDACS_TENSOR_H_

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hsdacs/mask.h"

namespace hsdacs {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
};
}  // namespace detail

class Tensor {
 public:
  // Rank-0 scalar holding 0.
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  // Matrix from nested rows; all rows must have equal length.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }
  // Size of dimension 0 / the last dimension. Rank-0 tensors report 1.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return impl_->data; }
  std::span<double> mutable_values() { return impl_->data; }
  std::span<const double> row(std::size_t r) const;
  double item() const;
  double at(std::size_t i) const { return impl_->data[i]; }
  double at(std::size_t r, std::size_t c) const {
    return impl_->data[r * cols() + c];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool value);
  bool has_grad() const { return !impl_->grad.empty(); }
  // Empty span when no gradient has been accumulated.
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad();
  void zero_grad() { impl_->grad.clear(); }

  // Copy of the values with no gradient state.
  Tensor detach() const;
  // Copy with a new shape of equal element count. Recorded on the tape.
  Tensor reshape(Shape shape) const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  friend class GradTape;
  friend struct TensorAccess;
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}

  std::shared_ptr<detail::TensorImpl> impl_;
};

// The computation record: an ordered list of executed operations. Reverse
// traversal in GradTape::backward visits each operation exactly once, after
// every operation that consumed its output.
class GradTape {
 public:
  GradTape();
  ~GradTape();
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  // Accumulates d(loss)/d(t) into every recorded tensor reachable from
  // loss. Throws ContractError for a non-scalar or unconnected loss.
  void backward(const Tensor& loss);

  std::size_t size() const { return records_.size(); }

  // The tape active on this thread, or nullptr.
  static GradTape* active();

  using BackwardFn = std::function<void(std::span<const double> out_grad)>;
  // Records out as produced from the given inputs. No-op unless a tape is
  // active and some input requires a gradient; callers should test
  // should_record() first to avoid building the closure.
  static bool should_record(std::initializer_list<const Tensor*> inputs);
  static void record(Tensor& out, BackwardFn fn);

 private:
  struct Record {
    std::shared_ptr<detail::TensorImpl> output;
    BackwardFn backward;
  };
  std::vector<Record> records_;
  GradTape* previous_ = nullptr;
};

// ---------------------------------------------------------------------------
// Operations. All return new tensors.

// a[m x k] * b[k x n].
Tensor matmul(const Tensor& a, const Tensor& b);
// a[m x k] * b[n x k]^T.
Tensor matmul_transposed(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// x[... x n] + bias[n], broadcast over leading axes.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor scale(const Tensor& x, double factor);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

// Row-wise softmax with max subtraction. Columns excluded by the mask get
// weight exactly 0; a row with no allowed column is a ContractError.
Tensor softmax_rows(const Tensor& x, const AttentionMask* mask = nullptr);
Tensor log_softmax_rows(const Tensor& x);

// Normalises the last axis to zero mean and unit (population) variance, then
// applies gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);

// Rows of table[V x d] selected by ids.
Tensor embedding(const Tensor& table, std::span<const int> ids);

// Scalar kernels shared with code paths that must reproduce tensor ops
// bit-for-bit.
double dot(std::span<const double> a, std::span<const double> b);
double sigmoid_scalar(double x);
void softmax_inplace(std::span<double> row);

}  // namespace hsdacs

#endif  // HSDACS_TENSOR_H_
