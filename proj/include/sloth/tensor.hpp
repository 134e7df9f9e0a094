#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sloth/errors.hpp"
#include "sloth/rng.hpp"

namespace sloth {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);

struct TensorImpl {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation; value-sized afterwards
  bool requires_grad = false;
  bool tracked = false;
};

// Dense row-major f64 tensor with shared storage. Reshape/transpose copy;
// there are no views or strides.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor scalar(double v);
  static Tensor vec(std::vector<double> data);
  static Tensor matrix(int rows, int cols, std::vector<double> data);
  static Tensor from(Shape shape, std::vector<double> data);
  // Gaussian(0, stddev) fill, trainable leaf.
  static Tensor param_gaussian(Shape shape, double stddev, Rng& rng);
  static Tensor param(Shape shape, std::vector<double> data);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  std::size_t numel() const { return impl_->value.size(); }
  int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
  int rows() const;
  int cols() const;

  double item() const;
  double operator()(int i) const { return impl_->value[static_cast<std::size_t>(i)]; }
  double operator()(int i, int j) const {
    return impl_->value[static_cast<std::size_t>(i) * cols() + j];
  }

  const std::vector<double>& data() const { return impl_->value; }
  std::vector<double>& mutable_data() { return impl_->value; }
  const std::vector<double>& grad() const;
  void zero_grad();

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  bool tracked() const { return impl_ && (impl_->tracked || impl_->requires_grad); }
  void set_requires_grad(bool flag) { impl_->requires_grad = flag; }

  // Same storage object (not value equality).
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  std::shared_ptr<TensorImpl> impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;

  friend Tensor wrap_impl(std::shared_ptr<TensorImpl>);
};

// Ordered record of executed differentiable operations. Adjoint replay walks
// the record strictly in reverse execution order. One tape is single-threaded;
// independent tapes may live on independent threads.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> step) { steps_.push_back(std::move(step)); }
  void clear() { steps_.clear(); }
  std::size_t size() const { return steps_.size(); }

 private:
  std::vector<std::function<void()>> steps_;
  friend void backward(const Tensor& loss, Tape& tape);
};

// Makes a tape receive recordings on the current thread for the scope's
// lifetime. Nesting restores the previous tape on exit.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

Tape* active_tape();

// ---- ops ----
// Every op is pure on values; when a tape is active and an input is tracked,
// the op appends its adjoint step to the tape and marks the output tracked.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor slice_rows(const Tensor& x, int r0, int r1);
Tensor slice_cols(const Tensor& x, int c0, int c1);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor gather_rows(const Tensor& x, const std::vector<int>& idx);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_rowvec(const Tensor& x, const Tensor& v);
Tensor mul_rowvec(const Tensor& x, const Tensor& v);
Tensor scale(const Tensor& x, double s);
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

Tensor softmax_rows(const Tensor& x);
// Per-row prefix softmax: row i normalizes over its first limits[i] entries,
// the rest come out exactly 0. Covers causal masking without -inf logits.
Tensor masked_softmax_rows(const Tensor& x, const std::vector<int>& limits);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
// Rotary position encoding over column pairs of x[L x d]; d must be even.
Tensor rope(const Tensor& x, const std::vector<int>& positions, double base = 10000.0);

Tensor sum(const Tensor& x);
// Mean of -log softmax(logits[i])[targets[i]] over rows.
Tensor cross_entropy_mean(const Tensor& logits, const std::vector<int>& targets);

// Accumulates adjoints of `loss` into the grad buffers of every tracked
// tensor recorded on `tape`. loss must be scalar.
void backward(const Tensor& loss, Tape& tape);

// Central finite differences of a scalar function, the independent oracle
// for backward(). Runs outside any tape.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double h = 1e-5);

// max_i |a_i - b_i| / max(1, |a_i|, |b_i|)
double max_rel_err(const Tensor& a, const Tensor& b);

}  // namespace sloth
