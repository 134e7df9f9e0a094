#include "sloth/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "sloth/kernels.hpp"

namespace sloth {

namespace {

thread_local Tape* g_active_tape = nullptr;

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(s));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

void ensure_grad(TensorImpl& t) {
  if (t.grad.size() != t.value.size()) t.grad.assign(t.value.size(), 0.0);
}

bool wants_grad(const std::shared_ptr<TensorImpl>& t) {
  return t->requires_grad || t->tracked;
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tensor wrap_impl(std::shared_ptr<TensorImpl> impl) { return Tensor(std::move(impl)); }

static Tensor make_tensor(Shape shape, std::vector<double> data) {
  auto impl = std::make_shared<TensorImpl>();
  const std::size_t n = shape_numel(shape);
  if (data.size() != n)
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_str(shape));
  impl->shape = std::move(shape);
  impl->value = std::move(data);
  return wrap_impl(std::move(impl));
}

Tensor Tensor::zeros(Shape shape) {
  const std::size_t n = shape_numel(shape);
  return make_tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(Shape shape, double v) {
  const std::size_t n = shape_numel(shape);
  return make_tensor(std::move(shape), std::vector<double>(n, v));
}

Tensor Tensor::scalar(double v) { return make_tensor({}, {v}); }

Tensor Tensor::vec(std::vector<double> data) {
  const int n = static_cast<int>(data.size());
  return make_tensor({n}, std::move(data));
}

Tensor Tensor::matrix(int rows, int cols, std::vector<double> data) {
  return make_tensor({rows, cols}, std::move(data));
}

Tensor Tensor::from(Shape shape, std::vector<double> data) {
  return make_tensor(std::move(shape), std::move(data));
}

Tensor Tensor::param(Shape shape, std::vector<double> data) {
  Tensor t = make_tensor(std::move(shape), std::move(data));
  t.set_requires_grad(true);
  return t;
}

Tensor Tensor::param_gaussian(Shape shape, double stddev, Rng& rng) {
  const std::size_t n = shape_numel(shape);
  std::vector<double> data(n);
  for (auto& v : data) v = rng.gaussian(0.0, stddev);
  return param(std::move(shape), std::move(data));
}

int Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows() on non-matrix tensor " + shape_str(shape()));
  return impl_->shape[0];
}

int Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols() on non-matrix tensor " + shape_str(shape()));
  return impl_->shape[1];
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor with " + std::to_string(numel()) + " elements");
  return impl_->value[0];
}

const std::vector<double>& Tensor::grad() const {
  ensure_grad(*impl_);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_) impl_->grad.assign(impl_->value.size(), 0.0);
}

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = prev_; }

Tape* active_tape() { return g_active_tape; }

namespace {

// Shared glue: marks the output tracked and records the adjoint step if a
// tape is active and any of the inputs participates in differentiation.
template <typename Fn>
void maybe_record(const std::initializer_list<Tensor> inputs, Tensor& out, Fn&& backward_step) {
  Tape* tape = g_active_tape;
  if (!tape) return;
  bool any = false;
  for (const Tensor& t : inputs)
    if (t.tracked()) any = true;
  if (!any) return;
  out.impl()->tracked = true;
  ensure_grad(*out.impl());
  tape->record(std::forward<Fn>(backward_step));
}

void check_matrix(const Tensor& t, const char* who) {
  if (!t.defined() || t.rank() != 2)
    throw ShapeError(std::string(who) + ": expected a matrix, got " +
                     (t.defined() ? shape_str(t.shape()) : std::string("undefined")));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_matrix(a, "matmul");
  check_matrix(b, "matmul");
  const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  Tensor c = Tensor::zeros({m, n});
  kernels::matmul(a.data().data(), b.data().data(), c.mutable_data().data(), m, k, n);

  auto ai = a.impl(), bi = b.impl(), ci = c.impl();
  maybe_record({a, b}, c, [ai, bi, ci, m, k, n] {
    // dA += dC * B^T, dB += A^T * dC
    if (wants_grad(ai)) {
      ensure_grad(*ai);
      for (int i = 0; i < m; ++i)
        for (int t = 0; t < k; ++t) {
          double acc = 0.0;
          for (int j = 0; j < n; ++j)
            acc += ci->grad[static_cast<std::size_t>(i) * n + j] *
                   bi->value[static_cast<std::size_t>(t) * n + j];
          ai->grad[static_cast<std::size_t>(i) * k + t] += acc;
        }
    }
    if (wants_grad(bi)) {
      ensure_grad(*bi);
      for (int t = 0; t < k; ++t)
        for (int j = 0; j < n; ++j) {
          double acc = 0.0;
          for (int i = 0; i < m; ++i)
            acc += ai->value[static_cast<std::size_t>(i) * k + t] *
                   ci->grad[static_cast<std::size_t>(i) * n + j];
          bi->grad[static_cast<std::size_t>(t) * n + j] += acc;
        }
    }
  });
  return c;
}

Tensor transpose(const Tensor& x) {
  check_matrix(x, "transpose");
  const int r = x.dim(0), c = x.dim(1);
  Tensor y = Tensor::zeros({c, r});
  auto& yd = y.mutable_data();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) yd[static_cast<std::size_t>(j) * r + i] = x(i, j);

  auto xi = x.impl(), yi = y.impl();
  maybe_record({x}, y, [xi, yi, r, c] {
    if (!wants_grad(xi)) return;
    ensure_grad(*xi);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        xi->grad[static_cast<std::size_t>(i) * c + j] += yi->grad[static_cast<std::size_t>(j) * r + i];
  });
  return y;
}

Tensor reshape(const Tensor& x, Shape shape) {
  const std::size_t n = shape_numel(shape);
  if (n != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  Tensor y = Tensor::from(std::move(shape), x.data());

  auto xi = x.impl(), yi = y.impl();
  maybe_record({x}, y, [xi, yi] {
    if (!wants_grad(xi)) return;
    ensure_grad(*xi);
    for (std::size_t i = 0; i < xi->grad.size(); ++i) xi->grad[i] += yi->grad[i];
  });
  return y;
}

Tensor slice_rows(const Tensor& x, int r0, int r1) {
  check_matrix(x, "slice_rows");
  const int r = x.dim(0), c = x.dim(1);
  if (r0 < 0 || r1 < r0 || r1 > r)
    throw ShapeError("slice_rows: range [" + std::to_string(r0) + "," + std::to_string(r1) +
                     ") out of " + shape_str(x.shape()));
  Tensor y = Tensor::zeros({r1 - r0, c});
  std::copy(x.data().begin() + static_cast<std::ptrdiff_t>(r0) * c,
            x.data().begin() + static_cast<std::ptrdiff_t>(r1) * c, y.mutable_data().begin());

  auto xi = x.impl(), yi = y.impl();
  maybe_record({x}, y, [xi, yi, r0, c] {
    if (!wants_grad(xi)) return;
    ensure_grad(*xi);
    for (std::size_t i = 0; i < yi->grad.size(); ++i)
      xi->grad[static_cast<std::size_t>(r0) * c + i] += yi->grad[i];
  });
  return y;
}

Tensor slice_cols(const Tensor& x, int c0, int c1) {
  check_matrix(x, "slice_cols");
  const int r = x.dim(0), c = x.dim(1);
  if (c0 < 0 || c1 < c0 || c1 > c)
    throw ShapeError("slice_cols: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                     ") out of " + shape_str(x.shape()));
  const int w = c1 - c0;
  Tensor y = Tensor::zeros({r, w});
  auto& yd = y.mutable_data();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < w; ++j) yd[static_cast<std::size_t>(i) * w + j] = x(i, c0 + j);

  auto xi = x.impl(), yi = y.impl();
  maybe_record({x}, y, [xi, yi, r, c, c0, w] {
    if (!wants_grad(xi)) return;
    ensure_grad(*xi);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < w; ++j)
        xi->grad[static_cast<std::size_t>(i) * c + c0 + j] +=
            yi->grad[static_cast<std::size_t>(i) * w + j];
  });
  return y;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: empty input list");
  int c = -1, total = 0;
  for (const Tensor& p : parts) {
    check_matrix(p, "concat_rows");
    if (c < 0) c = p.dim(1);
    if (p.dim(1) != c)
      throw ShapeError("concat_rows: column mismatch, " + shape_str(p.shape()) + " vs [*x" +
                       std::to_string(c) + "]");
    total += p.dim(0);
  }
  Tensor y = Tensor::zeros({total, c});
  auto& yd = y.mutable_data();
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    std::copy(p.data().begin(), p.data().end(), yd.begin() + static_cast<std::ptrdiff_t>(off));
    off += p.numel();
  }

  bool any = false;
  for (const Tensor& p : parts) any = any || p.tracked();
  Tape* tape = g_active_tape;
  if (tape && any) {
    y.impl()->tracked = true;
    ensure_grad(*y.impl());
    std::vector<std::shared_ptr<TensorImpl>> impls;
    impls.reserve(parts.size());
    for (const Tensor& p : parts) impls.push_back(p.impl());
    auto yi = y.impl();
    tape->record([impls, yi] {
      std::size_t at = 0;
      for (const auto& pi : impls) {
        if (wants_grad(pi)) {
          ensure_grad(*pi);
          for (std::size_t i = 0; i < pi->value.size(); ++i) pi->grad[i] += yi->grad[at + i];
        }
        at += pi->value.size();
      }
    });
  }
  return y;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: empty input list");
  int r = -1, total = 0;
  for (const Tensor& p : parts) {
    check_matrix(p, "concat_cols");
    if (r < 0) r = p.dim(0);
    if (p.dim(0) != r)
      throw ShapeError("concat_cols: row mismatch, " + shape_str(p.shape()) + " vs [" +
                       std::to_string(r) + "x*]");
    total += p.dim(1);
  }
  Tensor y = Tensor::zeros({r, total});
  auto& yd = y.mutable_data();
  int at = 0;
  for (const Tensor& p : parts) {
    const int w = p.dim(1);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < w; ++j) yd[static_cast<std::size_t>(i) * total + at + j] = p(i, j);
    at += w;
  }

  bool any = false;
  for (const Tensor& p : parts) any = any || p.tracked();
  Tape* tape = g_active_tape;
  if (tape && any) {
    y.impl()->tracked = true;
    ensure_grad(*y.impl());
    std::vector<std::shared_ptr<TensorImpl>> impls;
    std::vector<int> widths;
    for (const Tensor& p : parts) {
      impls.push_back(p.impl());
      widths.push_back(p.dim(1));
    }
    auto yi = y.impl();
    tape->record([impls, widths, yi, r, total] {
      int col = 0;
      for (std::size_t pidx = 0; pidx < impls.size(); ++pidx) {
        const auto& pi = impls[pidx];
        const int w = widths[pidx];
        if (wants_grad(pi)) {
          ensure_grad(*pi);
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < w; ++j)
              pi->grad[static_cast<std::size_t>(i) * w + j] +=
                  yi->grad[static_cast<std::size_t>(i) * total + col + j];
        }
        col += w;
      }
    });
  }
  return y;
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& idx) {
  check_matrix(x, "gather_rows");
  const int r = x.dim(0), c = x.dim(1);
  for (int i : idx)
    if (i < 0 || i >= r)
      throw ShapeError("gather_rows: index " + std::to_string(i) + " out of " + shape_str(x.shape()));
  Tensor y = Tensor::zeros({static_cast<int>(idx.size()), c});
  auto& yd = y.mutable_data();
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy(x.data().begin() + static_cast<std::ptrdiff_t>(idx[i]) * c,
              x.data().begin() + static_cast<std::ptrdiff_t>(idx[i] + 1) * c,
              yd.begin() + static_cast<std::ptrdiff_t>(i) * c);

  auto xi = x.impl(), yi = y.impl();
  maybe_record({x}, y, [xi, yi, idx, c] {
    if (!wants_grad(xi)) return;
    ensure_grad(*xi);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (int j = 0; j < c; ++j)
        xi->grad[static_cast<std::size_t>(idx[i]) * c + j] +=
            yi->grad[i * static_cast<std::size_t>(c) + j];
  });
  return y;
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(who) + ": shape mismatch, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor y = Tensor::from(a.shape(), a.data());
  auto& yd = y.mutable_data();
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] += b.data()[i];

  auto ai = a.impl(), bi = b.impl(), yi = y.impl();
  maybe_record({a, b}, y, [ai, bi, yi] {
    if (wants_grad(ai)) {
      ensure_grad(*ai);
      for (std::size_t i = 0; i < yi->grad.size(); ++i) ai->grad[i] += yi->grad[i];
    }
    if (wants_grad(bi)) {
      ensure_grad(*bi);
      for (std::size_t i = 0; i < yi->grad.size(); ++i) bi->grad[i] += yi->grad[i];
    }
  });
  return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor y = Tensor::from(a.shape(), a.data());
  auto& yd = y.mutable_data();
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] -= b.data()[i];

  auto ai = a.impl(), bi = b.impl(), yi = y.impl();
  maybe_record({a, b}, y, [ai, bi, yi] {
    if (wants_grad(ai)) {
      ensure_grad(*ai);
      for (std::size_t i = 0; i < yi->grad.size(); ++i) ai->grad[i] += yi->grad[i];
    }
    if (wants_grad(bi)) {
      ensure_grad(*bi);
      for (std::size_t i = 0; i < yi->grad.size(); ++i) bi->grad[i] -= yi->grad[i];
    }
  });
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor y = Tensor::from(a.shape(), a.data());
  auto& yd = y.mutable_data();
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] *= b.data()[i];

  auto ai = a.impl(), bi = b.impl(), yi = y.impl();
  maybe_record({a, b}, y, [ai, bi, yi] {
    if (wants_grad(ai)) {
      ensure_grad(*ai);
      for (std::size_t i = 0; i < yi->grad.size(); ++i) ai->grad[i] += yi->grad[i] * bi->value[i];
    }
    if (wants_grad(bi)) {
      ensure_grad(*bi);
      for (std::size_t i = 0; i < yi->grad.size(); ++i) bi->grad[i] += yi->grad[i] * ai->value[i];
    }
  });
  return y;
}

namespace {

void check_rowvec(const Tensor& x, const Tensor& v, const char* who) {
  check_matrix(x, who);
  if (v.rank() != 1 || v.dim(0) != x.dim(1))
    throw ShapeError(std::string(who) + ": vector " +
                     (v.defined() ? shape_str(v.shape()) : std::string("undefined")) +
                     " does not broadcast over " + shape_str(x.shape()));
}

}  // namespace

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  check_rowvec(x, v, "add_rowvec");
  const int r = x.dim(0), c = x.dim(1);
  Tensor y = Tensor::from(x.shape(), x.data());
  auto& yd = y.mutable_data();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) yd[static_cast<std::size_t>(i) * c + j] += v(j);

  auto xi = x.impl(), vi = v.impl(), yi = y.impl();
  maybe_record({x, v}, y, [xi, vi, yi, r, c] {
    if (wants_grad(xi)) {
      ensure_grad(*xi);
      for (std::size_t i = 0; i < yi->grad.size(); ++i) xi->grad[i] += yi->grad[i];
    }
    if (wants_grad(vi)) {
      ensure_grad(*vi);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) vi->grad[j] += yi->grad[static_cast<std::size_t>(i) * c + j];
    }
  });
  return y;
}

Tensor mul_rowvec(const Tensor& x, const Tensor& v) {
  check_rowvec(x, v, "mul_rowvec");
  const int r = x.dim(0), c = x.dim(1);
  Tensor y = Tensor::from(x.shape(), x.data());
  auto& yd = y.mutable_data();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) yd[static_cast<std::size_t>(i) * c + j] *= v(j);

  auto xi = x.impl(), vi = v.impl(), yi = y.impl();
  maybe_record({x, v}, y, [xi, vi, yi, r, c] {
    if (wants_grad(xi)) {
      ensure_grad(*xi);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          xi->grad[static_cast<std::size_t>(i) * c + j] +=
              yi->grad[static_cast<std::size_t>(i) * c + j] * vi->value[j];
    }
    if (wants_grad(vi)) {
      ensure_grad(*vi);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          vi->grad[j] += yi->grad[static_cast<std::size_t>(i) * c + j] *
                         xi->value[static_cast<std::size_t>(i) * c + j];
    }
  });
  return y;
}

Tensor scale(const Tensor& x, double s) {
  Tensor y = Tensor::from(x.shape(), x.data());
  for (auto& v : y.mutable_data()) v *= s;

  auto xi = x.impl(), yi = y.impl();
  maybe_record({x}, y, [xi, yi, s] {
    if (!wants_grad(xi)) return;
    ensure_grad(*xi);
    for (std::size_t i = 0; i < yi->grad.size(); ++i) xi->grad[i] += s * yi->grad[i];
  });
  return y;
}

Tensor gelu(const Tensor& x) {
  Tensor y = Tensor::zeros(x.shape());
  kernels::gelu(x.data().data(), y.mutable_data().data(), x.numel());

  auto xi = x.impl(), yi = y.impl();
  maybe_record({x}, y, [xi, yi] {
    if (!wants_grad(xi)) return;
    ensure_grad(*xi);
    for (std::size_t i = 0; i < yi->grad.size(); ++i)
      xi->grad[i] += yi->grad[i] * kernels::gelu_grad_scalar(xi->value[i]);
  });
  return y;
}

Tensor sigmoid(const Tensor& x) {
  Tensor y = Tensor::zeros(x.shape());
  auto& yd = y.mutable_data();
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] = 1.0 / (1.0 + std::exp(-x.data()[i]));

  auto xi = x.impl(), yi = y.impl();
  maybe_record({x}, y, [xi, yi] {
    if (!wants_grad(xi)) return;
    ensure_grad(*xi);
    for (std::size_t i = 0; i < yi->grad.size(); ++i) {
      const double s = yi->value[i];
      xi->grad[i] += yi->grad[i] * s * (1.0 - s);
    }
  });
  return y;
}

namespace {

Tensor softmax_impl(const Tensor& x, const std::vector<int>* limits) {
  const bool vector_in = x.rank() == 1;
  const int m = vector_in ? 1 : x.dim(0);
  const int n = vector_in ? x.dim(0) : x.dim(1);
  if (limits) {
    if (static_cast<int>(limits->size()) != m)
      throw ShapeError("masked_softmax_rows: limits length " + std::to_string(limits->size()) +
                       " for " + std::to_string(m) + " rows");
    for (int l : *limits)
      if (l < 1 || l > n) throw ContractError("masked_softmax_rows: prefix limit " + std::to_string(l));
  }
  Tensor y = Tensor::zeros(x.shape());
  kernels::softmax_rows(x.data().data(), y.mutable_data().data(), m, n,
                        limits ? limits->data() : nullptr);

  auto xi = x.impl(), yi = y.impl();
  std::vector<int> lim = limits ? *limits : std::vector<int>();
  Tensor& out = y;
  maybe_record({x}, out, [xi, yi, lim, m, n] {
    if (!wants_grad(xi)) return;
    ensure_grad(*xi);
    for (int i = 0; i < m; ++i) {
      const int limit = lim.empty() ? n : lim[static_cast<std::size_t>(i)];
      const std::size_t base = static_cast<std::size_t>(i) * n;
      double dot = 0.0;
      for (int j = 0; j < limit; ++j) dot += yi->grad[base + j] * yi->value[base + j];
      for (int j = 0; j < limit; ++j)
        xi->grad[base + j] += yi->value[base + j] * (yi->grad[base + j] - dot);
    }
  });
  return y;
}

}  // namespace

Tensor softmax_rows(const Tensor& x) {
  if (x.rank() != 1 && x.rank() != 2)
    throw ShapeError("softmax_rows: expected vector or matrix, got " + shape_str(x.shape()));
  return softmax_impl(x, nullptr);
}

Tensor masked_softmax_rows(const Tensor& x, const std::vector<int>& limits) {
  check_matrix(x, "masked_softmax_rows");
  return softmax_impl(x, &limits);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  check_matrix(x, "layer_norm");
  check_rowvec(x, gamma, "layer_norm");
  check_rowvec(x, beta, "layer_norm");
  const int r = x.dim(0), c = x.dim(1);
  Tensor y = Tensor::zeros({r, c});
  std::vector<double> inv_std(static_cast<std::size_t>(r));
  std::vector<double> mean(static_cast<std::size_t>(r));
  auto& yd = y.mutable_data();
  for (int i = 0; i < r; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * c;
    double mu = 0.0;
    for (int j = 0; j < c; ++j) mu += x.data()[base + j];
    mu /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) {
      const double d = x.data()[base + j] - mu;
      var += d * d;
    }
    var /= c;
    const double inv = 1.0 / std::sqrt(var + eps);
    mean[static_cast<std::size_t>(i)] = mu;
    inv_std[static_cast<std::size_t>(i)] = inv;
    for (int j = 0; j < c; ++j)
      yd[base + j] = (x.data()[base + j] - mu) * inv * gamma(j) + beta(j);
  }

  auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), yi = y.impl();
  maybe_record({x, gamma, beta}, y, [xi, gi, bi, yi, mean, inv_std, r, c] {
    for (int i = 0; i < r; ++i) {
      const std::size_t base = static_cast<std::size_t>(i) * c;
      const double mu = mean[static_cast<std::size_t>(i)];
      const double inv = inv_std[static_cast<std::size_t>(i)];
      if (wants_grad(gi) || wants_grad(bi)) {
        if (wants_grad(gi)) ensure_grad(*gi);
        if (wants_grad(bi)) ensure_grad(*bi);
        for (int j = 0; j < c; ++j) {
          const double xhat = (xi->value[base + j] - mu) * inv;
          if (wants_grad(gi)) gi->grad[j] += yi->grad[base + j] * xhat;
          if (wants_grad(bi)) bi->grad[j] += yi->grad[base + j];
        }
      }
      if (wants_grad(xi)) {
        ensure_grad(*xi);
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (int j = 0; j < c; ++j) {
          const double xhat = (xi->value[base + j] - mu) * inv;
          const double dxhat = yi->grad[base + j] * gi->value[j];
          sum_dxhat += dxhat;
          sum_dxhat_xhat += dxhat * xhat;
        }
        for (int j = 0; j < c; ++j) {
          const double xhat = (xi->value[base + j] - mu) * inv;
          const double dxhat = yi->grad[base + j] * gi->value[j];
          xi->grad[base + j] += inv * (dxhat - (sum_dxhat + xhat * sum_dxhat_xhat) / c);
        }
      }
    }
  });
  return y;
}

Tensor rope(const Tensor& x, const std::vector<int>& positions, double base) {
  check_matrix(x, "rope");
  const int r = x.dim(0), c = x.dim(1);
  if (c % 2 != 0) throw ShapeError("rope: odd feature dimension " + shape_str(x.shape()));
  if (static_cast<int>(positions.size()) != r)
    throw ShapeError("rope: positions length " + std::to_string(positions.size()) + " for " +
                     std::to_string(r) + " rows");
  const int half = c / 2;
  Tensor y = Tensor::zeros({r, c});
  auto& yd = y.mutable_data();
  for (int i = 0; i < r; ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * c;
    for (int p = 0; p < half; ++p) {
      const double theta =
          positions[static_cast<std::size_t>(i)] * std::pow(base, -2.0 * p / c);
      const double cs = std::cos(theta), sn = std::sin(theta);
      const double a = x.data()[off + 2 * p], b = x.data()[off + 2 * p + 1];
      yd[off + 2 * p] = a * cs - b * sn;
      yd[off + 2 * p + 1] = a * sn + b * cs;
    }
  }

  auto xi = x.impl(), yi = y.impl();
  maybe_record({x}, y, [xi, yi, positions, base, r, c, half] {
    if (!wants_grad(xi)) return;
    ensure_grad(*xi);
    // rotation is orthogonal: pull the adjoint back through the inverse angle
    for (int i = 0; i < r; ++i) {
      const std::size_t off = static_cast<std::size_t>(i) * c;
      for (int p = 0; p < half; ++p) {
        const double theta =
            positions[static_cast<std::size_t>(i)] * std::pow(base, -2.0 * p / c);
        const double cs = std::cos(theta), sn = std::sin(theta);
        const double da = yi->grad[off + 2 * p], db = yi->grad[off + 2 * p + 1];
        xi->grad[off + 2 * p] += da * cs + db * sn;
        xi->grad[off + 2 * p + 1] += -da * sn + db * cs;
      }
    }
  });
  return y;
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor y = Tensor::scalar(acc);

  auto xi = x.impl(), yi = y.impl();
  maybe_record({x}, y, [xi, yi] {
    if (!wants_grad(xi)) return;
    ensure_grad(*xi);
    for (auto& g : xi->grad) g += yi->grad[0];
  });
  return y;
}

Tensor cross_entropy_mean(const Tensor& logits, const std::vector<int>& targets) {
  check_matrix(logits, "cross_entropy_mean");
  const int m = logits.dim(0), v = logits.dim(1);
  if (m == 0 || targets.empty()) throw ContractError("cross_entropy_mean: no target rows");
  if (static_cast<int>(targets.size()) != m)
    throw ShapeError("cross_entropy_mean: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(m) + " rows");
  for (int t : targets)
    if (t < 0 || t >= v) throw ContractError("cross_entropy_mean: target id " + std::to_string(t));

  std::vector<double> probs(logits.numel());
  kernels::softmax_rows(logits.data().data(), probs.data(), m, v, nullptr);
  double loss = 0.0;
  for (int i = 0; i < m; ++i) {
    // recompute the log-prob stably instead of log(probs)
    const std::size_t base = static_cast<std::size_t>(i) * v;
    double mx = logits.data()[base];
    for (int j = 1; j < v; ++j) mx = std::max(mx, logits.data()[base + j]);
    double lse = 0.0;
    for (int j = 0; j < v; ++j) lse += std::exp(logits.data()[base + j] - mx);
    lse = mx + std::log(lse);
    loss += lse - logits.data()[base + targets[static_cast<std::size_t>(i)]];
  }
  Tensor y = Tensor::scalar(loss / m);

  auto li = logits.impl(), yi = y.impl();
  maybe_record({logits}, y, [li, yi, probs, targets, m, v] {
    if (!wants_grad(li)) return;
    ensure_grad(*li);
    const double g = yi->grad[0] / m;
    for (int i = 0; i < m; ++i) {
      const std::size_t base = static_cast<std::size_t>(i) * v;
      for (int j = 0; j < v; ++j) li->grad[base + j] += g * probs[base + j];
      li->grad[base + targets[static_cast<std::size_t>(i)]] -= g;
    }
  });
  return y;
}

void backward(const Tensor& loss, Tape& tape) {
  if (!loss.defined() || loss.numel() != 1)
    throw ContractError("backward: loss must be a scalar tensor");
  ensure_grad(*loss.impl());
  loss.impl()->grad[0] += 1.0;
  for (auto it = tape.steps_.rbegin(); it != tape.steps_.rend(); ++it) (*it)();
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  if (h <= 0.0) throw ContractError("finite_diff_grad: step must be positive");
  Tensor g = Tensor::zeros(x.shape());
  Tensor probe = Tensor::from(x.shape(), x.data());
  auto& pd = probe.mutable_data();
  auto& gd = g.mutable_data();
  for (std::size_t i = 0; i < pd.size(); ++i) {
    const double orig = pd[i];
    pd[i] = orig + h;
    const double fp = f(probe);
    pd[i] = orig - h;
    const double fm = f(probe);
    pd[i] = orig;
    gd[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

double max_rel_err(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("max_rel_err: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double av = a.data()[i], bv = b.data()[i];
    const double denom = std::max({1.0, std::fabs(av), std::fabs(bv)});
    worst = std::max(worst, std::fabs(av - bv) / denom);
  }
  return worst;
}

}  // namespace sloth
