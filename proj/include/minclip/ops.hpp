#pragma once

// Dense tensor ops with reverse-mode gradients. Everything is row-major and
// shape-strict: the only implicit broadcast is a trailing-suffix operand in
// add/mul (bias over a leading batch); anything else needs an explicit
// reshape.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "minclip/tensor.hpp"

namespace minclip {

namespace detail {

template <typename S>
void check_finite(const std::vector<S>& v, const char* op) {
  for (const S x : v) {
    if (!std::isfinite(static_cast<double>(x))) {
      throw NumericOverflow(std::string(op) + ": non-finite output");
    }
  }
}

// C[m,n] = A[m,k] * B[k,n]
template <typename S>
void mm_nn(const S* A, const S* B, S* C, int m, int k, int n) {
#pragma omp parallel for schedule(static) if (static_cast<long long>(m) * k * n > (1 << 16))
  for (int i = 0; i < m; ++i) {
    S* c = C + static_cast<size_t>(i) * n;
    std::fill(c, c + n, S(0));
    const S* a = A + static_cast<size_t>(i) * k;
    for (int l = 0; l < k; ++l) {
      const S al = a[l];
      const S* b = B + static_cast<size_t>(l) * n;
      for (int j = 0; j < n; ++j) c[j] += al * b[j];
    }
  }
}

// C[m,n] = A[m,k] * B[n,k]^T
template <typename S>
void mm_nt(const S* A, const S* B, S* C, int m, int k, int n) {
#pragma omp parallel for schedule(static) if (static_cast<long long>(m) * k * n > (1 << 16))
  for (int i = 0; i < m; ++i) {
    const S* a = A + static_cast<size_t>(i) * k;
    S* c = C + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const S* b = B + static_cast<size_t>(j) * k;
      S acc = S(0);
      for (int l = 0; l < k; ++l) acc += a[l] * b[l];
      c[j] = acc;
    }
  }
}

// C[k,n] = A[m,k]^T * B[m,n]
template <typename S>
void mm_tn(const S* A, const S* B, S* C, int m, int k, int n) {
#pragma omp parallel for schedule(static) if (static_cast<long long>(m) * k * n > (1 << 16))
  for (int r = 0; r < k; ++r) {
    S* c = C + static_cast<size_t>(r) * n;
    std::fill(c, c + n, S(0));
    for (int i = 0; i < m; ++i) {
      const S ar = A[static_cast<size_t>(i) * k + r];
      const S* b = B + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) c[j] += ar * b[j];
    }
  }
}

template <typename S>
void axpy(std::vector<S>& dst, const std::vector<S>& src) {
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename S>
bool want_graph(const TensorT<S>& t) {
  return grad_enabled() && t.requires_grad();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// matmul

// A is [..., m, k] flattened to 2-D [m, k]; B is [k, n] (or [n, k] when
// transpose_b). Inputs must be 2-D; use reshape for batched projections.
template <typename S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b, bool transpose_b = false) {
  if (a.shape().size() != 2 || b.shape().size() != 2) {
    throw ShapeMismatch("matmul: expects 2-D operands, got " + shape_str(a.shape()) + " and " +
                        shape_str(b.shape()));
  }
  const int m = a.shape()[0];
  const int k = a.shape()[1];
  const int bk = transpose_b ? b.shape()[1] : b.shape()[0];
  const int n = transpose_b ? b.shape()[0] : b.shape()[1];
  if (k != bk) {
    throw ShapeMismatch("matmul: inner dims " + shape_str(a.shape()) + " x " +
                        shape_str(b.shape()) + (transpose_b ? " (transposed)" : ""));
  }
  TensorT<S> out = TensorT<S>::zeros({m, n});
  if (transpose_b) {
    detail::mm_nt(a.data().data(), b.data().data(), out.data().data(), m, k, n);
  } else {
    detail::mm_nn(a.data().data(), b.data().data(), out.data().data(), m, k, n);
  }
  detail::check_finite(out.data(), "matmul");
  if (detail::want_graph(a) || detail::want_graph(b)) {
    out.set_requires_grad(true);
    auto an = a.node(), bn = b.node();
    out.node()->parents = {an, bn};
    out.node()->backward_fn = [m, k, n, transpose_b](TensorNode<S>& self) {
      auto& an = self.parents[0];
      auto& bn = self.parents[1];
      const S* g = self.grad.data();
      if (an->requires_grad) {
        an->ensure_grad();
        std::vector<S> da(static_cast<size_t>(m) * k);
        if (transpose_b) {
          detail::mm_nn(g, bn->data.data(), da.data(), m, n, k);  // dA = G * B
        } else {
          detail::mm_nt(g, bn->data.data(), da.data(), m, n, k);  // dA = G * B^T
        }
        detail::axpy(an->grad, da);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        if (transpose_b) {
          std::vector<S> db(static_cast<size_t>(n) * k);
          detail::mm_tn(g, an->data.data(), db.data(), m, n, k);  // dB = G^T * A
          detail::axpy(bn->grad, db);
        } else {
          std::vector<S> db(static_cast<size_t>(k) * n);
          detail::mm_tn(an->data.data(), g, db.data(), m, k, n);  // dB = A^T * G
          detail::axpy(bn->grad, db);
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// add / mul / scale

// b must either match a's shape or be a suffix of it (bias broadcast over the
// leading batch dims).
template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  const std::int64_t na = a.numel(), nb = b.numel();
  const bool suffix = b.shape().size() <= a.shape().size() &&
                      std::equal(b.shape().rbegin(), b.shape().rend(), a.shape().rbegin());
  if (!suffix) {
    throw ShapeMismatch("add: " + shape_str(b.shape()) + " is not a suffix of " +
                        shape_str(a.shape()));
  }
  TensorT<S> out = TensorT<S>::zeros(a.shape());
  const std::int64_t reps = na / nb;
  {
    const S* pa = a.data().data();
    const S* pb = b.data().data();
    S* po = out.data().data();
    for (std::int64_t r = 0; r < reps; ++r) {
      const std::int64_t base = r * nb;
      for (std::int64_t i = 0; i < nb; ++i) po[base + i] = pa[base + i] + pb[i];
    }
  }
  detail::check_finite(out.data(), "add");
  if (detail::want_graph(a) || detail::want_graph(b)) {
    out.set_requires_grad(true);
    out.node()->parents = {a.node(), b.node()};
    out.node()->backward_fn = [nb, reps](TensorNode<S>& self) {
      auto& an = self.parents[0];
      auto& bn = self.parents[1];
      if (an->requires_grad) {
        an->ensure_grad();
        detail::axpy(an->grad, self.grad);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::int64_t r = 0; r < reps; ++r) {
          const std::int64_t base = r * nb;
          for (std::int64_t i = 0; i < nb; ++i) bn->grad[i] += self.grad[base + i];
        }
      }
    };
  }
  return out;
}

// Elementwise product. Like add, b may be a trailing suffix of a's shape
// (covers both a learned scalar such as the temperature and per-channel
// gains over a batch).
template <typename S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
  const bool suffix = b.numel() == 1 ||
                      (b.shape().size() <= a.shape().size() &&
                       std::equal(b.shape().rbegin(), b.shape().rend(), a.shape().rbegin()));
  if (!suffix) {
    throw ShapeMismatch("mul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  TensorT<S> out = TensorT<S>::zeros(a.shape());
  const std::int64_t nb = b.numel();
  const std::int64_t reps = a.numel() / nb;
  {
    const S* pa = a.data().data();
    const S* pb = b.data().data();
    S* po = out.data().data();
    for (std::int64_t r = 0; r < reps; ++r) {
      const std::int64_t base = r * nb;
      for (std::int64_t i = 0; i < nb; ++i) po[base + i] = pa[base + i] * pb[i];
    }
  }
  detail::check_finite(out.data(), "mul");
  if (detail::want_graph(a) || detail::want_graph(b)) {
    out.set_requires_grad(true);
    out.node()->parents = {a.node(), b.node()};
    out.node()->backward_fn = [nb, reps](TensorNode<S>& self) {
      auto& an = self.parents[0];
      auto& bn = self.parents[1];
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::int64_t r = 0; r < reps; ++r) {
          const std::int64_t base = r * nb;
          for (std::int64_t i = 0; i < nb; ++i) {
            an->grad[base + i] += self.grad[base + i] * bn->data[i];
          }
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::int64_t r = 0; r < reps; ++r) {
          const std::int64_t base = r * nb;
          for (std::int64_t i = 0; i < nb; ++i) {
            bn->grad[i] += self.grad[base + i] * an->data[base + i];
          }
        }
      }
    };
  }
  return out;
}

// Multiply by a compile-time-known constant.
template <typename S>
TensorT<S> scale(const TensorT<S>& a, double c) {
  TensorT<S> out = TensorT<S>::zeros(a.shape());
  const S cs = static_cast<S>(c);
  for (std::int64_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] * cs;
  detail::check_finite(out.data(), "scale");
  if (detail::want_graph(a)) {
    out.set_requires_grad(true);
    out.node()->parents = {a.node()};
    out.node()->backward_fn = [cs](TensorNode<S>& self) {
      auto& an = self.parents[0];
      an->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * cs;
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// reshape / slice_rows

template <typename S>
TensorT<S> reshape(const TensorT<S>& a, Shape new_shape) {
  if (shape_numel(new_shape) != a.numel()) {
    throw ShapeMismatch("reshape: " + shape_str(a.shape()) + " -> " + shape_str(new_shape));
  }
  TensorT<S> out = TensorT<S>::from_data(std::move(new_shape), a.data());
  if (detail::want_graph(a)) {
    out.set_requires_grad(true);
    out.node()->parents = {a.node()};
    out.node()->backward_fn = [](TensorNode<S>& self) {
      auto& an = self.parents[0];
      an->ensure_grad();
      detail::axpy(an->grad, self.grad);
    };
  }
  return out;
}

template <typename S>
TensorT<S> slice_rows(const TensorT<S>& a, int begin, int count) {
  if (a.shape().size() < 1) throw ShapeMismatch("slice_rows: rank-0 input");
  const int rows = a.shape()[0];
  if (begin < 0 || count < 0 || begin + count > rows) {
    throw ShapeMismatch("slice_rows: range out of bounds");
  }
  const std::int64_t stride = a.numel() / rows;
  Shape os = a.shape();
  os[0] = count;
  TensorT<S> out = TensorT<S>::zeros(os);
  std::copy(a.data().begin() + begin * stride, a.data().begin() + (begin + count) * stride,
            out.data().begin());
  if (detail::want_graph(a)) {
    out.set_requires_grad(true);
    out.node()->parents = {a.node()};
    out.node()->backward_fn = [begin, stride](TensorNode<S>& self) {
      auto& an = self.parents[0];
      an->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) an->grad[begin * stride + i] += self.grad[i];
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// softmax / layernorm (over the last axis)

template <typename S>
TensorT<S> softmax(const TensorT<S>& a) {
  if (a.shape().empty()) throw ShapeMismatch("softmax: rank-0 input");
  const int cols = a.shape().back();
  const std::int64_t rows = a.numel() / cols;
  TensorT<S> out = TensorT<S>::zeros(a.shape());
  for (std::int64_t r = 0; r < rows; ++r) {
    const S* x = a.data().data() + r * cols;
    S* y = out.data().data() + r * cols;
    S mx = x[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    S sum = S(0);
    for (int j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - mx);
      sum += y[j];
    }
    for (int j = 0; j < cols; ++j) y[j] /= sum;
  }
  detail::check_finite(out.data(), "softmax");
  if (detail::want_graph(a)) {
    out.set_requires_grad(true);
    out.node()->parents = {a.node()};
    out.node()->backward_fn = [cols](TensorNode<S>& self) {
      auto& an = self.parents[0];
      an->ensure_grad();
      const std::int64_t rows = self.numel() / cols;
      for (std::int64_t r = 0; r < rows; ++r) {
        const S* y = self.data.data() + r * cols;
        const S* g = self.grad.data() + r * cols;
        S dot = S(0);
        for (int j = 0; j < cols; ++j) dot += y[j] * g[j];
        S* dx = an->grad.data() + r * cols;
        for (int j = 0; j < cols; ++j) dx[j] += y[j] * (g[j] - dot);
      }
    };
  }
  return out;
}

// Normalization only (no affine); compose gain/bias with mul/add.
template <typename S>
TensorT<S> layernorm(const TensorT<S>& a, double eps = 1e-5) {
  if (a.shape().empty()) throw ShapeMismatch("layernorm: rank-0 input");
  const int cols = a.shape().back();
  const std::int64_t rows = a.numel() / cols;
  TensorT<S> out = TensorT<S>::zeros(a.shape());
  std::vector<S> inv_std(static_cast<size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    const S* x = a.data().data() + r * cols;
    S* y = out.data().data() + r * cols;
    S mean = S(0);
    for (int j = 0; j < cols; ++j) mean += x[j];
    mean /= S(cols);
    S var = S(0);
    for (int j = 0; j < cols; ++j) {
      const S d = x[j] - mean;
      var += d * d;
    }
    var /= S(cols);
    const S is = S(1) / std::sqrt(var + static_cast<S>(eps));
    inv_std[static_cast<size_t>(r)] = is;
    for (int j = 0; j < cols; ++j) y[j] = (x[j] - mean) * is;
  }
  detail::check_finite(out.data(), "layernorm");
  if (detail::want_graph(a)) {
    out.set_requires_grad(true);
    out.node()->parents = {a.node()};
    out.node()->backward_fn = [cols, inv_std = std::move(inv_std)](TensorNode<S>& self) {
      auto& an = self.parents[0];
      an->ensure_grad();
      const std::int64_t rows = self.numel() / cols;
      for (std::int64_t r = 0; r < rows; ++r) {
        const S* y = self.data.data() + r * cols;
        const S* g = self.grad.data() + r * cols;
        S gm = S(0), gym = S(0);
        for (int j = 0; j < cols; ++j) {
          gm += g[j];
          gym += g[j] * y[j];
        }
        gm /= S(cols);
        gym /= S(cols);
        const S is = inv_std[static_cast<size_t>(r)];
        S* dx = an->grad.data() + r * cols;
        for (int j = 0; j < cols; ++j) dx[j] += (g[j] - gm - y[j] * gym) * is;
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// elementwise: gelu / log / exp

template <typename S>
TensorT<S> gelu(const TensorT<S>& a) {
  TensorT<S> out = TensorT<S>::zeros(a.shape());
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double x = static_cast<double>(a.data()[i]);
    out.data()[i] = static_cast<S>(0.5 * x * (1.0 + std::erf(x * inv_sqrt2)));
  }
  detail::check_finite(out.data(), "gelu");
  if (detail::want_graph(a)) {
    out.set_requires_grad(true);
    out.node()->parents = {a.node()};
    out.node()->backward_fn = [](TensorNode<S>& self) {
      auto& an = self.parents[0];
      an->ensure_grad();
      constexpr double inv_sqrt2 = 0.7071067811865475244;
      constexpr double inv_sqrt2pi = 0.3989422804014326779;
      for (size_t i = 0; i < self.grad.size(); ++i) {
        const double x = static_cast<double>(an->data[i]);
        const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
        const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
        an->grad[i] += self.grad[i] * static_cast<S>(cdf + x * pdf);
      }
    };
  }
  return out;
}

template <typename S>
TensorT<S> log(const TensorT<S>& a) {
  TensorT<S> out = TensorT<S>::zeros(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) out.data()[i] = std::log(a.data()[i]);
  detail::check_finite(out.data(), "log");
  if (detail::want_graph(a)) {
    out.set_requires_grad(true);
    out.node()->parents = {a.node()};
    out.node()->backward_fn = [](TensorNode<S>& self) {
      auto& an = self.parents[0];
      an->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] / an->data[i];
    };
  }
  return out;
}

template <typename S>
TensorT<S> exp(const TensorT<S>& a) {
  TensorT<S> out = TensorT<S>::zeros(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) out.data()[i] = std::exp(a.data()[i]);
  detail::check_finite(out.data(), "exp");
  if (detail::want_graph(a)) {
    out.set_requires_grad(true);
    out.node()->parents = {a.node()};
    out.node()->backward_fn = [](TensorNode<S>& self) {
      auto& an = self.parents[0];
      an->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * self.data[i];
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// embedding_lookup

template <typename S>
TensorT<S> embedding_lookup(const TensorT<S>& table, const std::vector<int>& ids,
                            Shape lead_shape) {
  if (table.shape().size() != 2) throw ShapeMismatch("embedding_lookup: table must be 2-D");
  if (shape_numel(lead_shape) != static_cast<std::int64_t>(ids.size())) {
    throw ShapeMismatch("embedding_lookup: ids/lead_shape mismatch");
  }
  const int vocab = table.shape()[0];
  const int dim = table.shape()[1];
  for (int id : ids) {
    if (id < 0 || id >= vocab) throw ShapeMismatch("embedding_lookup: id out of range");
  }
  Shape os = lead_shape;
  os.push_back(dim);
  TensorT<S> out = TensorT<S>::zeros(os);
  for (size_t i = 0; i < ids.size(); ++i) {
    std::copy(table.data().begin() + static_cast<size_t>(ids[i]) * dim,
              table.data().begin() + static_cast<size_t>(ids[i] + 1) * dim,
              out.data().begin() + i * dim);
  }
  if (detail::want_graph(table)) {
    out.set_requires_grad(true);
    out.node()->parents = {table.node()};
    out.node()->backward_fn = [ids, dim](TensorNode<S>& self) {
      auto& tn = self.parents[0];
      tn->ensure_grad();
      for (size_t i = 0; i < ids.size(); ++i) {
        S* dst = tn->grad.data() + static_cast<size_t>(ids[i]) * dim;
        const S* src = self.grad.data() + i * dim;
        for (int j = 0; j < dim; ++j) dst[j] += src[j];
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// masked multi-head attention (fused)

// q/k/v: [B, T, D] with D split into `heads` heads; mask: [B, T, T] of 0/1
// (1 = position may be attended to). Causal vs bidirectional is entirely the
// mask's business.
template <typename S>
TensorT<S> masked_attention(const TensorT<S>& q, const TensorT<S>& k, const TensorT<S>& v,
                            const TensorT<S>& mask, int heads) {
  if (q.shape().size() != 3 || q.shape() != k.shape() || q.shape() != v.shape()) {
    throw ShapeMismatch("masked_attention: q/k/v must share [B,T,D]");
  }
  const int B = q.shape()[0], T = q.shape()[1], D = q.shape()[2];
  if (D % heads != 0) throw ShapeMismatch("masked_attention: D not divisible by heads");
  if (mask.shape() != Shape{B, T, T}) {
    throw ShapeMismatch("masked_attention: mask must be [B,T,T], got " + shape_str(mask.shape()));
  }
  const int dh = D / heads;
  const S inv_sqrt = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
  TensorT<S> out = TensorT<S>::zeros(q.shape());
  // Attention probabilities are kept for the backward pass.
  auto probs = std::make_shared<std::vector<S>>(
      static_cast<size_t>(B) * heads * T * T, S(0));

#pragma omp parallel for schedule(static) collapse(2) if (B * heads > 1)
  for (int b = 0; b < B; ++b) {
    for (int h = 0; h < heads; ++h) {
      const S* mrow = mask.data().data() + static_cast<size_t>(b) * T * T;
      S* prob = probs->data() + (static_cast<size_t>(b) * heads + h) * T * T;
      for (int i = 0; i < T; ++i) {
        const S* qi = q.data().data() + (static_cast<size_t>(b) * T + i) * D + h * dh;
        S* pi = prob + static_cast<size_t>(i) * T;
        S mx = -std::numeric_limits<S>::infinity();
        for (int j = 0; j < T; ++j) {
          if (mrow[static_cast<size_t>(i) * T + j] == S(0)) {
            pi[j] = -std::numeric_limits<S>::infinity();
            continue;
          }
          const S* kj = k.data().data() + (static_cast<size_t>(b) * T + j) * D + h * dh;
          S acc = S(0);
          for (int d = 0; d < dh; ++d) acc += qi[d] * kj[d];
          pi[j] = acc * inv_sqrt;
          mx = std::max(mx, pi[j]);
        }
        S sum = S(0);
        for (int j = 0; j < T; ++j) {
          pi[j] = std::isinf(pi[j]) ? S(0) : std::exp(pi[j] - mx);
          sum += pi[j];
        }
        if (sum > S(0)) {
          for (int j = 0; j < T; ++j) pi[j] /= sum;
        }
        S* oi = out.data().data() + (static_cast<size_t>(b) * T + i) * D + h * dh;
        for (int j = 0; j < T; ++j) {
          const S p = pi[j];
          if (p == S(0)) continue;
          const S* vj = v.data().data() + (static_cast<size_t>(b) * T + j) * D + h * dh;
          for (int d = 0; d < dh; ++d) oi[d] += p * vj[d];
        }
      }
    }
  }
  detail::check_finite(out.data(), "masked_attention");
  if (detail::want_graph(q) || detail::want_graph(k) || detail::want_graph(v)) {
    out.set_requires_grad(true);
    out.node()->parents = {q.node(), k.node(), v.node()};
    out.node()->backward_fn = [B, T, D, heads, dh, inv_sqrt, probs](TensorNode<S>& self) {
      auto& qn = self.parents[0];
      auto& kn = self.parents[1];
      auto& vn = self.parents[2];
      if (qn->requires_grad) qn->ensure_grad();
      if (kn->requires_grad) kn->ensure_grad();
      if (vn->requires_grad) vn->ensure_grad();
      std::vector<S> ds(static_cast<size_t>(T) * T);
      for (int b = 0; b < B; ++b) {
        for (int h = 0; h < heads; ++h) {
          const S* prob = probs->data() + (static_cast<size_t>(b) * heads + h) * T * T;
          for (int i = 0; i < T; ++i) {
            const S* gi = self.grad.data() + (static_cast<size_t>(b) * T + i) * D + h * dh;
            const S* pi = prob + static_cast<size_t>(i) * T;
            S* dsi = ds.data() + static_cast<size_t>(i) * T;
            // dV and dA
            S dot = S(0);
            for (int j = 0; j < T; ++j) {
              const S p = pi[j];
              S da = S(0);
              const S* vj = vn->data.data() + (static_cast<size_t>(b) * T + j) * D + h * dh;
              for (int d = 0; d < dh; ++d) da += gi[d] * vj[d];
              if (p != S(0) && vn->requires_grad) {
                S* dvj = vn->grad.data() + (static_cast<size_t>(b) * T + j) * D + h * dh;
                for (int d = 0; d < dh; ++d) dvj[d] += p * gi[d];
              }
              dsi[j] = da;
              dot += p * da;
            }
            for (int j = 0; j < T; ++j) dsi[j] = pi[j] * (dsi[j] - dot) * inv_sqrt;
          }
          // dQ = dS * K, dK = dS^T * Q
          for (int i = 0; i < T; ++i) {
            const S* dsi = ds.data() + static_cast<size_t>(i) * T;
            const S* qi = qn->data.data() + (static_cast<size_t>(b) * T + i) * D + h * dh;
            S* dqi = qn->requires_grad
                         ? qn->grad.data() + (static_cast<size_t>(b) * T + i) * D + h * dh
                         : nullptr;
            for (int j = 0; j < T; ++j) {
              const S s = dsi[j];
              if (s == S(0)) continue;
              const S* kj = kn->data.data() + (static_cast<size_t>(b) * T + j) * D + h * dh;
              if (dqi) {
                for (int d = 0; d < dh; ++d) dqi[d] += s * kj[d];
              }
              if (kn->requires_grad) {
                S* dkj = kn->grad.data() + (static_cast<size_t>(b) * T + j) * D + h * dh;
                for (int d = 0; d < dh; ++d) dkj[d] += s * qi[d];
              }
            }
          }
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions / normalization

// Mean over all elements -> scalar.
template <typename S>
TensorT<S> mean(const TensorT<S>& a) {
  if (a.numel() == 0) throw ShapeMismatch("mean: empty tensor");
  S acc = S(0);
  for (const S x : a.data()) acc += x;
  TensorT<S> out = TensorT<S>::scalar(acc / static_cast<S>(a.numel()));
  detail::check_finite(out.data(), "mean");
  if (detail::want_graph(a)) {
    out.set_requires_grad(true);
    out.node()->parents = {a.node()};
    const S inv = S(1) / static_cast<S>(a.numel());
    out.node()->backward_fn = [inv](TensorNode<S>& self) {
      auto& an = self.parents[0];
      an->ensure_grad();
      const S g = self.grad[0] * inv;
      for (auto& d : an->grad) d += g;
    };
  }
  return out;
}

// Mean over the middle (token) axis, weighted by a 0/1 mask: x [B,T,D],
// mask [B,T] -> [B,D]. Rows with an all-zero mask are rejected.
template <typename S>
TensorT<S> masked_mean(const TensorT<S>& x, const TensorT<S>& mask) {
  if (x.shape().size() != 3) throw ShapeMismatch("masked_mean: x must be [B,T,D]");
  const int B = x.shape()[0], T = x.shape()[1], D = x.shape()[2];
  if (mask.shape() != Shape{B, T}) throw ShapeMismatch("masked_mean: mask must be [B,T]");
  TensorT<S> out = TensorT<S>::zeros({B, D});
  std::vector<S> inv_count(static_cast<size_t>(B));
  for (int b = 0; b < B; ++b) {
    S cnt = S(0);
    for (int t = 0; t < T; ++t) cnt += mask.data()[static_cast<size_t>(b) * T + t];
    if (cnt == S(0)) throw ShapeMismatch("masked_mean: all-zero mask row");
    inv_count[static_cast<size_t>(b)] = S(1) / cnt;
    S* ob = out.data().data() + static_cast<size_t>(b) * D;
    for (int t = 0; t < T; ++t) {
      const S m = mask.data()[static_cast<size_t>(b) * T + t];
      if (m == S(0)) continue;
      const S* xt = x.data().data() + (static_cast<size_t>(b) * T + t) * D;
      for (int d = 0; d < D; ++d) ob[d] += xt[d] * m;
    }
    for (int d = 0; d < D; ++d) ob[d] *= inv_count[static_cast<size_t>(b)];
  }
  detail::check_finite(out.data(), "masked_mean");
  if (detail::want_graph(x)) {
    out.set_requires_grad(true);
    out.node()->parents = {x.node(), mask.node()};
    out.node()->backward_fn = [B, T, D, inv_count = std::move(inv_count)](TensorNode<S>& self) {
      auto& xn = self.parents[0];
      auto& mn = self.parents[1];
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (int b = 0; b < B; ++b) {
        const S* gb = self.grad.data() + static_cast<size_t>(b) * D;
        const S ic = inv_count[static_cast<size_t>(b)];
        for (int t = 0; t < T; ++t) {
          const S m = mn->data[static_cast<size_t>(b) * T + t];
          if (m == S(0)) continue;
          S* dx = xn->grad.data() + (static_cast<size_t>(b) * T + t) * D;
          for (int d = 0; d < D; ++d) dx[d] += gb[d] * m * ic;
        }
      }
    };
  }
  return out;
}

// Row-wise L2 normalization over the last axis.
template <typename S>
TensorT<S> l2_normalize(const TensorT<S>& a) {
  if (a.shape().empty()) throw ShapeMismatch("l2_normalize: rank-0 input");
  const int cols = a.shape().back();
  const std::int64_t rows = a.numel() / cols;
  TensorT<S> out = TensorT<S>::zeros(a.shape());
  std::vector<S> inv_norm(static_cast<size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    const S* x = a.data().data() + r * cols;
    S* y = out.data().data() + r * cols;
    S n2 = S(0);
    for (int j = 0; j < cols; ++j) n2 += x[j] * x[j];
    const S inv = S(1) / std::sqrt(n2);
    inv_norm[static_cast<size_t>(r)] = inv;
    for (int j = 0; j < cols; ++j) y[j] = x[j] * inv;
  }
  detail::check_finite(out.data(), "l2_normalize");
  if (detail::want_graph(a)) {
    out.set_requires_grad(true);
    out.node()->parents = {a.node()};
    out.node()->backward_fn = [cols, inv_norm = std::move(inv_norm)](TensorNode<S>& self) {
      auto& an = self.parents[0];
      an->ensure_grad();
      const std::int64_t rows = self.numel() / cols;
      for (std::int64_t r = 0; r < rows; ++r) {
        const S* y = self.data.data() + r * cols;
        const S* g = self.grad.data() + r * cols;
        S dot = S(0);
        for (int j = 0; j < cols; ++j) dot += y[j] * g[j];
        const S inv = inv_norm[static_cast<size_t>(r)];
        S* dx = an->grad.data() + r * cols;
        for (int j = 0; j < cols; ++j) dx[j] += (g[j] - y[j] * dot) * inv;
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// cross entropy over rows

// logits [N,C], integer targets, optional per-row weights. Returns the
// (weighted) mean of -log softmax(logits)[i, target_i], computed via a stable
// log-sum-exp.
template <typename S>
TensorT<S> cross_entropy_rows(const TensorT<S>& logits, const std::vector<int>& targets,
                              const std::vector<S>& row_weights = {}) {
  if (logits.shape().size() != 2) throw ShapeMismatch("cross_entropy_rows: logits must be 2-D");
  const int N = logits.shape()[0], C = logits.shape()[1];
  if (static_cast<int>(targets.size()) != N) {
    throw ShapeMismatch("cross_entropy_rows: targets size mismatch");
  }
  if (!row_weights.empty() && static_cast<int>(row_weights.size()) != N) {
    throw ShapeMismatch("cross_entropy_rows: weights size mismatch");
  }
  for (int t : targets) {
    if (t < 0 || t >= C) throw ShapeMismatch("cross_entropy_rows: target out of range");
  }
  auto probs = std::make_shared<std::vector<S>>(static_cast<size_t>(N) * C);
  S weight_sum = S(0);
  S loss = S(0);
  for (int i = 0; i < N; ++i) {
    const S w = row_weights.empty() ? S(1) : row_weights[static_cast<size_t>(i)];
    const S* x = logits.data().data() + static_cast<size_t>(i) * C;
    S* p = probs->data() + static_cast<size_t>(i) * C;
    S mx = x[0];
    for (int j = 1; j < C; ++j) mx = std::max(mx, x[j]);
    S sum = S(0);
    for (int j = 0; j < C; ++j) {
      p[j] = std::exp(x[j] - mx);
      sum += p[j];
    }
    for (int j = 0; j < C; ++j) p[j] /= sum;
    loss += w * (std::log(sum) + mx - x[targets[static_cast<size_t>(i)]]);
    weight_sum += w;
  }
  if (weight_sum == S(0)) throw ShapeMismatch("cross_entropy_rows: zero total weight");
  TensorT<S> out = TensorT<S>::scalar(loss / weight_sum);
  detail::check_finite(out.data(), "cross_entropy_rows");
  if (detail::want_graph(logits)) {
    out.set_requires_grad(true);
    out.node()->parents = {logits.node()};
    out.node()->backward_fn = [N, C, targets, row_weights, probs, weight_sum](TensorNode<S>& self) {
      auto& ln = self.parents[0];
      ln->ensure_grad();
      const S g = self.grad[0] / weight_sum;
      for (int i = 0; i < N; ++i) {
        const S w = row_weights.empty() ? S(1) : row_weights[static_cast<size_t>(i)];
        if (w == S(0)) continue;
        const S* p = probs->data() + static_cast<size_t>(i) * C;
        S* dx = ln->grad.data() + static_cast<size_t>(i) * C;
        const int t = targets[static_cast<size_t>(i)];
        for (int j = 0; j < C; ++j) dx[j] += g * w * (p[j] - (j == t ? S(1) : S(0)));
      }
    };
  }
  return out;
}

}  // namespace minclip
