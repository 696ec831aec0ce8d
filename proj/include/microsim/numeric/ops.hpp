#pragma once

// Differentiable primitives over Tensor.
//
// Broadcasting: binary elementwise ops accept a right operand whose shape,
// aligned at the trailing end, has every dimension equal to the left
// operand's or equal to 1. The right operand may have lower rank. The result
// always has the left operand's shape.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "microsim/numeric/tensor.hpp"

namespace microsim {

namespace detail {

/// Flat index into `rhs` for every flat index of `lhs` under trailing broadcast.
inline std::vector<std::size_t> broadcast_index(const Shape& lhs, const Shape& rhs,
                                                const char* op) {
  auto fail = [&] {
    throw ShapeError(std::string(op) + ": cannot broadcast right operand " + shape_string(rhs) +
                     " onto left operand " + shape_string(lhs));
  };
  if (rhs.size() > lhs.size()) fail();
  const std::size_t offset = lhs.size() - rhs.size();
  std::vector<std::size_t> rhs_stride(lhs.size(), 0);
  std::size_t stride = 1;
  for (std::size_t k = rhs.size(); k-- > 0;) {
    const std::size_t la = lhs[k + offset];
    if (rhs[k] == la) {
      rhs_stride[k + offset] = stride;
    } else if (rhs[k] != 1) {
      fail();
    }
    stride *= rhs[k];
  }
  const std::size_t n = shape_size(lhs);
  std::vector<std::size_t> idx(n);
  std::vector<std::size_t> counter(lhs.size(), 0);
  std::size_t cur = 0;
  for (std::size_t i = 0; i < n; ++i) {
    idx[i] = cur;
    for (std::size_t k = lhs.size(); k-- > 0;) {
      ++counter[k];
      cur += rhs_stride[k];
      if (counter[k] < lhs[k]) break;
      cur -= rhs_stride[k] * counter[k];
      counter[k] = 0;
    }
  }
  return idx;
}

template <class Fwd, class DA, class DB>
Tensor binary_op(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, DA da, DB db) {
  const bool same = a.shape() == b.shape();
  std::vector<std::size_t> map;
  if (!same) map = broadcast_index(a.shape(), b.shape(), op);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[same ? i : map[i]]);
  return make_result(op, a.shape(), std::move(out), {a, b},
                     [same, map = std::move(map), da, db](Node& self) {
                       const auto& A = self.parents[0]->values;
                       const auto& B = self.parents[1]->values;
                       double* ga = parent_grad(self, 0);
                       double* gb = parent_grad(self, 1);
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         const std::size_t j = same ? i : map[i];
                         const double g = self.grad[i];
                         if (ga) ga[i] += g * da(A[i], B[j]);
                         if (gb) gb[j] += g * db(A[i], B[j]);
                       }
                     });
}

/// Elementwise unary op; `deriv(x, y)` receives input and output values.
template <class Fwd, class Deriv>
Tensor unary_op(const char* op, const Tensor& a, Fwd fwd, Deriv deriv) {
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return make_result(op, a.shape(), std::move(out), {a}, [deriv](Node& self) {
    double* ga = parent_grad(self, 0);
    if (!ga) return;
    const auto& X = self.parents[0]->values;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      ga[i] += self.grad[i] * deriv(X[i], self.values[i]);
    }
  });
}

inline void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
  }
}

}  // namespace detail

// ---------------------------------------------------------------- arithmetic

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  for (double y : b.values()) {
    if (y == 0.0) throw DomainError("div: division by zero");
  }
  return detail::binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

inline Tensor add_scalar(const Tensor& a, double s) {
  return detail::unary_op(
      "add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

inline Tensor mul_scalar(const Tensor& a, double s) {
  return detail::unary_op(
      "mul_scalar", a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator+(double s, const Tensor& a) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return add_scalar(a, -s); }
inline Tensor operator-(double s, const Tensor& a) { return add_scalar(mul_scalar(a, -1.0), s); }
inline Tensor operator*(const Tensor& a, double s) { return mul_scalar(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul_scalar(a, s); }
inline Tensor operator-(const Tensor& a) { return mul_scalar(a, -1.0); }

// ------------------------------------------------------------------- unary

inline Tensor square(const Tensor& a) {
  return detail::unary_op(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

inline Tensor exp(const Tensor& a) {
  return detail::unary_op(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& a) {
  for (double x : a.values()) {
    if (!(x > 0.0)) throw DomainError("log: non-positive input " + std::to_string(x));
  }
  return detail::unary_op(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Tensor sqrt(const Tensor& a) {
  for (double x : a.values()) {
    if (x < 0.0) throw DomainError("sqrt: negative input " + std::to_string(x));
  }
  return detail::unary_op(
      "sqrt", a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

inline Tensor abs(const Tensor& a) {
  return detail::unary_op(
      "abs", a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

inline Tensor pow_scalar(const Tensor& a, double p) {
  return detail::unary_op(
      "pow_scalar", a, [p](double x) { return std::pow(x, p); },
      [p](double x, double) { return p * std::pow(x, p - 1.0); });
}

/// max(alpha * x, x) for 0 <= alpha <= 1.
inline Tensor leaky_relu(const Tensor& a, double alpha = 0.2) {
  return detail::unary_op(
      "leaky_relu", a, [alpha](double x) { return x > 0.0 ? x : alpha * x; },
      [alpha](double x, double) { return x > 0.0 ? 1.0 : alpha; });
}

inline Tensor relu(const Tensor& a) { return leaky_relu(a, 0.0); }

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary_op(
      "sigmoid", a,
      [](double x) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      },
      [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh(const Tensor& a) {
  return detail::unary_op(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

/// log(1 + exp(x)), stable for large |x|.
inline Tensor softplus(const Tensor& a) {
  return detail::unary_op(
      "softplus", a,
      [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      });
}

/// log(sigmoid(x)) = -softplus(-x).
inline Tensor log_sigmoid(const Tensor& a) { return -softplus(-a); }

// -------------------------------------------------------------- reductions

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  return detail::make_result("sum", Shape{1}, {s}, {a}, [](detail::Node& self) {
    double* ga = detail::parent_grad(self, 0);
    if (!ga) return;
    const double g = self.grad[0];
    for (std::size_t i = 0; i < self.parents[0]->values.size(); ++i) ga[i] += g;
  });
}

inline Tensor mean(const Tensor& a) { return mul_scalar(sum(a), 1.0 / double(a.size())); }

/// Sum over one axis; the axis is removed (a rank-1 input yields shape [1]).
inline Tensor sum(const Tensor& a, std::size_t axis) {
  if (axis >= a.rank()) throw ShapeError("sum: axis out of range for " + shape_string(a.shape()));
  const auto& s = a.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t k = 0; k < axis; ++k) outer *= s[k];
  for (std::size_t k = axis + 1; k < s.size(); ++k) inner *= s[k];
  const std::size_t len = s[axis];
  Shape out_shape;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (k != axis) out_shape.push_back(s[k]);
  }
  if (out_shape.empty()) out_shape.push_back(1);
  std::vector<double> out(outer * inner, 0.0);
  const auto v = a.values();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += v[(o * len + l) * inner + i];
  return detail::make_result("sum_axis", out_shape, std::move(out), {a},
                             [outer, inner, len](detail::Node& self) {
                               double* ga = detail::parent_grad(self, 0);
                               if (!ga) return;
                               for (std::size_t o = 0; o < outer; ++o)
                                 for (std::size_t l = 0; l < len; ++l)
                                   for (std::size_t i = 0; i < inner; ++i)
                                     ga[(o * len + l) * inner + i] += self.grad[o * inner + i];
                             });
}

inline Tensor mean(const Tensor& a, std::size_t axis) {
  return mul_scalar(sum(a, axis), 1.0 / double(a.shape().at(axis)));
}

// --------------------------------------------------------------- structure

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + shape_string(a.shape()) + " as " +
                     shape_string(shape));
  }
  std::vector<double> v(a.values().begin(), a.values().end());
  return detail::make_result("reshape", std::move(shape), std::move(v), {a},
                             [](detail::Node& self) {
                               double* ga = detail::parent_grad(self, 0);
                               if (!ga) return;
                               for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
                             });
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  const auto A = a.values();
  const auto B = b.values();
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t l = 0; l < k; ++l) {
      const double x = A[i * k + l];
      for (std::size_t j = 0; j < m; ++j) out[i * m + j] += x * B[l * m + j];
    }
  return detail::make_result("matmul", Shape{n, m}, std::move(out), {a, b},
                             [n, k, m](detail::Node& self) {
                               const auto& A = self.parents[0]->values;
                               const auto& B = self.parents[1]->values;
                               const auto& G = self.grad;
                               if (double* ga = detail::parent_grad(self, 0)) {
                                 for (std::size_t i = 0; i < n; ++i)
                                   for (std::size_t l = 0; l < k; ++l) {
                                     double s = 0.0;
                                     for (std::size_t j = 0; j < m; ++j) s += G[i * m + j] * B[l * m + j];
                                     ga[i * k + l] += s;
                                   }
                               }
                               if (double* gb = detail::parent_grad(self, 1)) {
                                 for (std::size_t i = 0; i < n; ++i)
                                   for (std::size_t l = 0; l < k; ++l) {
                                     const double x = A[i * k + l];
                                     for (std::size_t j = 0; j < m; ++j) gb[l * m + j] += x * G[i * m + j];
                                   }
                               }
                             });
}

inline Tensor transpose(const Tensor& a) {
  detail::require_rank(a, 2, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  const auto v = a.values();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = v[i * c + j];
  return detail::make_result("transpose", Shape{c, r}, std::move(out), {a},
                             [r, c](detail::Node& self) {
                               double* ga = detail::parent_grad(self, 0);
                               if (!ga) return;
                               for (std::size_t i = 0; i < r; ++i)
                                 for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += self.grad[j * r + i];
                             });
}

/// Concatenation along `axis`; all other dimensions must agree.
inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw ShapeError("concat: axis out of range for " + shape_string(s0));
  Shape out_shape = s0;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t k = 0; ok && k < s.size(); ++k) ok = k == axis || s[k] == s0[k];
    if (!ok) {
      throw ShapeError("concat: " + shape_string(s) + " does not match " + shape_string(s0) +
                       " outside axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t k = 0; k < axis; ++k) outer *= s0[k];
  for (std::size_t k = axis + 1; k < s0.size(); ++k) inner *= s0[k];
  const std::size_t total = out_shape[axis];
  std::vector<double> out(shape_size(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t len = p.dim(axis);
    const auto v = p.values();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(v.begin() + o * len * inner, len * inner,
                  out.begin() + (o * total + off) * inner);
    off += len;
  }
  return detail::make_result(
      "concat", out_shape, std::move(out), parts,
      [outer, inner, total, offsets](detail::Node& self) {
        for (std::size_t p = 0; p < self.parents.size(); ++p) {
          double* gp = detail::parent_grad(self, p);
          if (!gp) continue;
          const std::size_t len = self.parents[p]->values.size() / (outer * inner);
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < len * inner; ++i)
              gp[o * len * inner + i] += self.grad[(o * total + offsets[p]) * inner + i];
        }
      });
}

/// Half-open range [begin, end) along `axis`.
inline Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = a.shape();
  if (axis >= s.size() || begin >= end || end > s[axis]) {
    throw ShapeError("slice: invalid range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") on axis " + std::to_string(axis) + " of " + shape_string(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t k = 0; k < axis; ++k) outer *= s[k];
  for (std::size_t k = axis + 1; k < s.size(); ++k) inner *= s[k];
  const std::size_t len = s[axis], take = end - begin;
  Shape out_shape = s;
  out_shape[axis] = take;
  std::vector<double> out(outer * take * inner);
  const auto v = a.values();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(v.begin() + (o * len + begin) * inner, take * inner,
                out.begin() + o * take * inner);
  return detail::make_result("slice", out_shape, std::move(out), {a},
                             [outer, inner, len, take, begin](detail::Node& self) {
                               double* ga = detail::parent_grad(self, 0);
                               if (!ga) return;
                               for (std::size_t o = 0; o < outer; ++o)
                                 for (std::size_t i = 0; i < take * inner; ++i)
                                   ga[(o * len + begin) * inner + i] += self.grad[o * take * inner + i];
                             });
}

/// Softmax over the last axis: exp(x_j) / sum_i exp(x_i).
inline Tensor softmax(const Tensor& a) {
  if (a.rank() == 0) throw ShapeError("softmax: rank-0 input");
  const std::size_t len = a.shape().back();
  const std::size_t rows = a.size() / len;
  const auto v = a.values();
  std::vector<double> out(v.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double mx = *std::max_element(v.begin() + r * len, v.begin() + (r + 1) * len);
    double z = 0.0;
    for (std::size_t j = 0; j < len; ++j) z += out[r * len + j] = std::exp(v[r * len + j] - mx);
    for (std::size_t j = 0; j < len; ++j) out[r * len + j] /= z;
  }
  return detail::make_result("softmax", a.shape(), std::move(out), {a},
                             [rows, len](detail::Node& self) {
                               double* ga = detail::parent_grad(self, 0);
                               if (!ga) return;
                               const auto& y = self.values;
                               const auto& g = self.grad;
                               for (std::size_t r = 0; r < rows; ++r) {
                                 double dot = 0.0;
                                 for (std::size_t j = 0; j < len; ++j) dot += g[r * len + j] * y[r * len + j];
                                 for (std::size_t j = 0; j < len; ++j)
                                   ga[r * len + j] += y[r * len + j] * (g[r * len + j] - dot);
                               }
                             });
}

}  // namespace microsim
