#include "fpmoe/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fpmoe/errors.hpp"
#include "fpmoe/kernels.hpp"

namespace fpmoe {

namespace detail {

Tensor make_result(Shape shape, std::vector<double> data, const char* op, std::vector<Tensor> inputs,
                   std::function<void(Node&)> pullback) {
  if (check_numerics()) {
    for (double v : data) {
      if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
    }
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  bool any = false;
  if (grad_enabled()) {
    for (const auto& t : inputs) any = any || t.requires_grad();
  }
  if (any) {
    node->requires_grad = true;
    node->is_leaf = false;
    node->inputs.reserve(inputs.size());
    for (const auto& t : inputs) node->inputs.push_back(t.node_ptr());
    node->pullback = std::move(pullback);
  }
  return Tensor::wrap(std::move(node));
}

}  // namespace detail

namespace {

using detail::make_result;
using detail::Node;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// Gradient buffer of input i if it participates in the reverse pass.
std::vector<double>* input_grad(Node& self, std::size_t i) {
  auto& in = *self.inputs[i];
  return in.requires_grad ? &in.ensure_grad() : nullptr;
}

std::vector<double> transpose(std::span<const double> x, std::size_t rows, std::size_t cols) {
  std::vector<double> t(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = x[r * cols + c];
  }
  return t;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Shape with_last(const Shape& s, std::size_t last) {
  Shape out = s;
  out.back() = last;
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (b.ndim() != 2 || a.cols() != b.dim(0)) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.dim(1);
  std::vector<double> out(m * n);
  kernels::gemm(m, n, k, a.data().data(), k, b.data().data(), n, out.data(), n, false);
  return make_result(with_last(a.shape(), n), std::move(out), "matmul", {a, b}, [m, k, n](Node& self) {
    const auto& A = self.inputs[0]->data;
    const auto& B = self.inputs[1]->data;
    if (auto* ga = input_grad(self, 0)) {
      const auto bt = transpose(B, k, n);
      kernels::gemm(m, k, n, self.grad.data(), n, bt.data(), k, ga->data(), k, true);
    }
    if (auto* gb = input_grad(self, 1)) {
      const auto at = transpose(A, m, k);
      kernels::gemm(k, n, m, at.data(), m, self.grad.data(), n, gb->data(), n, true);
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result(a.shape(), std::move(out), "add", {a, b}, [](Node& self) {
    for (std::size_t j = 0; j < 2; ++j) {
      if (auto* g = input_grad(self, j)) kernels::axpy(1.0, self.grad.data(), g->data(), g->size());
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_result(a.shape(), std::move(out), "sub", {a, b}, [](Node& self) {
    if (auto* g = input_grad(self, 0)) kernels::axpy(1.0, self.grad.data(), g->data(), g->size());
    if (auto* g = input_grad(self, 1)) kernels::axpy(-1.0, self.grad.data(), g->data(), g->size());
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result(a.shape(), std::move(out), "mul", {a, b}, [](Node& self) {
    const auto& x = self.inputs[0]->data;
    const auto& y = self.inputs[1]->data;
    if (auto* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * y[i];
    }
    if (auto* g = input_grad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * x[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  return make_result(x.shape(), std::move(out), "scale", {x}, [factor](Node& self) {
    if (auto* g = input_grad(self, 0)) kernels::axpy(factor, self.grad.data(), g->data(), g->size());
  });
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  const std::size_t m = x.rows(), n = x.cols();
  if (bias.numel() != n) {
    throw DimensionError("add_row: bias " + shape_str(bias.shape()) + " does not match " + shape_str(x.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto bv = bias.data();
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += bv[c];
  }
  return make_result(x.shape(), std::move(out), "add_row", {x, bias}, [m, n](Node& self) {
    if (auto* g = input_grad(self, 0)) kernels::axpy(1.0, self.grad.data(), g->data(), g->size());
    if (auto* g = input_grad(self, 1)) {
      for (std::size_t r = 0; r < m; ++r) kernels::axpy(1.0, self.grad.data() + r * n, g->data(), n);
    }
  });
}

Tensor mul_col(const Tensor& x, const Tensor& c) {
  const std::size_t m = x.rows(), n = x.cols();
  if (c.numel() != m) {
    throw DimensionError("mul_col: column " + shape_str(c.shape()) + " does not match " + shape_str(x.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto cv = c.data();
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] *= cv[r];
  }
  return make_result(x.shape(), std::move(out), "mul_col", {x, c}, [m, n](Node& self) {
    const auto& X = self.inputs[0]->data;
    const auto& C = self.inputs[1]->data;
    if (auto* g = input_grad(self, 0)) {
      for (std::size_t r = 0; r < m; ++r) kernels::axpy(C[r], self.grad.data() + r * n, g->data() + r * n, n);
    }
    if (auto* g = input_grad(self, 1)) {
      for (std::size_t r = 0; r < m; ++r) (*g)[r] += kernels::dot(self.grad.data() + r * n, X.data() + r * n, n);
    }
  });
}

Tensor sum(const Tensor& x) {
  std::vector<double> out{kernels::sum(x.data().data(), x.numel())};
  return make_result({1}, std::move(out), "sum", {x}, [](Node& self) {
    if (auto* g = input_grad(self, 0)) {
      for (auto& v : *g) v += self.grad[0];
    }
  });
}

Tensor mean(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.numel());
  std::vector<double> out{kernels::sum(x.data().data(), x.numel()) * inv};
  return make_result({1}, std::move(out), "mean", {x}, [inv](Node& self) {
    if (auto* g = input_grad(self, 0)) {
      for (auto& v : *g) v += self.grad[0] * inv;
    }
  });
}

Tensor column_mean(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  const double inv = 1.0 / static_cast<double>(m);
  std::vector<double> out(n, 0.0);
  const auto xv = x.data();
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[c] += xv[r * n + c];
  }
  for (auto& v : out) v *= inv;
  return make_result({1, n}, std::move(out), "column_mean", {x}, [m, n, inv](Node& self) {
    if (auto* g = input_grad(self, 0)) {
      for (std::size_t r = 0; r < m; ++r) kernels::axpy(inv, self.grad.data(), g->data() + r * n, n);
    }
  });
}

Tensor softmax(const Tensor& x, int axis) {
  const auto& shape = x.shape();
  const int nd = static_cast<int>(shape.size());
  const int ax = axis < 0 ? axis + nd : axis;
  if (ax < 0 || ax >= nd) throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " + shape_str(shape));
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= shape[i];
  for (int i = ax + 1; i < nd; ++i) inner *= shape[i];
  const std::size_t len = shape[ax];

  const auto xv = x.data();
  for (double v : xv) {
    if (!std::isfinite(v)) throw NumericError("softmax: non-finite input");
  }
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, xv[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const double e = std::exp(xv[base + j * inner] - mx);
        out[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= z;
    }
  }
  return make_result(shape, std::move(out), "softmax", {x}, [outer, inner, len](Node& self) {
    auto* g = input_grad(self, 0);
    if (!g) return;
    const auto& y = self.data;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = o * len * inner + i;
        double s = 0.0;
        for (std::size_t j = 0; j < len; ++j) s += y[base + j * inner] * self.grad[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t k = base + j * inner;
          (*g)[k] += y[k] * (self.grad[k] - s);
        }
      }
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.numel());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(xv[i]);
  return make_result(x.shape(), std::move(out), "sigmoid", {x}, [](Node& self) {
    if (auto* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) {
        const double y = self.data[i];
        (*g)[i] += self.grad[i] * y * (1.0 - y);
      }
    }
  });
}

Tensor silu(const Tensor& x) {
  std::vector<double> out(x.numel());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * stable_sigmoid(xv[i]);
  return make_result(x.shape(), std::move(out), "silu", {x}, [](Node& self) {
    if (auto* g = input_grad(self, 0)) {
      const auto& X = self.inputs[0]->data;
      for (std::size_t i = 0; i < g->size(); ++i) {
        const double s = stable_sigmoid(X[i]);
        (*g)[i] += self.grad[i] * (s + X[i] * s * (1.0 - s));
      }
    }
  });
}

Tensor rms_norm(const Tensor& x, const Tensor& weight, double eps) {
  if (!(eps > 0.0)) throw ContractError("rms_norm: eps must be positive");
  const std::size_t m = x.rows(), n = x.cols();
  if (weight.numel() != n) {
    throw DimensionError("rms_norm: weight " + shape_str(weight.shape()) + " does not match " + shape_str(x.shape()));
  }
  const auto xv = x.data(), wv = weight.data();
  std::vector<double> out(m * n), inv(m);
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = xv.data() + r * n;
    const double ms = kernels::dot(row, row, n) / static_cast<double>(n);
    inv[r] = 1.0 / std::sqrt(ms + eps);
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = row[c] * inv[r] * wv[c];
  }
  return make_result(x.shape(), std::move(out), "rms_norm", {x, weight}, [m, n, inv = std::move(inv)](Node& self) {
    const auto& X = self.inputs[0]->data;
    const auto& W = self.inputs[1]->data;
    auto* gx = input_grad(self, 0);
    auto* gw = input_grad(self, 1);
    for (std::size_t r = 0; r < m; ++r) {
      const double* row = X.data() + r * n;
      const double* dy = self.grad.data() + r * n;
      if (gw) {
        for (std::size_t c = 0; c < n; ++c) (*gw)[c] += dy[c] * row[c] * inv[r];
      }
      if (gx) {
        double s = 0.0;
        for (std::size_t c = 0; c < n; ++c) s += dy[c] * W[c] * row[c];
        const double k = inv[r] * inv[r] * inv[r] * s / static_cast<double>(n);
        for (std::size_t c = 0; c < n; ++c) (*gx)[r * n + c] += inv[r] * dy[c] * W[c] - k * row[c];
      }
    }
  });
}

Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids) {
  if (table.ndim() != 2) throw DimensionError("embedding: table must be 2-D, got " + shape_str(table.shape()));
  if (ids.empty()) throw ContractError("embedding: empty id list");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  std::vector<std::size_t> rows(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw IndexError("embedding: id " + std::to_string(ids[i]) + " outside table of " + std::to_string(vocab) + " rows");
    }
    rows[i] = static_cast<std::size_t>(ids[i]);
  }
  std::vector<double> out(ids.size() * d);
  const auto tv = table.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(tv.data() + rows[i] * d, d, out.data() + i * d);
  }
  return make_result({ids.size(), d}, std::move(out), "embedding", {table}, [d, rows = std::move(rows)](Node& self) {
    if (auto* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < rows.size(); ++i) kernels::axpy(1.0, self.grad.data() + i * d, g->data() + rows[i] * d, d);
    }
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets) {
  const std::size_t m = logits.rows(), v = logits.cols();
  if (targets.size() != m) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_str(logits.shape()));
  }
  const auto lv = logits.data();
  std::vector<double> probs(m * v);
  double total = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    const auto t = targets[r];
    if (t < 0 || static_cast<std::size_t>(t) >= v) {
      throw IndexError("cross_entropy: target " + std::to_string(t) + " outside vocabulary of " + std::to_string(v));
    }
    const double* row = lv.data() + r * v;
    const double mx = *std::max_element(row, row + v);
    double z = 0.0;
    for (std::size_t c = 0; c < v; ++c) {
      probs[r * v + c] = std::exp(row[c] - mx);
      z += probs[r * v + c];
    }
    for (std::size_t c = 0; c < v; ++c) probs[r * v + c] /= z;
    total += (std::log(z) + mx) - row[t];
  }
  std::vector<int> tg(targets.begin(), targets.end());
  return make_result({1}, {total / static_cast<double>(m)}, "cross_entropy", {logits},
                     [m, v, probs = std::move(probs), tg = std::move(tg)](Node& self) {
                       auto* g = input_grad(self, 0);
                       if (!g) return;
                       const double k = self.grad[0] / static_cast<double>(m);
                       for (std::size_t r = 0; r < m; ++r) {
                         for (std::size_t c = 0; c < v; ++c) (*g)[r * v + c] += k * probs[r * v + c];
                         (*g)[r * v + static_cast<std::size_t>(tg[r])] -= k;
                       }
                     });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> idx) {
  const std::size_t m = x.rows(), n = x.cols();
  if (idx.empty()) throw ContractError("gather_rows: empty index list");
  std::vector<double> out(idx.size() * n);
  const auto xv = x.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= m) throw IndexError("gather_rows: row " + std::to_string(idx[i]) + " out of " + std::to_string(m));
    std::copy_n(xv.data() + idx[i] * n, n, out.data() + i * n);
  }
  std::vector<std::size_t> rows(idx.begin(), idx.end());
  return make_result({idx.size(), n}, std::move(out), "gather_rows", {x}, [n, rows = std::move(rows)](Node& self) {
    if (auto* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < rows.size(); ++i) kernels::axpy(1.0, self.grad.data() + i * n, g->data() + rows[i] * n, n);
    }
  });
}

Tensor index_add_rows(const Tensor& base, std::span<const std::size_t> idx, const Tensor& src) {
  const std::size_t m = base.rows(), n = base.cols();
  if (src.cols() != n || src.rows() != idx.size()) {
    throw DimensionError("index_add_rows: source " + shape_str(src.shape()) + " with " + std::to_string(idx.size()) +
                         " indices does not fit base " + shape_str(base.shape()));
  }
  std::vector<double> out(base.data().begin(), base.data().end());
  const auto sv = src.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= m) throw IndexError("index_add_rows: row " + std::to_string(idx[i]) + " out of " + std::to_string(m));
    kernels::axpy(1.0, sv.data() + i * n, out.data() + idx[i] * n, n);
  }
  std::vector<std::size_t> rows(idx.begin(), idx.end());
  return make_result(base.shape(), std::move(out), "index_add_rows", {base, src},
                     [n, rows = std::move(rows)](Node& self) {
                       if (auto* g = input_grad(self, 0)) kernels::axpy(1.0, self.grad.data(), g->data(), g->size());
                       if (auto* g = input_grad(self, 1)) {
                         for (std::size_t i = 0; i < rows.size(); ++i) {
                           kernels::axpy(1.0, self.grad.data() + rows[i] * n, g->data() + i * n, n);
                         }
                       }
                     });
}

Tensor gather_column(const Tensor& x, std::span<const std::size_t> rows, std::size_t col) {
  const std::size_t m = x.rows(), n = x.cols();
  if (col >= n) throw IndexError("gather_column: column " + std::to_string(col) + " out of " + std::to_string(n));
  if (rows.empty()) throw ContractError("gather_column: empty row list");
  std::vector<double> out(rows.size());
  const auto xv = x.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m) throw IndexError("gather_column: row " + std::to_string(rows[i]) + " out of " + std::to_string(m));
    out[i] = xv[rows[i] * n + col];
  }
  std::vector<std::size_t> picked(rows.begin(), rows.end());
  return make_result({rows.size(), 1}, std::move(out), "gather_column", {x},
                     [n, col, picked = std::move(picked)](Node& self) {
                       if (auto* g = input_grad(self, 0)) {
                         for (std::size_t i = 0; i < picked.size(); ++i) (*g)[picked[i] * n + col] += self.grad[i];
                       }
                     });
}

}  // namespace fpmoe
