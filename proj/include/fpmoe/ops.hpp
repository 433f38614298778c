#pragma once
// Differentiable primitives. Each records a pullback when any input requires
// grad and grad recording is enabled. Two-dimensional operands are read as
// [rows, cols] with rows = product of leading dimensions.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fpmoe/tensor.hpp"

namespace fpmoe {

// a[m,k] x b[k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
// x[m,n] + bias[n] broadcast over rows.
Tensor add_row(const Tensor& x, const Tensor& bias);
// x[m,n] * c[m,1] broadcast over columns.
Tensor mul_col(const Tensor& x, const Tensor& c);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Mean over rows: [m,n] -> [1,n].
Tensor column_mean(const Tensor& x);

// Max-subtracted softmax along `axis` (negative counts from the back).
// NaN input raises NumericError.
Tensor softmax(const Tensor& x, int axis = -1);
Tensor sigmoid(const Tensor& x);
Tensor silu(const Tensor& x);
// y = x / sqrt(mean(x^2) + eps) * weight, per row.
Tensor rms_norm(const Tensor& x, const Tensor& weight, double eps);

// table[V,d], ids -> [len(ids), d]. Ids >= V raise IndexError.
Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids);
// Mean next-token negative log-likelihood of logits[m,V] against targets[m].
Tensor cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets);

// Rows of x picked by idx -> [len(idx), n].
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> idx);
// Copy of base with src rows added at rows idx (duplicates accumulate).
Tensor index_add_rows(const Tensor& base, std::span<const std::size_t> idx, const Tensor& src);
// x[rows[i], col] for each i -> [len(rows), 1].
Tensor gather_column(const Tensor& x, std::span<const std::size_t> rows, std::size_t col);

// Causal grouped-query attention over packed sequences.
// q: [batch*seq, n_q_heads*head_dim], k/v: [batch*seq, n_kv_heads*head_dim].
// Query head h reads key/value head h / (n_q_heads / n_kv_heads).
Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t batch, std::size_t seq,
                        std::size_t n_q_heads, std::size_t n_kv_heads);

namespace detail {
// Shared plumbing for primitives: builds the output node and wires history.
Tensor make_result(Shape shape, std::vector<double> data, const char* op, std::vector<Tensor> inputs,
                   std::function<void(Node&)> pullback);
}  // namespace detail

}  // namespace fpmoe
