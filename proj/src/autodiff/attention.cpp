#include <cmath>
#include <string>

#include "fpmoe/errors.hpp"
#include "fpmoe/kernels.hpp"
#include "fpmoe/ops.hpp"

namespace fpmoe {

Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t batch, std::size_t seq,
                        std::size_t n_q_heads, std::size_t n_kv_heads) {
  if (n_kv_heads == 0 || n_q_heads % n_kv_heads != 0) {
    throw ContractError("causal_attention: " + std::to_string(n_q_heads) + " query heads not divisible by " +
                        std::to_string(n_kv_heads) + " kv heads");
  }
  const std::size_t tokens = batch * seq;
  if (q.rows() != tokens || k.rows() != tokens || v.rows() != tokens || q.cols() % n_q_heads != 0) {
    throw DimensionError("causal_attention: q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) + ", v " +
                         shape_str(v.shape()) + " do not match batch " + std::to_string(batch) + " x seq " +
                         std::to_string(seq));
  }
  const std::size_t hd = q.cols() / n_q_heads;
  const std::size_t qdim = q.cols(), kvdim = n_kv_heads * hd;
  if (k.cols() != kvdim || v.cols() != kvdim) {
    throw DimensionError("causal_attention: kv width " + std::to_string(k.cols()) + " expected " + std::to_string(kvdim));
  }
  const std::size_t group = n_q_heads / n_kv_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  const double* Q = q.data().data();
  const double* K = k.data().data();
  const double* V = v.data().data();
  // Attention weights, lower-triangular rows packed per (batch, head): row t holds t+1 entries.
  const std::size_t tri = seq * (seq + 1) / 2;
  std::vector<double> probs(batch * n_q_heads * tri);
  std::vector<double> out(tokens * qdim, 0.0);

  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < n_q_heads; ++h) {
      const std::size_t kvh = h / group;
      double* P = probs.data() + (b * n_q_heads + h) * tri;
      for (std::size_t t = 0; t < seq; ++t) {
        double* row = P + t * (t + 1) / 2;
        const double* qt = Q + (b * seq + t) * qdim + h * hd;
        double mx = -INFINITY;
        for (std::size_t s = 0; s <= t; ++s) {
          row[s] = scale * kernels::dot(qt, K + (b * seq + s) * kvdim + kvh * hd, hd);
          mx = std::max(mx, row[s]);
        }
        double z = 0.0;
        for (std::size_t s = 0; s <= t; ++s) {
          row[s] = std::exp(row[s] - mx);
          z += row[s];
        }
        double* ot = out.data() + (b * seq + t) * qdim + h * hd;
        for (std::size_t s = 0; s <= t; ++s) {
          row[s] /= z;
          kernels::axpy(row[s], V + (b * seq + s) * kvdim + kvh * hd, ot, hd);
        }
      }
    }
  }

  return detail::make_result(
      q.shape(), std::move(out), "causal_attention", {q, k, v},
      [=, probs = std::move(probs)](detail::Node& self) {
        const double* Qd = self.inputs[0]->data.data();
        const double* Kd = self.inputs[1]->data.data();
        const double* Vd = self.inputs[2]->data.data();
        const double* dO = self.grad.data();
        // Any of q/k/v may be a constant; scratch buffers keep the loop uniform.
        std::vector<double> scratch_q, scratch_k, scratch_v;
        auto grad_or_scratch = [&](std::size_t i, std::vector<double>& scratch) -> double* {
          auto& in = *self.inputs[i];
          if (in.requires_grad) return in.ensure_grad().data();
          scratch.assign(in.data.size(), 0.0);
          return scratch.data();
        };
        double* dQ = grad_or_scratch(0, scratch_q);
        double* dK = grad_or_scratch(1, scratch_k);
        double* dV = grad_or_scratch(2, scratch_v);
        std::vector<double> dS(seq);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t h = 0; h < n_q_heads; ++h) {
            const std::size_t kvh = h / group;
            const double* P = probs.data() + (b * n_q_heads + h) * tri;
            for (std::size_t t = 0; t < seq; ++t) {
              const double* row = P + t * (t + 1) / 2;
              const double* dot_t = dO + (b * seq + t) * qdim + h * hd;
              double weighted = 0.0;
              for (std::size_t s = 0; s <= t; ++s) {
                const std::size_t kv_off = (b * seq + s) * kvdim + kvh * hd;
                kernels::axpy(row[s], dot_t, dV + kv_off, hd);
                dS[s] = kernels::dot(dot_t, Vd + kv_off, hd);
                weighted += row[s] * dS[s];
              }
              const double* qt = Qd + (b * seq + t) * qdim + h * hd;
              double* dqt = dQ + (b * seq + t) * qdim + h * hd;
              for (std::size_t s = 0; s <= t; ++s) {
                const double ds = scale * row[s] * (dS[s] - weighted);
                const std::size_t kv_off = (b * seq + s) * kvdim + kvh * hd;
                kernels::axpy(ds, Kd + kv_off, dqt, hd);
                kernels::axpy(ds, qt, dK + kv_off, hd);
              }
            }
          }
        }
      });
}

}  // namespace fpmoe
