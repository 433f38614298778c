#pragma once
// Dense arithmetic inner loops used by the autodiff primitives.
//
// Every kernel has a portable scalar reference implementation and, on x86-64
// hosts with AVX2+FMA, a vectorized variant. The variant is picked once at
// first use (CPU feature probe, overridable with FPMOE_KERNELS=scalar|avx2)
// and can be switched explicitly for equivalence testing.
//
// All matrices are row-major with explicit leading dimensions.

#include <cstddef>
#include <string_view>

namespace fpmoe::kernels {

enum class Backend { Scalar, Avx2 };

struct KernelTable {
  // C[m,n] (+)= A[m,k] * B[k,n]
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
               const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate);
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
};

const KernelTable& scalar_table();
// nullptr when the build or the host lacks AVX2.
const KernelTable* avx2_table();

bool backend_available(Backend b);
// Throws ContractError when the backend is unavailable.
void set_backend(Backend b);
Backend active_backend();
std::string_view backend_name(Backend b);

const KernelTable& active();

// Convenience wrappers over the active table.
inline void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                 const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  active().gemm(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
inline double dot(const double* x, const double* y, std::size_t n) { return active().dot(x, y, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) { active().axpy(alpha, x, y, n); }
inline double sum(const double* x, std::size_t n) { return active().sum(x, n); }

// RAII switch used by tests.
class ScopedBackend {
 public:
  explicit ScopedBackend(Backend b) : previous_(active_backend()) { set_backend(b); }
  ~ScopedBackend() { set_backend(previous_); }
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend previous_;
};

}  // namespace fpmoe::kernels
