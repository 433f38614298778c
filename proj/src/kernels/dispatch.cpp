#include <atomic>
#include <cstdlib>
#include <string>

#include "fpmoe/errors.hpp"
#include "fpmoe/kernels.hpp"

namespace fpmoe::kernels {

#if FPMOE_WITH_AVX2
const KernelTable& avx2_kernels();
#endif

namespace {

bool host_has_avx2() {
#if FPMOE_WITH_AVX2 && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend initial_backend() {
  const bool avx2 = host_has_avx2();
  if (const char* env = std::getenv("FPMOE_KERNELS")) {
    const std::string v(env);
    if (v == "scalar") return Backend::Scalar;
    if (v == "avx2" && avx2) return Backend::Avx2;
  }
  return avx2 ? Backend::Avx2 : Backend::Scalar;
}

std::atomic<Backend>& backend_slot() {
  static std::atomic<Backend> slot{initial_backend()};
  return slot;
}

}  // namespace

const KernelTable* avx2_table() {
#if FPMOE_WITH_AVX2
  static const KernelTable* table = host_has_avx2() ? &avx2_kernels() : nullptr;
  return table;
#else
  return nullptr;
#endif
}

bool backend_available(Backend b) { return b == Backend::Scalar || avx2_table() != nullptr; }

void set_backend(Backend b) {
  if (!backend_available(b)) {
    throw ContractError("kernel backend '" + std::string(backend_name(b)) + "' is not available on this host");
  }
  backend_slot().store(b);
}

Backend active_backend() { return backend_slot().load(); }

std::string_view backend_name(Backend b) { return b == Backend::Avx2 ? "avx2" : "scalar"; }

const KernelTable& active() {
  if (active_backend() == Backend::Avx2) return *avx2_table();
  return scalar_table();
}

}  // namespace fpmoe::kernels
