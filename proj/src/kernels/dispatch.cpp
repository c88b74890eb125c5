#include "geostrata/kernels.hpp"

#include <cstdlib>
#include <string>

namespace geostrata::kernels {

#if defined(GEOSTRATA_HAVE_AVX2)
extern const Table kAvx2Table;
#endif

std::string_view isa_name(Isa isa) {
  switch (isa) {
  case Isa::Scalar: return "scalar";
  case Isa::Avx2: return "avx2";
  }
  return "unknown";
}

const Table* avx2_table() {
#if defined(GEOSTRATA_HAVE_AVX2)
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &kAvx2Table : nullptr;
#else
  return nullptr;
#endif
}

const Table& active() {
  static const Table& chosen = [] () -> const Table& {
    const char* forced = std::getenv("GEOSTRATA_ISA");
    if (forced != nullptr && std::string(forced) == "scalar") return scalar_table();
    if (const Table* t = avx2_table()) return *t;
    return scalar_table();
  }();
  return chosen;
}

} // namespace geostrata::kernels
