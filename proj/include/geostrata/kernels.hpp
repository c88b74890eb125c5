#pragma once

// Data-parallel inner loops. Every kernel has a scalar reference version and,
// where the build and the CPU allow it, a vector version; the vector version
// is selected at first use. Integer kernels must agree exactly across
// variants. Floating kernels may differ by summation order only.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace geostrata::kernels {

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa);

/// Sentinel for cells that do not participate (outside window or nodata).
/// Any negative code is treated as absent.
inline constexpr std::int32_t kAbsent = -1;

struct Table {
  Isa isa;
  double (*sum_squares)(const double* v, std::size_t n);
  /// sum_i z[i] * sum_{k in row i} vals[k] * z[cols[k]] over a CSR matrix.
  double (*csr_cross)(const std::size_t* row_ptr, const std::int32_t* cols, const double* vals,
                      const double* z, std::size_t rows);
  /// #{t : a[t] >= 0, b[t] >= 0, a[t] != b[t]}
  std::uint64_t (*count_mismatched_pairs)(const std::int32_t* a, const std::int32_t* b,
                                          std::size_t n);
  /// #{t : a[t] >= 0, b[t] >= 0, (a[t] == k) != (b[t] == k)}
  std::uint64_t (*count_class_boundary_pairs)(const std::int32_t* a, const std::int32_t* b,
                                              std::size_t n, std::int32_t k);
  /// #{t : a[t] == k}
  std::uint64_t (*count_equal)(const std::int32_t* a, std::size_t n, std::int32_t k);
  /// #{t : a[t] >= 0}
  std::uint64_t (*count_present)(const std::int32_t* a, std::size_t n);
};

const Table& scalar_table();

/// Vector table if compiled in and supported by this CPU, else nullptr.
const Table* avx2_table();

/// Table used by the library. AVX2 when available unless the environment
/// variable GEOSTRATA_ISA=scalar forces the reference kernels.
const Table& active();

inline double sum_squares(std::span<const double> v) {
  return active().sum_squares(v.data(), v.size());
}

inline std::uint64_t count_mismatched_pairs(std::span<const std::int32_t> a,
                                            std::span<const std::int32_t> b) {
  return active().count_mismatched_pairs(a.data(), b.data(), a.size());
}

inline std::uint64_t count_class_boundary_pairs(std::span<const std::int32_t> a,
                                                std::span<const std::int32_t> b,
                                                std::int32_t k) {
  return active().count_class_boundary_pairs(a.data(), b.data(), a.size(), k);
}

inline std::uint64_t count_equal(std::span<const std::int32_t> a, std::int32_t k) {
  return active().count_equal(a.data(), a.size(), k);
}

inline std::uint64_t count_present(std::span<const std::int32_t> a) {
  return active().count_present(a.data(), a.size());
}

} // namespace geostrata::kernels
