#include "geostrata/kernels.hpp"

namespace geostrata::kernels {
namespace {

double sum_squares(const double* v, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += v[i] * v[i];
  return s;
}

double csr_cross(const std::size_t* row_ptr, const std::int32_t* cols, const double* vals,
                 const double* z, std::size_t rows) {
  double total = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    double lag = 0.0;
    for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) lag += vals[k] * z[cols[k]];
    total += z[i] * lag;
  }
  return total;
}

std::uint64_t count_mismatched_pairs(const std::int32_t* a, const std::int32_t* b,
                                     std::size_t n) {
  std::uint64_t c = 0;
  for (std::size_t t = 0; t < n; ++t) c += (a[t] >= 0 && b[t] >= 0 && a[t] != b[t]);
  return c;
}

std::uint64_t count_class_boundary_pairs(const std::int32_t* a, const std::int32_t* b,
                                         std::size_t n, std::int32_t k) {
  std::uint64_t c = 0;
  for (std::size_t t = 0; t < n; ++t)
    c += (a[t] >= 0 && b[t] >= 0 && ((a[t] == k) != (b[t] == k)));
  return c;
}

std::uint64_t count_equal(const std::int32_t* a, std::size_t n, std::int32_t k) {
  std::uint64_t c = 0;
  for (std::size_t t = 0; t < n; ++t) c += (a[t] == k);
  return c;
}

std::uint64_t count_present(const std::int32_t* a, std::size_t n) {
  std::uint64_t c = 0;
  for (std::size_t t = 0; t < n; ++t) c += (a[t] >= 0);
  return c;
}

constexpr Table kScalar{Isa::Scalar,        sum_squares, csr_cross, count_mismatched_pairs,
                        count_class_boundary_pairs, count_equal, count_present};

} // namespace

const Table& scalar_table() { return kScalar; }

} // namespace geostrata::kernels
