// Compiled with -mavx2 -mfma. Nothing here may run before the dispatcher
// has confirmed CPU support.

#include "geostrata/kernels.hpp"

#include <immintrin.h>

namespace geostrata::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

inline std::uint64_t popcount8(__m256i mask) {
  return static_cast<std::uint64_t>(
      __builtin_popcount(static_cast<unsigned>(_mm256_movemask_ps(_mm256_castsi256_ps(mask)))));
}

double sum_squares(const double* v, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256d a = _mm256_loadu_pd(v + i);
    const __m256d b = _mm256_loadu_pd(v + i + 4);
    acc0 = _mm256_fmadd_pd(a, a, acc0);
    acc1 = _mm256_fmadd_pd(b, b, acc1);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += v[i] * v[i];
  return s;
}

double csr_cross(const std::size_t* row_ptr, const std::int32_t* cols, const double* vals,
                 const double* z, std::size_t rows) {
  __m256d acc = _mm256_setzero_pd();
  double tail = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    const __m256d zi = _mm256_set1_pd(z[i]);
    std::size_t k = row_ptr[i];
    const std::size_t end = row_ptr[i + 1];
    for (; k + 4 <= end; k += 4) {
      const __m128i idx = _mm_loadu_si128(reinterpret_cast<const __m128i*>(cols + k));
      const __m256d zj = _mm256_i32gather_pd(z, idx, 8);
      const __m256d w = _mm256_loadu_pd(vals + k);
      acc = _mm256_fmadd_pd(_mm256_mul_pd(w, zj), zi, acc);
    }
    double lag = 0.0;
    for (; k < end; ++k) lag += vals[k] * z[cols[k]];
    tail += z[i] * lag;
  }
  return hsum(acc) + tail;
}

std::uint64_t count_mismatched_pairs(const std::int32_t* a, const std::int32_t* b,
                                     std::size_t n) {
  const __m256i minus_one = _mm256_set1_epi32(-1);
  std::uint64_t c = 0;
  std::size_t t = 0;
  for (; t + 8 <= n; t += 8) {
    const __m256i va = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a + t));
    const __m256i vb = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(b + t));
    const __m256i valid =
        _mm256_and_si256(_mm256_cmpgt_epi32(va, minus_one), _mm256_cmpgt_epi32(vb, minus_one));
    const __m256i differ = _mm256_andnot_si256(_mm256_cmpeq_epi32(va, vb), valid);
    c += popcount8(differ);
  }
  for (; t < n; ++t) c += (a[t] >= 0 && b[t] >= 0 && a[t] != b[t]);
  return c;
}

std::uint64_t count_class_boundary_pairs(const std::int32_t* a, const std::int32_t* b,
                                         std::size_t n, std::int32_t k) {
  const __m256i minus_one = _mm256_set1_epi32(-1);
  const __m256i vk = _mm256_set1_epi32(k);
  std::uint64_t c = 0;
  std::size_t t = 0;
  for (; t + 8 <= n; t += 8) {
    const __m256i va = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a + t));
    const __m256i vb = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(b + t));
    const __m256i valid =
        _mm256_and_si256(_mm256_cmpgt_epi32(va, minus_one), _mm256_cmpgt_epi32(vb, minus_one));
    const __m256i one_side =
        _mm256_xor_si256(_mm256_cmpeq_epi32(va, vk), _mm256_cmpeq_epi32(vb, vk));
    c += popcount8(_mm256_and_si256(valid, one_side));
  }
  for (; t < n; ++t) c += (a[t] >= 0 && b[t] >= 0 && ((a[t] == k) != (b[t] == k)));
  return c;
}

std::uint64_t count_equal(const std::int32_t* a, std::size_t n, std::int32_t k) {
  const __m256i vk = _mm256_set1_epi32(k);
  std::uint64_t c = 0;
  std::size_t t = 0;
  for (; t + 8 <= n; t += 8) {
    const __m256i va = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a + t));
    c += popcount8(_mm256_cmpeq_epi32(va, vk));
  }
  for (; t < n; ++t) c += (a[t] == k);
  return c;
}

std::uint64_t count_present(const std::int32_t* a, std::size_t n) {
  const __m256i minus_one = _mm256_set1_epi32(-1);
  std::uint64_t c = 0;
  std::size_t t = 0;
  for (; t + 8 <= n; t += 8) {
    const __m256i va = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a + t));
    c += popcount8(_mm256_cmpgt_epi32(va, minus_one));
  }
  for (; t < n; ++t) c += (a[t] >= 0);
  return c;
}

} // namespace

extern const Table kAvx2Table;
const Table kAvx2Table{Isa::Avx2,        sum_squares, csr_cross, count_mismatched_pairs,
                       count_class_boundary_pairs, count_equal, count_present};

} // namespace geostrata::kernels
