#include <doctest.h>

#include <cmath>
#include <vector>

#include "geostrata/kernels.hpp"
#include "geostrata/rng.hpp"

using namespace geostrata;
using kernels::Table;

namespace {

std::vector<std::int32_t> codes(Stream& rng, std::size_t n, int classes) {
  std::vector<std::int32_t> v(n);
  for (auto& c : v)
    c = rng.uniform01() < 0.1 ? kernels::kAbsent - static_cast<std::int32_t>(rng.uniform_index(3))
                              : static_cast<std::int32_t>(rng.uniform_index(static_cast<std::uint64_t>(classes)));
  return v;
}

void compare(const Table& a, const Table& b) {
  Stream rng(17);
  // Lengths straddle the vector width and its multiples.
  for (std::size_t n = 0; n < 80; ++n) {
    for (int rep = 0; rep < 5; ++rep) {
      const auto x = codes(rng, n, 1 + rep);
      const auto y = codes(rng, n, 1 + rep);
      CHECK(a.count_mismatched_pairs(x.data(), y.data(), n) == b.count_mismatched_pairs(x.data(), y.data(), n));
      CHECK(a.count_present(x.data(), n) == b.count_present(x.data(), n));
      for (std::int32_t k = -1; k <= rep; ++k) {
        CHECK(a.count_class_boundary_pairs(x.data(), y.data(), n, k) ==
              b.count_class_boundary_pairs(x.data(), y.data(), n, k));
        CHECK(a.count_equal(x.data(), n, k) == b.count_equal(x.data(), n, k));
      }

      std::vector<double> v(n);
      for (auto& d : v) d = rng.uniform01() * 2.0 - 1.0;
      const double sa = a.sum_squares(v.data(), n);
      const double sb = b.sum_squares(v.data(), n);
      CHECK(std::abs(sa - sb) <= 1e-12 * std::max(1.0, std::abs(sa)));
    }
  }

  for (int t = 0; t < 100; ++t) {
    const std::size_t rows = 1 + rng.uniform_index(60);
    std::vector<std::size_t> row_ptr{0};
    std::vector<std::int32_t> cols;
    std::vector<double> vals;
    for (std::size_t i = 0; i < rows; ++i) {
      const std::size_t deg = rng.uniform_index(12);
      for (std::size_t k = 0; k < deg; ++k) {
        cols.push_back(static_cast<std::int32_t>(rng.uniform_index(rows)));
        vals.push_back(rng.uniform01());
      }
      row_ptr.push_back(cols.size());
    }
    std::vector<double> z(rows);
    for (auto& d : z) d = rng.uniform01() - 0.5;
    const double ca = a.csr_cross(row_ptr.data(), cols.data(), vals.data(), z.data(), rows);
    const double cb = b.csr_cross(row_ptr.data(), cols.data(), vals.data(), z.data(), rows);
    CHECK(std::abs(ca - cb) <= 1e-12 * std::max(1.0, std::abs(ca)));
  }
}

} // namespace

TEST_CASE("kernels: scalar reference values") {
  const Table& s = kernels::scalar_table();
  const std::int32_t a[] = {1, 2, -1, 3, 3};
  const std::int32_t b[] = {1, 3, 2, -1, 4};
  CHECK(s.count_mismatched_pairs(a, b, 5) == 2);
  CHECK(s.count_class_boundary_pairs(a, b, 5, 3) == 2);
  CHECK(s.count_class_boundary_pairs(a, b, 5, 1) == 0);
  CHECK(s.count_equal(a, 5, 3) == 2);
  CHECK(s.count_present(a, 5) == 4);
  const double v[] = {1.0, -2.0, 0.5};
  CHECK(s.sum_squares(v, 3) == 5.25);
  const std::size_t row_ptr[] = {0, 1, 2};
  const std::int32_t cols[] = {1, 0};
  const double vals[] = {1.0, 1.0};
  const double z[] = {2.0, -3.0};
  CHECK(s.csr_cross(row_ptr, cols, vals, z, 2) == -12.0);
}

TEST_CASE("kernels: vector variant matches the scalar reference") {
  const Table* v = kernels::avx2_table();
  if (v == nullptr) {
    MESSAGE("AVX2 not available on this machine; nothing to compare");
    return;
  }
  CHECK(v->isa == kernels::Isa::Avx2);
  compare(kernels::scalar_table(), *v);
}

TEST_CASE("kernels: active table is one of the known variants") {
  const Table& t = kernels::active();
  CHECK((&t == &kernels::scalar_table() || &t == kernels::avx2_table()));
  CHECK(!kernels::isa_name(t.isa).empty());
}
