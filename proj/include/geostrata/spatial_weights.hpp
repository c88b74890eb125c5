#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geostrata/grid_io.hpp"

namespace geostrata {

enum class ContiguityRule { Edge, EdgeOrCorner };
enum class Standardization { None, Row };

ContiguityRule parse_contiguity_rule(const std::string& s);
std::string to_string(ContiguityRule rule);
std::string to_string(Standardization s);

struct WeightEntry {
  std::int32_t i = 0;
  std::int32_t j = 0;
  double w = 0.0;
  friend bool operator==(const WeightEntry&, const WeightEntry&) = default;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Sparse spatial weights in CSR form. The diagonal is always empty; the
/// Gi* statistic adds its own self-weight.
class WeightMatrix {
public:
  WeightMatrix() = default;
  /// Entries may arrive in any order; duplicates, diagonal entries, negative
  /// or non-finite weights, and out-of-range indices are rejected.
  WeightMatrix(std::size_t n, std::vector<WeightEntry> entries,
               Standardization standardization = Standardization::None);

  std::size_t n() const { return n_; }
  Standardization standardization() const { return standardization_; }
  std::size_t nnz() const { return cols_.size(); }

  std::span<const std::size_t> row_ptr() const { return row_ptr_; }
  std::span<const std::int32_t> cols() const { return cols_; }
  std::span<const double> vals() const { return vals_; }

  std::span<const std::int32_t> neighbors(std::size_t i) const {
    return std::span(cols_).subspan(row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]);
  }
  std::span<const double> weights(std::size_t i) const {
    return std::span(vals_).subspan(row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]);
  }

  /// Row-major list of (i, j, w).
  std::vector<WeightEntry> entries() const;

  /// S0, the sum of all weights.
  double s0() const;
  double row_sum(std::size_t i) const;
  double weight(std::size_t i, std::size_t j) const;
  bool is_symmetric(double tol = 0.0) const;

private:
  std::size_t n_ = 0;
  Standardization standardization_ = Standardization::None;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::int32_t> cols_;
  std::vector<double> vals_;
};

/// Binary weights: w_ij = 1 iff a cell of i touches a cell of j
/// (4-adjacency for Edge, 8-adjacency for EdgeOrCorner).
WeightMatrix contiguity_weights(const RegionSet& regions, ContiguityRule rule);

/// w_ij = d(i, j)^-gamma for every pair within `cutoff` (all pairs when unset).
WeightMatrix inverse_distance_weights(std::span<const Point2> centroids, double gamma,
                                      std::optional<double> cutoff = std::nullopt);

/// Keeps the sparsity pattern of `pattern` and replaces each weight by
/// d(i, j)^-gamma: neighbours by contiguity, weighted by distance decay.
WeightMatrix distance_decay(const WeightMatrix& pattern, std::span<const Point2> centroids,
                            double gamma);

WeightMatrix row_standardize(const WeightMatrix& w);

/// Mean of the cell centres of each region, in (col + 0.5, row + 0.5) index
/// space.
std::vector<Point2> region_centroids(const RegionSet& regions);

/// "#n=<n>,standardization=<none|row>" then one "i,j,w" line per entry in
/// row-major order.
void write_weights_csv(const WeightMatrix& w, std::ostream& out);
WeightMatrix read_weights_csv(std::istream& in);

} // namespace geostrata
