#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "geostrata/error.hpp"
#include "geostrata/grid_io.hpp"

namespace geostrata {

// ---------------------------------------------------------------------------
// Landscape shape index

/// Class codes over the bounding box of a pixel window; cells outside the
/// window or nodata hold kernels::kAbsent.
class ClassWindow {
public:
  ClassWindow(std::int32_t rows, std::int32_t cols, std::vector<std::int32_t> labels);
  ClassWindow(const RasterGrid& grid, std::span<const CellIndex> cells);

  std::int32_t rows() const { return rows_; }
  std::int32_t cols() const { return cols_; }
  std::span<const std::int32_t> row(std::int32_t r) const {
    return std::span(labels_).subspan(static_cast<std::size_t>(r) * cols_, cols_);
  }
  std::span<const std::int32_t> labels() const { return labels_; }

private:
  std::int32_t rows_;
  std::int32_t cols_;
  std::vector<std::int32_t> labels_;
};

struct LsiTarget {
  bool all_classes = true;
  std::int32_t class_code = 0;

  static LsiTarget all() { return {true, 0}; }
  static LsiTarget of_class(std::int32_t k) { return {false, k}; }
};

struct LsiValue {
  double value = 0.0;
  std::uint64_t pixel_count = 0;  // q
  std::uint64_t boundary_sum = 0; // sum of b_p
};

/// LSI = (1/4) * sum_p b_p / sqrt(q). Neighbours are 4-adjacent and must lie
/// inside the window. In class mode p ranges over class-k pixels, b_p counts
/// neighbours of another class and q is the class-k pixel count.
/// Throws if the window has no counted pixel.
LsiValue lsi(const ClassWindow& window, LsiTarget target);

/// Region-level LSI over all classes.
LsiValue rlsi(const RasterGrid& landcover, const Region& region);
/// Class-level LSI of class k within a region.
LsiValue clsi(const RasterGrid& landcover, const Region& region, std::int32_t k);
/// Class-level LSI of class k within one geographical unit.
LsiValue ulsi(const RasterGrid& landcover, const Unit& unit, std::int32_t k);

// ---------------------------------------------------------------------------
// Allocation

struct RoundingNote {
  std::string scope; // "regions" or the region id for class-level rounding
  std::string key;   // region id or class code
  double share = 0.0;
  std::int64_t floor = 0;
  double remainder = 0.0;
  bool bumped = false;
  bool tie_broken = false; // remainder tied with a competitor at the cut
  std::string note;        // e.g. clamping applied after rounding
};

struct Apportionment {
  std::vector<double> shares;
  std::vector<std::int64_t> counts;
  std::vector<RoundingNote> trace;
};

/// Real-valued shares total * w_i / sum(w), evaluated so that raising one
/// weight never lowers its own share.
std::vector<double> proportional_shares(std::span<const double> weights, std::int64_t total);

/// Largest-remainder rounding of proportional shares. `tie_order[i]` ranks
/// entries for tie-breaking (lower wins); counts sum to `total` exactly.
Apportionment largest_remainder(std::span<const double> weights, std::int64_t total,
                                std::span<const std::size_t> tie_order, const std::string& scope,
                                std::span<const std::string> keys);

/// N_i proportional to rLSI_i * A_i; ties broken by ascending region id.
Apportionment allocate_regions(std::span<const std::string> region_ids,
                               std::span<const double> rlsi_values, std::span<const double> areas,
                               std::int64_t total);

/// cN_{i,k} proportional to cLSI_{i,k} * W_{i,k}; ties broken by ascending
/// class code.
Apportionment allocate_classes(const std::string& region_id,
                               std::span<const std::int32_t> class_codes,
                               std::span<const double> clsi_values,
                               std::span<const double> proportions, std::int64_t region_total);

// ---------------------------------------------------------------------------
// Placement

struct SamplePoint {
  std::string region_id;
  std::int32_t class_code = 0;
  std::int32_t unit_row = 0;
  std::int32_t unit_col = 0;
  CellIndex cell;
  std::string seed_path;
};

/// Thrown when fewer units carry class k than points requested.
class InsufficientUnits : public Error {
public:
  InsufficientUnits(const std::string& region_id, std::int32_t class_code, std::int64_t requested,
                    std::int64_t feasible);
  std::string region_id;
  std::int32_t class_code;
  std::int64_t requested;
  std::int64_t feasible;
};

/// Lengths of `parts` contiguous segments covering `count` items, longer
/// segments first.
std::vector<std::int64_t> segment_lengths(std::int64_t count, std::int64_t parts);

/// Units with uLSI > 0 for class k, ranked by uLSI descending (ties by unit
/// row, then column).
struct RankedUnit {
  const Unit* unit = nullptr;
  double ulsi = 0.0;
};
std::vector<RankedUnit> rank_units(const RasterGrid& landcover, const UnitGrid& units,
                                   std::int32_t k);

/// Places `count` points of class k: the ranked unit list is cut into
/// `count` segments, one unit is drawn per segment and one class-k cell
/// within it. Randomness comes from the (seed, region, class) substream.
std::vector<SamplePoint> place_points(const RasterGrid& landcover, const UnitGrid& units,
                                      std::int32_t k, std::int64_t count, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Whole sampling stage

struct SamplingSpec {
  std::int64_t total_samples = 0;
  std::int32_t unit_rows = 4; // R
  std::int32_t unit_cols = 4; // L
  bool clamp = false;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

struct RegionAllocation {
  std::string region_id;
  double rlsi = 0.0;
  double area = 0.0;
  double share = 0.0;
  std::int64_t samples = 0;
};

struct ClassAllocation {
  std::string region_id;
  std::int32_t class_code = 0;
  double clsi = 0.0;
  double proportion = 0.0;
  double share = 0.0;
  std::int64_t samples = 0;
  std::int64_t placed = 0; // differs from samples only after clamping
};

struct AllocationPlan {
  std::int64_t total = 0;
  std::vector<RegionAllocation> regions;
  std::vector<ClassAllocation> classes;
  std::vector<RoundingNote> rounding_trace;
  std::vector<std::string> warnings;
};

struct SamplingResult {
  AllocationPlan plan;
  std::vector<SamplePoint> points;
};

/// Allocates and places samples over `regions` of a categorical raster.
/// Infeasible class counts throw InfeasibleAllocation unless spec.clamp.
SamplingResult run_sampling(const RasterGrid& landcover, const RegionSet& regions,
                            const SamplingSpec& spec);

class InfeasibleAllocation : public Error {
public:
  explicit InfeasibleAllocation(std::vector<InsufficientUnits> offenders);
  std::vector<InsufficientUnits> offenders;
};

nlohmann::json to_json(const AllocationPlan& plan);
nlohmann::json points_to_geojson(const RasterGrid& landcover, std::span<const SamplePoint> points);

} // namespace geostrata
