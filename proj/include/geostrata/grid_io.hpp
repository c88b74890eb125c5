#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace geostrata {

enum class GridKind { Continuous, Categorical };

struct CellIndex {
  std::int32_t row = 0;
  std::int32_t col = 0;
  friend auto operator<=>(const CellIndex&, const CellIndex&) = default;
};

/// Georeferenced cell grid. Row 0 is the northern-most row, as in ESRI ASCII
/// files; (origin_x, origin_y) is the lower-left corner of the grid.
class RasterGrid {
public:
  RasterGrid(std::int32_t rows, std::int32_t cols, double cell_size, double origin_x,
             double origin_y, double nodata, GridKind kind, std::vector<double> values);

  std::int32_t rows() const { return rows_; }
  std::int32_t cols() const { return cols_; }
  double cell_size() const { return cell_size_; }
  double origin_x() const { return origin_x_; }
  double origin_y() const { return origin_y_; }
  double nodata() const { return nodata_; }
  GridKind kind() const { return kind_; }
  const std::vector<double>& values() const { return values_; }

  bool contains(CellIndex c) const {
    return c.row >= 0 && c.col >= 0 && c.row < rows_ && c.col < cols_;
  }
  double at(CellIndex c) const { return values_[index(c)]; }
  bool is_nodata(CellIndex c) const { return at(c) == nodata_; }
  /// Class code of a categorical cell, or kernels::kAbsent for nodata.
  std::int32_t class_at(CellIndex c) const;

  /// Map coordinates of the cell centre.
  std::pair<double, double> cell_center(CellIndex c) const;

private:
  std::size_t index(CellIndex c) const {
    return static_cast<std::size_t>(c.row) * static_cast<std::size_t>(cols_) +
           static_cast<std::size_t>(c.col);
  }

  std::int32_t rows_;
  std::int32_t cols_;
  double cell_size_;
  double origin_x_;
  double origin_y_;
  double nodata_;
  GridKind kind_;
  std::vector<double> values_;
};

struct Region {
  std::string id;
  std::vector<CellIndex> cells; // sorted row-major, unique
};

struct RegionSet {
  std::vector<Region> regions;
  std::string provenance;

  std::size_t size() const { return regions.size(); }
  /// Index of a region id, or nullopt.
  std::optional<std::size_t> find(const std::string& id) const;
};

struct Unit {
  std::int32_t unit_row = 0; // a
  std::int32_t unit_col = 0; // b
  std::vector<CellIndex> cells;
};

struct UnitGrid {
  std::string region_id;
  std::vector<Unit> units; // row-major by (a, b), empty units omitted
  std::int32_t unit_rows = 0;
  std::int32_t unit_cols = 0;
};

enum class Aggregator { Mean, Sum };

GridKind parse_grid_kind(const std::string& s);

/// Parses an ESRI ASCII grid. `source` names the input in error messages.
RasterGrid parse_ascii_grid(std::istream& in, GridKind kind, const std::string& source = "<stream>");

/// Reads an ESRI ASCII grid from disk. A sidecar file `<path>.kind` holding
/// "categorical" or "continuous" overrides `fallback_kind`.
RasterGrid read_ascii_grid(const std::filesystem::path& path, GridKind fallback_kind);

void write_ascii_grid(const RasterGrid& grid, std::ostream& out);
void write_ascii_grid(const RasterGrid& grid, const std::filesystem::path& path);

/// Checks disjointness, non-emptiness and bounds; throws Error otherwise.
void validate_regions(const RegionSet& regions, std::int32_t rows, std::int32_t cols);

/// Accepts either the cell-run form
///   {"provenance": "...", "regions": [{"id": "a", "runs": [[row, c0, c1), ...]}]}
/// (runs are half-open column ranges; "cells": [[row, col], ...] also works)
/// or a GeoJSON FeatureCollection of (Multi)Polygons, rasterized on `grid` by
/// cell-centre inclusion. Cells claimed by an earlier feature are skipped.
RegionSet parse_regions(const nlohmann::json& doc, const RasterGrid& grid);
RegionSet read_regions(const std::filesystem::path& path, const RasterGrid& grid);

/// Cell-run form of a region set.
nlohmann::json regions_to_json(const RegionSet& regions);

/// Per-region aggregate over non-nodata cells of a continuous grid.
std::vector<double> region_aggregate(const RasterGrid& grid, const RegionSet& regions,
                                     Aggregator aggregator);

/// Splits the bounding box of `cells` into unit_rows x unit_cols blocks of
/// ceil(height / unit_rows) x ceil(width / unit_cols) cells.
UnitGrid partition_units(const std::string& region_id, const std::vector<CellIndex>& cells,
                         std::int32_t unit_rows, std::int32_t unit_cols);

/// GeoJSON MultiPolygon covering `cells`, one rectangle per row run.
nlohmann::json cells_geometry(const RasterGrid& grid, const std::vector<CellIndex>& cells);

/// Mean of the cell centres (map coordinates).
std::pair<double, double> cells_centroid(const RasterGrid& grid, const std::vector<CellIndex>& cells);

} // namespace geostrata
