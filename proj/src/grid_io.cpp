#include "geostrata/grid_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "format.hpp"
#include "geostrata/error.hpp"
#include "geostrata/kernels.hpp"

namespace geostrata {

using nlohmann::json;

RasterGrid::RasterGrid(std::int32_t rows, std::int32_t cols, double cell_size, double origin_x,
                       double origin_y, double nodata, GridKind kind, std::vector<double> values)
    : rows_(rows), cols_(cols), cell_size_(cell_size), origin_x_(origin_x), origin_y_(origin_y),
      nodata_(nodata), kind_(kind), values_(std::move(values)) {
  if (rows <= 0 || cols <= 0) throw Error("grid dimensions must be positive");
  if (!(cell_size > 0.0)) throw Error("cell_size must be positive");
  if (values_.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
    throw Error("value-count mismatch: expected " + std::to_string(rows * cols) + ", got " +
                std::to_string(values_.size()));
  if (kind == GridKind::Categorical) {
    for (const double v : values_) {
      if (v == nodata_) continue;
      if (!(v >= 0.0) || v != std::floor(v) || v > 2147483647.0)
        throw Error("categorical grid holds non-class value " + detail::format_double(v));
    }
  }
}

std::int32_t RasterGrid::class_at(CellIndex c) const {
  const double v = at(c);
  return v == nodata_ ? kernels::kAbsent : static_cast<std::int32_t>(v);
}

std::pair<double, double> RasterGrid::cell_center(CellIndex c) const {
  const double x = origin_x_ + (static_cast<double>(c.col) + 0.5) * cell_size_;
  const double y = origin_y_ + (static_cast<double>(rows_ - c.row) - 0.5) * cell_size_;
  return {x, y};
}

std::optional<std::size_t> RegionSet::find(const std::string& id) const {
  for (std::size_t i = 0; i < regions.size(); ++i)
    if (regions[i].id == id) return i;
  return std::nullopt;
}

GridKind parse_grid_kind(const std::string& s) {
  std::string lower;
  for (const char ch : s)
    if (!std::isspace(static_cast<unsigned char>(ch)))
      lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  if (lower == "categorical") return GridKind::Categorical;
  if (lower == "continuous") return GridKind::Continuous;
  throw Error("unknown grid kind '" + s + "' (expected categorical or continuous)");
}

namespace {

std::string lowercase(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

bool looks_numeric(const std::string& tok) {
  double v = 0.0;
  return detail::parse_double(tok, v);
}

} // namespace

RasterGrid parse_ascii_grid(std::istream& in, GridKind kind, const std::string& source) {
  std::map<std::string, double> header;
  std::string line;
  int line_no = 0;
  std::string first_body_line;
  int first_body_line_no = 0;
  bool have_body = false;

  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (looks_numeric(key)) {
      first_body_line = line;
      first_body_line_no = line_no;
      have_body = true;
      break;
    }
    std::string value_tok;
    if (!(ls >> value_tok))
      throw Error(source + ":" + std::to_string(line_no) + ": malformed header line '" + line + "'");
    double value = 0.0;
    if (!detail::parse_double(value_tok, value))
      throw Error(source + ":" + std::to_string(line_no) + ": non-numeric header value '" +
                  value_tok + "'");
    std::string extra;
    if (ls >> extra)
      throw Error(source + ":" + std::to_string(line_no) + ": malformed header line '" + line + "'");
    header[lowercase(key)] = value;
  }

  auto require = [&](const std::string& key) {
    const auto it = header.find(key);
    if (it == header.end())
      throw Error(source + ":" + std::to_string(line_no) + ": malformed header, missing " + key);
    return it->second;
  };
  const double ncols = require("ncols");
  const double nrows = require("nrows");
  const double cellsize = require("cellsize");
  if (ncols != std::floor(ncols) || ncols <= 0 || nrows != std::floor(nrows) || nrows <= 0)
    throw Error(source + ": malformed header, nrows/ncols must be positive integers");
  if (!(cellsize > 0.0)) throw Error(source + ": cell_size must be positive");

  double xll = 0.0;
  double yll = 0.0;
  if (header.count("xllcorner")) {
    xll = header["xllcorner"];
  } else if (header.count("xllcenter")) {
    xll = header["xllcenter"] - cellsize / 2.0;
  } else {
    throw Error(source + ": malformed header, missing xllcorner");
  }
  if (header.count("yllcorner")) {
    yll = header["yllcorner"];
  } else if (header.count("yllcenter")) {
    yll = header["yllcenter"] - cellsize / 2.0;
  } else {
    throw Error(source + ": malformed header, missing yllcorner");
  }
  const double nodata = header.count("nodata_value") ? header["nodata_value"] : -9999.0;

  const auto rows = static_cast<std::int32_t>(nrows);
  const auto cols = static_cast<std::int32_t>(ncols);
  const std::size_t expected = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  std::vector<double> values;
  values.reserve(expected);

  auto consume = [&](const std::string& text, int at_line) {
    std::istringstream ls(text);
    std::string tok;
    while (ls >> tok) {
      double v = 0.0;
      if (!detail::parse_double(tok, v))
        throw Error(source + ":" + std::to_string(at_line) + ": non-numeric token '" + tok + "'");
      if (values.size() == expected)
        throw Error(source + ":" + std::to_string(at_line) + ": value-count mismatch (more than " +
                    std::to_string(expected) + " values)");
      values.push_back(v);
    }
  };
  if (have_body) consume(first_body_line, first_body_line_no);
  while (std::getline(in, line)) {
    ++line_no;
    consume(line, line_no);
  }
  if (values.size() != expected)
    throw Error(source + ":" + std::to_string(line_no) + ": value-count mismatch (expected " +
                std::to_string(expected) + ", got " + std::to_string(values.size()) + ")");

  return RasterGrid(rows, cols, cellsize, xll, yll, nodata, kind, std::move(values));
}

RasterGrid read_ascii_grid(const std::filesystem::path& path, GridKind fallback_kind) {
  std::ifstream in(path);
  if (!in) throw Error("file not found: " + path.string());
  GridKind kind = fallback_kind;
  const std::filesystem::path sidecar = path.string() + ".kind";
  if (std::filesystem::exists(sidecar)) {
    std::ifstream ks(sidecar);
    std::string word;
    ks >> word;
    kind = parse_grid_kind(word);
  }
  return parse_ascii_grid(in, kind, path.string());
}

void write_ascii_grid(const RasterGrid& grid, std::ostream& out) {
  out << "ncols " << grid.cols() << '\n'
      << "nrows " << grid.rows() << '\n'
      << "xllcorner " << detail::format_double(grid.origin_x()) << '\n'
      << "yllcorner " << detail::format_double(grid.origin_y()) << '\n'
      << "cellsize " << detail::format_double(grid.cell_size()) << '\n'
      << "NODATA_value " << detail::format_double(grid.nodata()) << '\n';
  const auto& v = grid.values();
  for (std::int32_t r = 0; r < grid.rows(); ++r) {
    for (std::int32_t c = 0; c < grid.cols(); ++c) {
      if (c) out << ' ';
      out << detail::format_double(v[static_cast<std::size_t>(r) * grid.cols() + c]);
    }
    out << '\n';
  }
}

void write_ascii_grid(const RasterGrid& grid, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_ascii_grid(grid, out);
}

void validate_regions(const RegionSet& regions, std::int32_t rows, std::int32_t cols) {
  std::vector<std::int32_t> owner(static_cast<std::size_t>(rows) * cols, -1);
  for (std::size_t i = 0; i < regions.regions.size(); ++i) {
    const Region& r = regions.regions[i];
    if (r.cells.empty()) throw Error("region '" + r.id + "' is empty");
    for (std::size_t j = 0; j < i; ++j)
      if (regions.regions[j].id == r.id) throw Error("duplicate region id '" + r.id + "'");
    for (const CellIndex c : r.cells) {
      if (c.row < 0 || c.col < 0 || c.row >= rows || c.col >= cols)
        throw Error("region '" + r.id + "' has cell (" + std::to_string(c.row) + "," +
                    std::to_string(c.col) + ") outside the grid");
      auto& o = owner[static_cast<std::size_t>(c.row) * cols + c.col];
      if (o != -1 && o != static_cast<std::int32_t>(i))
        throw Error("regions '" + regions.regions[o].id + "' and '" + r.id + "' overlap");
      if (o == static_cast<std::int32_t>(i))
        throw Error("region '" + r.id + "' lists a cell twice");
      o = static_cast<std::int32_t>(i);
    }
  }
}

namespace {

std::string id_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) return detail::format_double(v.get<double>());
  throw Error("region id must be a string or number");
}

using Ring = std::vector<std::pair<double, double>>;

// Even-odd crossing test, half-open in y so shared edges split cleanly.
bool inside_rings(const std::vector<Ring>& rings, double x, double y) {
  bool inside = false;
  for (const Ring& ring : rings) {
    const std::size_t n = ring.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      const auto [xi, yi] = ring[i];
      const auto [xj, yj] = ring[j];
      if ((yi > y) != (yj > y)) {
        const double xcross = xj + (y - yj) * (xi - xj) / (yi - yj);
        if (x < xcross) inside = !inside;
      }
    }
  }
  return inside;
}

std::vector<Ring> polygon_rings(const json& coords) {
  std::vector<Ring> rings;
  for (const auto& ring : coords) {
    Ring r;
    for (const auto& pt : ring) r.emplace_back(pt.at(0).get<double>(), pt.at(1).get<double>());
    if (r.size() < 3) throw Error("polygon ring with fewer than 3 vertices");
    rings.push_back(std::move(r));
  }
  return rings;
}

RegionSet rasterize_features(const json& doc, const RasterGrid& grid) {
  RegionSet out;
  out.provenance = "geojson";
  std::vector<char> taken(static_cast<std::size_t>(grid.rows()) * grid.cols(), 0);
  const auto& features = doc.at("features");
  for (std::size_t fi = 0; fi < features.size(); ++fi) {
    const json& f = features[fi];
    Region region;
    const json props = f.value("properties", json::object());
    region.id = props.contains("id") ? id_string(props["id"])
                : f.contains("id")   ? id_string(f["id"])
                                     : "feature-" + std::to_string(fi);
    const json& geom = f.at("geometry");
    const std::string type = geom.at("type").get<std::string>();
    std::vector<std::vector<Ring>> polygons;
    if (type == "Polygon") {
      polygons.push_back(polygon_rings(geom.at("coordinates")));
    } else if (type == "MultiPolygon") {
      for (const auto& poly : geom.at("coordinates")) polygons.push_back(polygon_rings(poly));
    } else {
      throw Error("feature '" + region.id + "' has unsupported geometry " + type);
    }
    for (std::int32_t r = 0; r < grid.rows(); ++r) {
      for (std::int32_t c = 0; c < grid.cols(); ++c) {
        auto& t = taken[static_cast<std::size_t>(r) * grid.cols() + c];
        if (t) continue;
        const auto [x, y] = grid.cell_center({r, c});
        for (const auto& poly : polygons) {
          if (inside_rings(poly, x, y)) {
            region.cells.push_back({r, c});
            t = 1;
            break;
          }
        }
      }
    }
    if (region.cells.empty()) throw Error("feature '" + region.id + "' covers no cell centre");
    out.regions.push_back(std::move(region));
  }
  return out;
}

} // namespace

RegionSet parse_regions(const json& doc, const RasterGrid& grid) {
  RegionSet out;
  if (doc.is_object() && doc.value("type", "") == "FeatureCollection") {
    out = rasterize_features(doc, grid);
  } else {
    const json& list = doc.is_array() ? doc : doc.at("regions");
    if (doc.is_object()) out.provenance = doc.value("provenance", "");
    for (const auto& item : list) {
      Region region;
      region.id = id_string(item.at("id"));
      if (item.contains("runs")) {
        for (const auto& run : item["runs"]) {
          if (run.size() != 3) throw Error("region '" + region.id + "': a run is [row, col_begin, col_end)");
          const auto row = run[0].get<std::int32_t>();
          const auto c0 = run[1].get<std::int32_t>();
          const auto c1 = run[2].get<std::int32_t>();
          if (c1 <= c0) throw Error("region '" + region.id + "': empty or reversed run");
          for (std::int32_t c = c0; c < c1; ++c) region.cells.push_back({row, c});
        }
      }
      if (item.contains("cells")) {
        for (const auto& cell : item["cells"])
          region.cells.push_back({cell.at(0).get<std::int32_t>(), cell.at(1).get<std::int32_t>()});
      }
      std::sort(region.cells.begin(), region.cells.end());
      out.regions.push_back(std::move(region));
    }
  }
  validate_regions(out, grid.rows(), grid.cols());
  return out;
}

RegionSet read_regions(const std::filesystem::path& path, const RasterGrid& grid) {
  std::ifstream in(path);
  if (!in) throw Error("file not found: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(path.string() + ": invalid JSON: " + e.what());
  }
  try {
    return parse_regions(doc, grid);
  } catch (const json::exception& e) {
    throw Error(path.string() + ": malformed region set: " + e.what());
  }
}

json regions_to_json(const RegionSet& regions) {
  json list = json::array();
  for (const Region& r : regions.regions) {
    json runs = json::array();
    std::size_t i = 0;
    while (i < r.cells.size()) {
      std::size_t j = i + 1;
      while (j < r.cells.size() && r.cells[j].row == r.cells[i].row &&
             r.cells[j].col == r.cells[j - 1].col + 1)
        ++j;
      runs.push_back({r.cells[i].row, r.cells[i].col, r.cells[j - 1].col + 1});
      i = j;
    }
    list.push_back({{"id", r.id}, {"runs", std::move(runs)}});
  }
  return {{"provenance", regions.provenance}, {"regions", std::move(list)}};
}

std::vector<double> region_aggregate(const RasterGrid& grid, const RegionSet& regions,
                                     Aggregator aggregator) {
  if (grid.kind() != GridKind::Continuous)
    throw Error("region_aggregate needs a continuous grid");
  validate_regions(regions, grid.rows(), grid.cols());
  std::vector<double> out;
  out.reserve(regions.size());
  for (const Region& r : regions.regions) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const CellIndex c : r.cells) {
      if (grid.is_nodata(c)) continue;
      sum += grid.at(c);
      ++count;
    }
    if (count == 0) throw Error("empty aggregate: region '" + r.id + "' is entirely nodata");
    out.push_back(aggregator == Aggregator::Mean ? sum / static_cast<double>(count) : sum);
  }
  return out;
}

UnitGrid partition_units(const std::string& region_id, const std::vector<CellIndex>& cells,
                         std::int32_t unit_rows, std::int32_t unit_cols) {
  if (unit_rows < 1 || unit_cols < 1) throw Error("unit layout R and L must be >= 1");
  UnitGrid grid{region_id, {}, unit_rows, unit_cols};
  if (cells.empty()) return grid;

  std::int32_t r0 = cells.front().row, r1 = r0, c0 = cells.front().col, c1 = c0;
  for (const CellIndex c : cells) {
    r0 = std::min(r0, c.row);
    r1 = std::max(r1, c.row);
    c0 = std::min(c0, c.col);
    c1 = std::max(c1, c.col);
  }
  const std::int32_t height = r1 - r0 + 1;
  const std::int32_t width = c1 - c0 + 1;
  const std::int32_t block_h = (height + unit_rows - 1) / unit_rows;
  const std::int32_t block_w = (width + unit_cols - 1) / unit_cols;

  std::vector<std::vector<CellIndex>> buckets(static_cast<std::size_t>(unit_rows) * unit_cols);
  for (const CellIndex c : cells) {
    const std::int32_t a = (c.row - r0) / block_h;
    const std::int32_t b = (c.col - c0) / block_w;
    buckets[static_cast<std::size_t>(a) * unit_cols + b].push_back(c);
  }
  for (std::int32_t a = 0; a < unit_rows; ++a) {
    for (std::int32_t b = 0; b < unit_cols; ++b) {
      auto& bucket = buckets[static_cast<std::size_t>(a) * unit_cols + b];
      if (bucket.empty()) continue;
      std::sort(bucket.begin(), bucket.end());
      grid.units.push_back({a, b, std::move(bucket)});
    }
  }
  return grid;
}

json cells_geometry(const RasterGrid& grid, const std::vector<CellIndex>& cells) {
  std::vector<CellIndex> sorted = cells;
  std::sort(sorted.begin(), sorted.end());
  json polys = json::array();
  const double s = grid.cell_size();
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i + 1;
    while (j < sorted.size() && sorted[j].row == sorted[i].row &&
           sorted[j].col == sorted[j - 1].col + 1)
      ++j;
    const double x0 = grid.origin_x() + sorted[i].col * s;
    const double x1 = grid.origin_x() + (sorted[j - 1].col + 1) * s;
    const double y1 = grid.origin_y() + (grid.rows() - sorted[i].row) * s;
    const double y0 = y1 - s;
    polys.push_back(json::array({json::array(
        {json::array({x0, y0}), json::array({x1, y0}), json::array({x1, y1}),
         json::array({x0, y1}), json::array({x0, y0})})}));
    i = j;
  }
  return {{"type", "MultiPolygon"}, {"coordinates", std::move(polys)}};
}

std::pair<double, double> cells_centroid(const RasterGrid& grid, const std::vector<CellIndex>& cells) {
  if (cells.empty()) throw Error("centroid of an empty cell set");
  double sx = 0.0, sy = 0.0;
  for (const CellIndex c : cells) {
    const auto [x, y] = grid.cell_center(c);
    sx += x;
    sy += y;
  }
  const auto n = static_cast<double>(cells.size());
  return {sx / n, sy / n};
}

} // namespace geostrata
