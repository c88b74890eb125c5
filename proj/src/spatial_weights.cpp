#include "geostrata/spatial_weights.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "format.hpp"
#include "geostrata/error.hpp"

namespace geostrata {

ContiguityRule parse_contiguity_rule(const std::string& s) {
  if (s == "edge" || s == "rook") return ContiguityRule::Edge;
  if (s == "edge_or_corner" || s == "queen") return ContiguityRule::EdgeOrCorner;
  throw Error("unknown contiguity rule '" + s + "'");
}

std::string to_string(ContiguityRule rule) {
  return rule == ContiguityRule::Edge ? "edge" : "edge_or_corner";
}

std::string to_string(Standardization s) { return s == Standardization::Row ? "row" : "none"; }

WeightMatrix::WeightMatrix(std::size_t n, std::vector<WeightEntry> entries,
                           Standardization standardization)
    : n_(n), standardization_(standardization) {
  std::sort(entries.begin(), entries.end(), [](const WeightEntry& a, const WeightEntry& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  row_ptr_.assign(n + 1, 0);
  cols_.reserve(entries.size());
  vals_.reserve(entries.size());
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const WeightEntry& e = entries[k];
    if (e.i < 0 || e.j < 0 || static_cast<std::size_t>(e.i) >= n || static_cast<std::size_t>(e.j) >= n)
      throw Error("weight entry (" + std::to_string(e.i) + "," + std::to_string(e.j) +
                  ") out of range for n=" + std::to_string(n));
    if (e.i == e.j) throw Error("weight matrix may not hold diagonal entry " + std::to_string(e.i));
    if (!std::isfinite(e.w) || e.w < 0.0)
      throw Error("weight (" + std::to_string(e.i) + "," + std::to_string(e.j) +
                  ") must be finite and non-negative");
    if (k > 0 && entries[k - 1].i == e.i && entries[k - 1].j == e.j)
      throw Error("duplicate weight entry (" + std::to_string(e.i) + "," + std::to_string(e.j) + ")");
    cols_.push_back(e.j);
    vals_.push_back(e.w);
    ++row_ptr_[static_cast<std::size_t>(e.i) + 1];
  }
  for (std::size_t i = 0; i < n; ++i) row_ptr_[i + 1] += row_ptr_[i];
}

std::vector<WeightEntry> WeightMatrix::entries() const {
  std::vector<WeightEntry> out;
  out.reserve(nnz());
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
      out.push_back({static_cast<std::int32_t>(i), cols_[k], vals_[k]});
  return out;
}

double WeightMatrix::s0() const {
  double s = 0.0;
  for (const double v : vals_) s += v;
  return s;
}

double WeightMatrix::row_sum(std::size_t i) const {
  double s = 0.0;
  for (const double v : weights(i)) s += v;
  return s;
}

double WeightMatrix::weight(std::size_t i, std::size_t j) const {
  const auto nb = neighbors(i);
  const auto it = std::lower_bound(nb.begin(), nb.end(), static_cast<std::int32_t>(j));
  if (it == nb.end() || *it != static_cast<std::int32_t>(j)) return 0.0;
  return vals_[row_ptr_[i] + static_cast<std::size_t>(it - nb.begin())];
}

bool WeightMatrix::is_symmetric(double tol) const {
  for (std::size_t i = 0; i < n_; ++i) {
    const auto nb = neighbors(i);
    const auto w = weights(i);
    for (std::size_t k = 0; k < nb.size(); ++k)
      if (std::abs(weight(static_cast<std::size_t>(nb[k]), i) - w[k]) > tol) return false;
  }
  return true;
}

WeightMatrix contiguity_weights(const RegionSet& regions, ContiguityRule rule) {
  std::int32_t rows = 0, cols = 0;
  for (const Region& r : regions.regions)
    for (const CellIndex c : r.cells) {
      rows = std::max(rows, c.row + 1);
      cols = std::max(cols, c.col + 1);
    }
  const std::size_t n = regions.size();
  if (n == 0) return WeightMatrix(0, {});
  validate_regions(regions, rows, cols);

  std::vector<std::int32_t> owner(static_cast<std::size_t>(rows) * cols, -1);
  for (std::size_t i = 0; i < n; ++i)
    for (const CellIndex c : regions.regions[i].cells)
      owner[static_cast<std::size_t>(c.row) * cols + c.col] = static_cast<std::int32_t>(i);

  // Forward half of the neighbourhood; the other half is covered by symmetry.
  std::vector<std::pair<int, int>> offsets{{0, 1}, {1, 0}};
  if (rule == ContiguityRule::EdgeOrCorner) {
    offsets.emplace_back(1, 1);
    offsets.emplace_back(1, -1);
  }
  std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
  for (std::int32_t r = 0; r < rows; ++r) {
    for (std::int32_t c = 0; c < cols; ++c) {
      const std::int32_t a = owner[static_cast<std::size_t>(r) * cols + c];
      if (a < 0) continue;
      for (const auto& [dr, dc] : offsets) {
        const std::int32_t rr = r + dr, cc = c + dc;
        if (rr < 0 || cc < 0 || rr >= rows || cc >= cols) continue;
        const std::int32_t b = owner[static_cast<std::size_t>(rr) * cols + cc];
        if (b < 0 || b == a) continue;
        pairs.emplace_back(std::min(a, b), std::max(a, b));
      }
    }
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  std::vector<WeightEntry> entries;
  entries.reserve(pairs.size() * 2);
  for (const auto& [a, b] : pairs) {
    entries.push_back({a, b, 1.0});
    entries.push_back({b, a, 1.0});
  }
  return WeightMatrix(n, std::move(entries));
}

namespace {

double distance(const Point2& a, const Point2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

void check_gamma(double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw Error("gamma must be a positive exponent");
}

} // namespace

WeightMatrix inverse_distance_weights(std::span<const Point2> centroids, double gamma,
                                      std::optional<double> cutoff) {
  check_gamma(gamma);
  if (cutoff && !(*cutoff > 0.0)) throw Error("cutoff radius must be positive");
  const std::size_t n = centroids.size();
  std::vector<WeightEntry> entries;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = distance(centroids[i], centroids[j]);
      if (d == 0.0)
        throw Error("zero distance between centroids " + std::to_string(i) + " and " + std::to_string(j));
      if (cutoff && d > *cutoff) continue;
      const double w = std::pow(d, -gamma);
      entries.push_back({static_cast<std::int32_t>(i), static_cast<std::int32_t>(j), w});
      entries.push_back({static_cast<std::int32_t>(j), static_cast<std::int32_t>(i), w});
    }
  }
  return WeightMatrix(n, std::move(entries));
}

WeightMatrix distance_decay(const WeightMatrix& pattern, std::span<const Point2> centroids,
                            double gamma) {
  check_gamma(gamma);
  if (centroids.size() != pattern.n()) throw Error("centroid count does not match weight matrix");
  std::vector<WeightEntry> entries = pattern.entries();
  for (auto& e : entries) {
    const double d = distance(centroids[e.i], centroids[e.j]);
    if (d == 0.0)
      throw Error("zero distance between centroids " + std::to_string(e.i) + " and " + std::to_string(e.j));
    e.w = std::pow(d, -gamma);
  }
  return WeightMatrix(pattern.n(), std::move(entries));
}

WeightMatrix row_standardize(const WeightMatrix& w) {
  if (w.standardization() == Standardization::Row) return w;
  std::vector<WeightEntry> entries = w.entries();
  std::vector<double> sums(w.n(), 0.0);
  for (std::size_t i = 0; i < w.n(); ++i) sums[i] = w.row_sum(i);
  for (auto& e : entries)
    if (sums[e.i] > 0.0) e.w /= sums[e.i];
  return WeightMatrix(w.n(), std::move(entries), Standardization::Row);
}

std::vector<Point2> region_centroids(const RegionSet& regions) {
  std::vector<Point2> out;
  out.reserve(regions.size());
  for (const Region& r : regions.regions) {
    if (r.cells.empty()) throw Error("region '" + r.id + "' is empty");
    double sx = 0.0, sy = 0.0;
    for (const CellIndex c : r.cells) {
      sx += c.col + 0.5;
      sy += c.row + 0.5;
    }
    const auto k = static_cast<double>(r.cells.size());
    out.push_back({sx / k, sy / k});
  }
  return out;
}

void write_weights_csv(const WeightMatrix& w, std::ostream& out) {
  out << "#n=" << w.n() << ",standardization=" << to_string(w.standardization()) << '\n';
  for (const WeightEntry& e : w.entries())
    out << e.i << ',' << e.j << ',' << detail::format_double(e.w) << '\n';
}

WeightMatrix read_weights_csv(std::istream& in) {
  std::string header;
  if (!std::getline(in, header) || header.rfind("#n=", 0) != 0)
    throw Error("weights csv: missing '#n=...' header");
  const auto comma = header.find(",standardization=");
  if (comma == std::string::npos) throw Error("weights csv: header lacks standardization");
  const std::size_t n = std::stoul(header.substr(3, comma - 3));
  const std::string st = header.substr(comma + 17);
  Standardization standardization;
  if (st == "none") standardization = Standardization::None;
  else if (st == "row") standardization = Standardization::Row;
  else throw Error("weights csv: unknown standardization '" + st + "'");

  std::vector<WeightEntry> entries;
  std::string line;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string a, b, c;
    if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, c))
      throw Error("weights csv line " + std::to_string(line_no) + ": expected i,j,w");
    double w = 0.0;
    if (!detail::parse_double(c, w))
      throw Error("weights csv line " + std::to_string(line_no) + ": bad weight '" + c + "'");
    entries.push_back({std::stoi(a), std::stoi(b), w});
  }
  return WeightMatrix(n, std::move(entries), standardization);
}

} // namespace geostrata
