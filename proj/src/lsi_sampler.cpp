#include "geostrata/lsi_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "geostrata/kernels.hpp"
#include "geostrata/parallel.hpp"
#include "geostrata/rng.hpp"

namespace geostrata {

using nlohmann::json;

ClassWindow::ClassWindow(std::int32_t rows, std::int32_t cols, std::vector<std::int32_t> labels)
    : rows_(rows), cols_(cols), labels_(std::move(labels)) {
  if (rows < 0 || cols < 0 ||
      labels_.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
    throw Error("class window shape does not match its label count");
}

ClassWindow::ClassWindow(const RasterGrid& grid, std::span<const CellIndex> cells)
    : rows_(0), cols_(0) {
  if (grid.kind() != GridKind::Categorical) throw Error("LSI needs a categorical grid");
  if (cells.empty()) return;
  std::int32_t r0 = cells[0].row, r1 = r0, c0 = cells[0].col, c1 = c0;
  for (const CellIndex c : cells) {
    if (!grid.contains(c)) throw Error("LSI window cell outside the grid");
    r0 = std::min(r0, c.row);
    r1 = std::max(r1, c.row);
    c0 = std::min(c0, c.col);
    c1 = std::max(c1, c.col);
  }
  rows_ = r1 - r0 + 1;
  cols_ = c1 - c0 + 1;
  labels_.assign(static_cast<std::size_t>(rows_) * cols_, kernels::kAbsent);
  for (const CellIndex c : cells)
    labels_[static_cast<std::size_t>(c.row - r0) * cols_ + (c.col - c0)] = grid.class_at(c);
}

LsiValue lsi(const ClassWindow& window, LsiTarget target) {
  const auto& k = kernels::active();
  const std::uint64_t present = k.count_present(window.labels().data(), window.labels().size());
  if (present == 0) throw Error("LSI window empty");

  std::uint64_t boundary = 0;
  const std::int32_t rows = window.rows();
  const std::int32_t cols = window.cols();
  for (std::int32_t r = 0; r < rows; ++r) {
    const auto row = window.row(r);
    if (cols > 1) {
      const auto* a = row.data();
      const auto* b = row.data() + 1;
      const auto n = static_cast<std::size_t>(cols - 1);
      boundary += target.all_classes ? k.count_mismatched_pairs(a, b, n)
                                     : k.count_class_boundary_pairs(a, b, n, target.class_code);
    }
    if (r + 1 < rows) {
      const auto below = window.row(r + 1);
      const auto n = static_cast<std::size_t>(cols);
      boundary += target.all_classes
                      ? k.count_mismatched_pairs(row.data(), below.data(), n)
                      : k.count_class_boundary_pairs(row.data(), below.data(), n, target.class_code);
    }
  }

  LsiValue out;
  if (target.all_classes) {
    // Each mismatched pair adds one to b_p of both of its pixels.
    out.boundary_sum = 2 * boundary;
    out.pixel_count = present;
  } else {
    out.boundary_sum = boundary;
    out.pixel_count = k.count_equal(window.labels().data(), window.labels().size(), target.class_code);
  }
  if (out.pixel_count == 0) return out;
  out.value = 0.25 * static_cast<double>(out.boundary_sum) /
              std::sqrt(static_cast<double>(out.pixel_count));
  return out;
}

LsiValue rlsi(const RasterGrid& landcover, const Region& region) {
  return lsi(ClassWindow(landcover, region.cells), LsiTarget::all());
}

LsiValue clsi(const RasterGrid& landcover, const Region& region, std::int32_t k) {
  return lsi(ClassWindow(landcover, region.cells), LsiTarget::of_class(k));
}

LsiValue ulsi(const RasterGrid& landcover, const Unit& unit, std::int32_t k) {
  return lsi(ClassWindow(landcover, unit.cells), LsiTarget::of_class(k));
}

// ---------------------------------------------------------------------------

std::vector<double> proportional_shares(std::span<const double> weights, std::int64_t total) {
  if (total < 0) throw Error("sample total must be non-negative");
  const std::size_t n = weights.size();
  for (const double w : weights)
    if (!std::isfinite(w) || w < 0.0) throw Error("allocation weights must be finite and >= 0");
  // rest_i = sum of the other weights, independent of w_i, so that
  // total / (1 + rest_i / w_i) is monotone in w_i under rounding.
  std::vector<double> prefix(n + 1, 0.0), suffix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + weights[i];
  for (std::size_t i = n; i > 0; --i) suffix[i - 1] = suffix[i] + weights[i - 1];
  std::vector<double> shares(n, 0.0);
  const auto t = static_cast<double>(total);
  for (std::size_t i = 0; i < n; ++i) {
    if (weights[i] == 0.0) continue;
    const double rest = prefix[i] + suffix[i + 1];
    shares[i] = t / (1.0 + rest / weights[i]);
  }
  return shares;
}

Apportionment largest_remainder(std::span<const double> weights, std::int64_t total,
                                std::span<const std::size_t> tie_order, const std::string& scope,
                                std::span<const std::string> keys) {
  const std::size_t n = weights.size();
  Apportionment out;
  out.shares = proportional_shares(weights, total);
  out.counts.assign(n, 0);
  if (total == 0) {
    for (std::size_t i = 0; i < n; ++i) out.trace.push_back({scope, keys[i], 0.0, 0, 0.0, false, false});
    return out;
  }
  if (std::all_of(weights.begin(), weights.end(), [](double w) { return w == 0.0; }))
    throw Error("all allocation shares are zero in " + scope);

  std::vector<double> remainder(n);
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = std::floor(out.shares[i]);
    out.counts[i] = static_cast<std::int64_t>(f);
    remainder[i] = out.shares[i] - f;
    assigned += out.counts[i];
  }
  const std::int64_t left = total - assigned;
  if (left < 0 || left > static_cast<std::int64_t>(n))
    throw Error("largest-remainder rounding lost track of the total in " + scope);

  const double eps = 1e-12 * std::max<double>(1.0, static_cast<double>(total));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (std::abs(remainder[a] - remainder[b]) > eps) return remainder[a] > remainder[b];
    return tie_order[a] < tie_order[b];
  });
  std::vector<char> bumped(n, 0), tie(n, 0);
  for (std::int64_t t = 0; t < left; ++t) {
    bumped[order[t]] = 1;
    ++out.counts[order[t]];
  }
  // Flag entries whose remainder ties the cut between bumped and not bumped.
  if (left > 0 && left < static_cast<std::int64_t>(n)) {
    const double cut = remainder[order[left - 1]];
    if (std::abs(remainder[order[left]] - cut) <= eps)
      for (std::size_t i = 0; i < n; ++i)
        if (std::abs(remainder[i] - cut) <= eps) tie[i] = 1;
  }
  for (std::size_t i = 0; i < n; ++i)
    out.trace.push_back({scope, keys[i], out.shares[i],
                         out.counts[i] - static_cast<std::int64_t>(bumped[i]), remainder[i],
                         bumped[i] != 0, tie[i] != 0});
  return out;
}

namespace {

template <typename Key>
std::vector<std::size_t> rank_of(std::span<const Key> keys) {
  std::vector<std::size_t> idx(keys.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
  std::vector<std::size_t> rank(keys.size());
  for (std::size_t r = 0; r < idx.size(); ++r) rank[idx[r]] = r;
  return rank;
}

} // namespace

Apportionment allocate_regions(std::span<const std::string> region_ids,
                               std::span<const double> rlsi_values, std::span<const double> areas,
                               std::int64_t total) {
  if (region_ids.size() != rlsi_values.size() || region_ids.size() != areas.size())
    throw Error("allocate_regions: input lengths differ");
  std::vector<double> weights(region_ids.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(areas[i] >= 0.0) || !(rlsi_values[i] >= 0.0))
      throw Error("region '" + region_ids[i] + "' has negative LSI or area");
    weights[i] = rlsi_values[i] * areas[i];
  }
  const auto ranks = rank_of(region_ids);
  return largest_remainder(weights, total, ranks, "regions", region_ids);
}

Apportionment allocate_classes(const std::string& region_id,
                               std::span<const std::int32_t> class_codes,
                               std::span<const double> clsi_values,
                               std::span<const double> proportions, std::int64_t region_total) {
  const std::size_t m = class_codes.size();
  if (clsi_values.size() != m || proportions.size() != m)
    throw Error("allocate_classes: input lengths differ");
  double sum_prop = 0.0;
  std::vector<double> weights(m);
  for (std::size_t k = 0; k < m; ++k) {
    if (!(proportions[k] >= 0.0)) throw Error("class proportion must be >= 0");
    if (!(clsi_values[k] >= 0.0)) throw Error("class LSI must be >= 0");
    sum_prop += proportions[k];
    weights[k] = clsi_values[k] * proportions[k];
  }
  if (sum_prop > 1.0 + 1e-9)
    throw Error("class proportions of region '" + region_id + "' sum above 1");
  std::vector<std::string> keys;
  for (const auto code : class_codes) keys.push_back(std::to_string(code));
  const auto ranks = rank_of(class_codes);
  return largest_remainder(weights, region_total, ranks, region_id, keys);
}

// ---------------------------------------------------------------------------

InsufficientUnits::InsufficientUnits(const std::string& region, std::int32_t k,
                                     std::int64_t req, std::int64_t feas)
    : Error("insufficient heterogeneous units in region '" + region + "' class " +
            std::to_string(k) + ": requested " + std::to_string(req) + ", feasible maximum " +
            std::to_string(feas)),
      region_id(region), class_code(k), requested(req), feasible(feas) {}

namespace {

std::string describe(const std::vector<InsufficientUnits>& offenders) {
  std::string msg = "infeasible class allocation:";
  for (const auto& o : offenders)
    msg += " (" + o.region_id + ", class " + std::to_string(o.class_code) + ", requested " +
           std::to_string(o.requested) + ", feasible " + std::to_string(o.feasible) + ")";
  return msg;
}

} // namespace

InfeasibleAllocation::InfeasibleAllocation(std::vector<InsufficientUnits> list)
    : Error(describe(list)), offenders(std::move(list)) {}

std::vector<std::int64_t> segment_lengths(std::int64_t count, std::int64_t parts) {
  if (parts <= 0 || parts > count) throw Error("cannot split " + std::to_string(count) +
                                               " items into " + std::to_string(parts) + " segments");
  const std::int64_t base = count / parts;
  const std::int64_t extra = count % parts;
  std::vector<std::int64_t> out(static_cast<std::size_t>(parts), base);
  for (std::int64_t s = 0; s < extra; ++s) ++out[static_cast<std::size_t>(s)];
  return out;
}

std::vector<RankedUnit> rank_units(const RasterGrid& landcover, const UnitGrid& units,
                                   std::int32_t k) {
  std::vector<RankedUnit> ranked;
  for (const Unit& u : units.units) {
    const ClassWindow window(landcover, u.cells);
    if (kernels::count_present(window.labels()) == 0) continue;
    const double v = lsi(window, LsiTarget::of_class(k)).value;
    if (v > 0.0) ranked.push_back({&u, v});
  }
  std::sort(ranked.begin(), ranked.end(), [](const RankedUnit& a, const RankedUnit& b) {
    if (a.ulsi != b.ulsi) return a.ulsi > b.ulsi;
    if (a.unit->unit_row != b.unit->unit_row) return a.unit->unit_row < b.unit->unit_row;
    return a.unit->unit_col < b.unit->unit_col;
  });
  return ranked;
}

std::vector<SamplePoint> place_points(const RasterGrid& landcover, const UnitGrid& units,
                                      std::int32_t k, std::int64_t count, std::uint64_t seed) {
  if (count < 0) throw Error("sample count must be non-negative");
  std::vector<SamplePoint> points;
  if (count == 0) return points;
  const auto ranked = rank_units(landcover, units, k);
  const auto available = static_cast<std::int64_t>(ranked.size());
  if (available < count) throw InsufficientUnits(units.region_id, k, count, available);

  const std::string base_path = "seed=" + std::to_string(seed) + "/region=" + units.region_id +
                                "/class=" + std::to_string(k);
  Stream stream(derive_seed(seed, {hash_string("place"), hash_string(units.region_id),
                                   static_cast<std::uint64_t>(static_cast<std::uint32_t>(k))}));
  std::size_t begin = 0;
  const auto lengths = segment_lengths(available, count);
  for (std::size_t s = 0; s < lengths.size(); ++s) {
    const auto len = static_cast<std::size_t>(lengths[s]);
    const RankedUnit& pick = ranked[begin + static_cast<std::size_t>(stream.uniform_index(len))];
    std::vector<CellIndex> candidates;
    for (const CellIndex c : pick.unit->cells)
      if (landcover.class_at(c) == k) candidates.push_back(c);
    const CellIndex cell = candidates[static_cast<std::size_t>(stream.uniform_index(candidates.size()))];
    points.push_back({units.region_id, k, pick.unit->unit_row, pick.unit->unit_col, cell,
                      base_path + "/segment=" + std::to_string(s)});
    begin += len;
  }
  return points;
}

// ---------------------------------------------------------------------------

SamplingResult run_sampling(const RasterGrid& landcover, const RegionSet& regions,
                            const SamplingSpec& spec) {
  if (landcover.kind() != GridKind::Categorical) throw Error("land cover grid must be categorical");
  if (spec.total_samples < 0) throw Error("total samples must be non-negative");
  validate_regions(regions, landcover.rows(), landcover.cols());
  const std::size_t n = regions.size();

  SamplingResult result;
  AllocationPlan& plan = result.plan;
  plan.total = spec.total_samples;

  // Region tier.
  std::vector<std::string> ids(n);
  std::vector<double> rl(n, 0.0), areas(n, 0.0);
  std::vector<std::map<std::int32_t, std::uint64_t>> class_counts(n);
  std::vector<std::uint64_t> counted(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const Region& r = regions.regions[i];
    ids[i] = r.id;
    for (const CellIndex c : r.cells) {
      const auto code = landcover.class_at(c);
      if (code == kernels::kAbsent) continue;
      ++class_counts[i][code];
      ++counted[i];
    }
    areas[i] = static_cast<double>(counted[i]) * landcover.cell_size() * landcover.cell_size();
    if (counted[i] > 0) rl[i] = rlsi(landcover, r).value;
  }
  Apportionment region_alloc = allocate_regions(ids, rl, areas, spec.total_samples);
  plan.rounding_trace = region_alloc.trace;
  for (std::size_t i = 0; i < n; ++i)
    plan.regions.push_back({ids[i], rl[i], areas[i], region_alloc.shares[i], region_alloc.counts[i]});

  // Class tier.
  struct Job {
    std::size_t region;
    std::size_t class_index; // into plan.classes
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::int32_t> codes;
    std::vector<double> cl, prop;
    for (const auto& [code, cnt] : class_counts[i]) {
      codes.push_back(code);
      cl.push_back(clsi(landcover, regions.regions[i], code).value);
      prop.push_back(static_cast<double>(cnt) / static_cast<double>(counted[i]));
    }
    if (codes.empty()) continue;
    Apportionment ca = allocate_classes(ids[i], codes, cl, prop, region_alloc.counts[i]);
    plan.rounding_trace.insert(plan.rounding_trace.end(), ca.trace.begin(), ca.trace.end());
    for (std::size_t k = 0; k < codes.size(); ++k) {
      plan.classes.push_back({ids[i], codes[k], cl[k], prop[k], ca.shares[k], ca.counts[k], ca.counts[k]});
      if (ca.counts[k] > 0) jobs.push_back({i, plan.classes.size() - 1});
    }
  }

  // Unit tier: feasibility first, then placement in parallel.
  std::vector<UnitGrid> unit_grids(n);
  for (std::size_t i = 0; i < n; ++i)
    if (region_alloc.counts[i] > 0)
      unit_grids[i] = partition_units(ids[i], regions.regions[i].cells, spec.unit_rows, spec.unit_cols);

  std::vector<InsufficientUnits> offenders;
  for (const Job& job : jobs) {
    ClassAllocation& ca = plan.classes[job.class_index];
    const auto feasible = static_cast<std::int64_t>(
        rank_units(landcover, unit_grids[job.region], ca.class_code).size());
    if (feasible >= ca.samples) continue;
    if (!spec.clamp) {
      offenders.emplace_back(ca.region_id, ca.class_code, ca.samples, feasible);
      continue;
    }
    ca.placed = feasible;
    plan.warnings.push_back("clamped region '" + ca.region_id + "' class " +
                            std::to_string(ca.class_code) + " from " + std::to_string(ca.samples) +
                            " to " + std::to_string(feasible));
    RoundingNote note{ca.region_id, std::to_string(ca.class_code), ca.share, ca.samples, 0.0, false, false,
                      "clamped to " + std::to_string(feasible) + " (requested " +
                          std::to_string(ca.samples) + ")"};
    plan.rounding_trace.push_back(std::move(note));
  }
  if (!offenders.empty()) throw InfeasibleAllocation(std::move(offenders));

  std::vector<std::vector<SamplePoint>> per_job(jobs.size());
  parallel_for(jobs.size(), spec.threads, [&](std::size_t j) {
    const ClassAllocation& ca = plan.classes[jobs[j].class_index];
    per_job[j] = place_points(landcover, unit_grids[jobs[j].region], ca.class_code, ca.placed, spec.seed);
  });
  for (auto& pts : per_job)
    result.points.insert(result.points.end(), std::make_move_iterator(pts.begin()),
                         std::make_move_iterator(pts.end()));
  return result;
}

json to_json(const AllocationPlan& plan) {
  json regions = json::array();
  for (const auto& r : plan.regions)
    regions.push_back({{"region_id", r.region_id}, {"rlsi", r.rlsi}, {"area", r.area},
                       {"share", r.share}, {"samples", r.samples}});
  json classes = json::array();
  for (const auto& c : plan.classes)
    classes.push_back({{"region_id", c.region_id}, {"class", c.class_code}, {"clsi", c.clsi},
                       {"proportion", c.proportion}, {"share", c.share}, {"samples", c.samples},
                       {"placed", c.placed}});
  json trace = json::array();
  for (const auto& t : plan.rounding_trace) {
    trace.push_back({{"scope", t.scope}, {"key", t.key}, {"share", t.share}, {"floor", t.floor},
                     {"remainder", t.remainder}, {"bumped", t.bumped}, {"tie_broken", t.tie_broken}});
    if (!t.note.empty()) trace.back()["note"] = t.note;
  }
  return {{"total", plan.total}, {"per_region", std::move(regions)},
          {"per_class", std::move(classes)}, {"rounding_trace", std::move(trace)},
          {"warnings", plan.warnings}};
}

json points_to_geojson(const RasterGrid& landcover, std::span<const SamplePoint> points) {
  json features = json::array();
  for (const auto& p : points) {
    const auto [x, y] = landcover.cell_center(p.cell);
    features.push_back(
        {{"type", "Feature"},
         {"geometry", {{"type", "Point"}, {"coordinates", {x, y}}}},
         {"properties",
          {{"region_id", p.region_id},
           {"class", p.class_code},
           {"unit", {p.unit_row, p.unit_col}},
           {"cell", {p.cell.row, p.cell.col}},
           {"seed_path", p.seed_path}}}});
  }
  return {{"type", "FeatureCollection"}, {"features", std::move(features)}};
}

} // namespace geostrata
