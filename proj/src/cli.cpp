#include "geostrata/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "geostrata/autocorrelation.hpp"
#include "geostrata/error.hpp"
#include "geostrata/grid_io.hpp"
#include "geostrata/lsi_sampler.hpp"
#include "geostrata/matcher.hpp"
#include "geostrata/retrieval_eval.hpp"
#include "geostrata/rng.hpp"
#include "geostrata/spatial_weights.hpp"
#include "geostrata/taxonomy.hpp"

#ifndef GEOSTRATA_VERSION
#define GEOSTRATA_VERSION "0.0.0"
#endif

namespace geostrata::cli {

std::string toolkit_version() { return GEOSTRATA_VERSION; }

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

class Refused : public Error {
public:
  using Error::Error;
};

// Config keys holding file paths; relative values in a config file resolve
// against the config file's directory.
const std::set<std::string> kPathKeys{
    "light_raster", "landcover_raster", "regions",     "taxonomy",      "dictionary",
    "truth",        "run",              "labels",      "selected_regions", "lisa_report",
    "gistar_report", "matcher_transcript", "matcher_replay", "out_dir"};

const std::set<std::string> kValueKeys{
    "seed",    "quiet",        "threads",   "weights",       "contiguity",      "gamma",
    "cutoff",  "standardize",  "aggregator", "method",       "permutations",    "alpha",
    "force",   "total_samples", "unit_rows", "unit_cols",    "clamp",           "level",
    "cutoffs", "direction",    "matcher_url", "matcher_timeout_ms", "descend_threshold",
    "floor_threshold"};

// Keys that never change output content and stay out of the config hash.
const std::set<std::string> kUnhashedKeys{"out_dir", "quiet", "threads"};

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

json load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("file not found: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(path.string() + ": malformed config: " + e.what());
  }
  if (!doc.is_object()) throw Error(path.string() + ": config must be a flat JSON object");
  const fs::path base = path.parent_path();
  for (auto& [key, value] : doc.items()) {
    if (!kPathKeys.count(key) && !kValueKeys.count(key))
      throw Error(path.string() + ": unknown config key '" + key + "'");
    if (value.is_object()) throw Error(path.string() + ": config key '" + key + "' must not be nested");
    if (kPathKeys.count(key)) {
      if (!value.is_string()) throw Error(path.string() + ": config key '" + key + "' must be a path string");
      const fs::path p = value.get<std::string>();
      if (p.is_relative()) value = (base / p).lexically_normal().string();
    }
  }
  return doc;
}

// Binds CLI options to config keys; options given on the command line
// override the config file.
class Overlays {
public:
  template <typename T>
  CLI::Option* option(CLI::App* app, const std::string& flag, const std::string& key,
                      const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(flag, *value, help);
    apply_.push_back([opt, value, key](json& cfg) {
      if (opt->count() > 0) cfg[key] = *value;
    });
    return opt;
  }

  CLI::Option* flag(CLI::App* app, const std::string& flag, const std::string& key,
                    const std::string& help) {
    auto value = std::make_shared<bool>(false);
    CLI::Option* opt = app->add_flag(flag, *value, help);
    apply_.push_back([opt, value, key](json& cfg) {
      if (opt->count() > 0) cfg[key] = *value;
    });
    return opt;
  }

  void apply(json& cfg) const {
    for (const auto& f : apply_) f(cfg);
  }

private:
  std::vector<std::function<void(json&)>> apply_;
};

class Context {
public:
  Context(json cfg, std::string command, std::ostream& out)
      : cfg_(std::move(cfg)), command_(std::move(command)), out_(out) {
    out_dir_ = get<std::string>("out_dir", ".");
    quiet_ = get<bool>("quiet", false);
    threads_ = get<unsigned>("threads", 0);
  }

  const json& cfg() const { return cfg_; }
  bool has(const std::string& key) const { return cfg_.contains(key) && !cfg_[key].is_null(); }

  template <typename T>
  T get(const std::string& key, T fallback) const {
    if (!has(key)) return fallback;
    try {
      return cfg_[key].get<T>();
    } catch (const json::exception&) {
      throw Error("config key '" + key + "' has the wrong type");
    }
  }

  /// Path of an existing input file.
  fs::path input(const std::string& key) const {
    if (!has(key)) throw Error("missing input '" + key + "'; set it in the config or on the command line");
    const fs::path p = cfg_[key].get<std::string>();
    if (!fs::exists(p)) throw Error("file not found: " + p.string());
    return p;
  }

  std::uint64_t seed() const { return get<std::uint64_t>("seed", 0); }
  unsigned threads() const { return threads_; }

  fs::path output(const std::string& name) const {
    fs::create_directories(out_dir_);
    return out_dir_ / name;
  }
  const fs::path& out_dir() const { return out_dir_; }

  json provenance() const {
    json hashed = cfg_;
    for (const auto& k : kUnhashedKeys) hashed.erase(k);
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(hash_string(command_ + "\n" + hashed.dump())));
    return {{"tool", "geostrata"},
            {"version", toolkit_version()},
            {"command", command_},
            {"config_hash", hex},
            {"seed", seed()}};
  }

  void write(const std::string& name, const std::string& text) const {
    const fs::path p = output(name);
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error("cannot write " + p.string());
    f << text;
    if (!f) throw Error("cannot write " + p.string());
    say("wrote " + p.string());
  }
  void write(const std::string& name, const json& doc) const { write(name, doc.dump(2) + "\n"); }

  void say(const std::string& line) const {
    if (!quiet_) out_ << line << "\n";
  }

private:
  json cfg_;
  std::string command_;
  std::ostream& out_;
  fs::path out_dir_;
  bool quiet_ = false;
  unsigned threads_ = 0;
};

// Analysis inputs -------------------------------------------------------------

Aggregator parse_aggregator(const std::string& s) {
  if (s == "mean") return Aggregator::Mean;
  if (s == "sum") return Aggregator::Sum;
  throw Error("unknown aggregator '" + s + "' (expected mean or sum)");
}

WeightMatrix build_weights(const Context& c, const RegionSet& regions) {
  const std::string kind = c.get<std::string>("weights", "contiguity");
  const ContiguityRule rule = parse_contiguity_rule(c.get<std::string>("contiguity", "edge_or_corner"));
  const double gamma = c.get<double>("gamma", 1.0);
  WeightMatrix w;
  if (kind == "contiguity") {
    w = contiguity_weights(regions, rule);
  } else if (kind == "inverse_distance") {
    const auto centroids = region_centroids(regions);
    std::optional<double> cutoff;
    if (c.has("cutoff")) cutoff = c.get<double>("cutoff", 0.0);
    w = inverse_distance_weights(centroids, gamma, cutoff);
  } else if (kind == "distance_decay") {
    const auto centroids = region_centroids(regions);
    w = distance_decay(contiguity_weights(regions, rule), centroids, gamma);
  } else {
    throw Error("unknown weights '" + kind + "' (expected contiguity, inverse_distance or distance_decay)");
  }
  if (c.get<bool>("standardize", false)) w = row_standardize(w);
  return w;
}

SignificanceSpec significance(const Context& c) {
  SignificanceSpec s;
  s.method = parse_significance_method(c.get<std::string>("method", "permutation"));
  const auto perms = c.get<std::int64_t>("permutations", 999);
  if (perms < 1) throw Error("permutations must be positive");
  s.permutations = static_cast<std::size_t>(perms);
  s.seed = c.seed();
  s.threads = c.threads();
  return s;
}

double alpha(const Context& c) {
  const double a = c.get<double>("alpha", 0.05);
  if (!(a > 0.0 && a < 1.0)) throw Error("alpha must lie in (0, 1)");
  return a;
}

struct Study {
  RasterGrid light;
  RegionSet regions;
  std::vector<std::string> ids;
  std::vector<double> values;
  WeightMatrix w;
};

Study load_study(const Context& c) {
  RasterGrid light = read_ascii_grid(c.input("light_raster"), GridKind::Continuous);
  if (light.kind() != GridKind::Continuous) throw Error("light raster must be continuous");
  RegionSet regions = read_regions(c.input("regions"), light);
  std::vector<std::string> ids;
  for (const auto& r : regions.regions) ids.push_back(r.id);
  auto values = region_aggregate(light, regions, parse_aggregator(c.get<std::string>("aggregator", "mean")));
  auto w = build_weights(c, regions);
  return {std::move(light), std::move(regions), std::move(ids), std::move(values), std::move(w)};
}

json weights_summary(const Context& c, const WeightMatrix& w) {
  return {{"kind", c.get<std::string>("weights", "contiguity")},
          {"contiguity", c.get<std::string>("contiguity", "edge_or_corner")},
          {"standardization", to_string(w.standardization())},
          {"n", w.n()},
          {"entries", w.nnz()},
          {"s0", w.s0()}};
}

json feature_collection(const Context& c, json features) {
  return {{"type", "FeatureCollection"}, {"provenance", c.provenance()}, {"features", std::move(features)}};
}

json region_feature(const RasterGrid& grid, const Region& r, json properties) {
  return {{"type", "Feature"}, {"geometry", cells_geometry(grid, r.cells)}, {"properties", std::move(properties)}};
}

MoranResult global_test(const Context& c, const Study& s) {
  return global_morans_i(s.values, s.w, significance(c));
}

void gate(const Context& c, const MoranResult& g, double a) {
  if (g.p_value > a && !c.get<bool>("force", false)) {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "global Moran's I does not reject randomness (p=%.6g > alpha=%.6g); pass --force to run anyway",
                  g.p_value, a);
    throw Refused(buf);
  }
}

// Subcommands -----------------------------------------------------------------

void cmd_moran(const Context& c) {
  const Study s = load_study(c);
  const double a = alpha(c);
  const MoranResult r = global_test(c, s);
  c.write("moran.json", json{{"provenance", c.provenance()},
                             {"n", s.ids.size()},
                             {"weights", weights_summary(c, s.w)},
                             {"alpha", a},
                             {"rejects_randomness", r.p_value <= a},
                             {"result", to_json(r)}});
  char buf[160];
  std::snprintf(buf, sizeof buf, "moran: I=%.6g z=%.6g p=%.6g", r.I, r.z_score, r.p_value);
  c.say(buf);
}

std::vector<LisaResult> compute_lisa(const Context& c, const Study& s, double a, MoranResult* global) {
  const MoranResult g = global_test(c, s);
  gate(c, g, a);
  if (global) *global = g;
  return local_morans_i(s.values, s.w, significance(c), s.ids, a);
}

std::vector<GiStarResult> compute_gi(const Context& c, const Study& s, double a) {
  return getis_ord_gi_star(s.values, s.w, significance(c), s.ids, a);
}

void cmd_lisa(const Context& c) {
  const Study s = load_study(c);
  const double a = alpha(c);
  MoranResult g;
  const auto lisa = compute_lisa(c, s, a, &g);
  json records = json::array();
  json features = json::array();
  std::size_t significant = 0;
  for (std::size_t i = 0; i < lisa.size(); ++i) {
    records.push_back(to_json(lisa[i]));
    features.push_back(region_feature(s.light, s.regions.regions[i], to_json(lisa[i])));
    if (lisa[i].cluster != ClusterLabel::NotSignificant) ++significant;
  }
  c.write("lisa.json", json{{"provenance", c.provenance()},
                            {"alpha", a},
                            {"global", to_json(g)},
                            {"regions", std::move(records)}});
  c.write("lisa.geojson", feature_collection(c, std::move(features)));
  c.say("lisa: " + std::to_string(significant) + " of " + std::to_string(lisa.size()) +
        " regions significant");
}

void cmd_gistar(const Context& c) {
  const Study s = load_study(c);
  const double a = alpha(c);
  const auto gi = compute_gi(c, s, a);
  json records = json::array();
  json features = json::array();
  std::size_t spots = 0;
  for (std::size_t i = 0; i < gi.size(); ++i) {
    records.push_back(to_json(gi[i]));
    features.push_back(region_feature(s.light, s.regions.regions[i], to_json(gi[i])));
    if (gi[i].hotspot != Hotspot::None) ++spots;
  }
  c.write("gistar.json", json{{"provenance", c.provenance()}, {"alpha", a}, {"regions", std::move(records)}});
  c.write("gistar.geojson", feature_collection(c, std::move(features)));
  c.say("gistar: " + std::to_string(spots) + " hot or cold spots");
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("file not found: " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(p.string() + ": malformed JSON: " + e.what());
  }
}

// Files a previous step left in out_dir are named relative to it, so
// reports do not depend on where the output directory lives.
std::string display_path(const Context& c, const fs::path& p) {
  return p.parent_path() == c.out_dir() ? p.filename().string() : p.string();
}

// Report path from config, else the file a previous step left in out_dir.
std::optional<fs::path> prior_report(const Context& c, const std::string& key, const std::string& name) {
  if (c.has(key)) return c.input(key);
  const fs::path p = c.out_dir() / name;
  if (fs::exists(p)) return p;
  return std::nullopt;
}

void cmd_select_regions(const Context& c) {
  const Study s = load_study(c);
  const double a = alpha(c);
  std::vector<LisaResult> lisa;
  std::vector<GiStarResult> gi;
  const auto lisa_path = prior_report(c, "lisa_report", "lisa.json");
  const auto gi_path = prior_report(c, "gistar_report", "gistar.json");
  try {
    if (lisa_path) {
      const json doc = read_json(*lisa_path);
      for (const auto& r : doc.at("regions")) lisa.push_back(lisa_from_json(r));
    } else {
      lisa = compute_lisa(c, s, a, nullptr);
    }
    if (gi_path) {
      const json doc = read_json(*gi_path);
      for (const auto& r : doc.at("regions")) gi.push_back(gi_from_json(r));
    } else {
      gi = compute_gi(c, s, a);
    }
  } catch (const json::exception& e) {
    throw Error(std::string("malformed report: ") + e.what());
  }
  for (const auto& r : lisa)
    if (!s.regions.find(r.region_id))
      throw Error("mismatched region universes: '" + r.region_id + "' is not in the region set");
  const auto selected = select_sampling_regions(lisa, gi);

  std::map<std::string, const GiStarResult*> gi_by_id;
  for (const auto& g : gi) gi_by_id[g.region_id] = &g;
  std::map<std::string, const LisaResult*> lisa_by_id;
  for (const auto& l : lisa) lisa_by_id[l.region_id] = &l;

  // Every region is listed with its labels; only selected ones go to GeoJSON.
  const std::set<std::string> chosen(selected.begin(), selected.end());
  json records = json::array();
  json features = json::array();
  for (const auto& l : lisa) {
    const GiStarResult& g = *gi_by_id.at(l.region_id);
    const bool outlier = l.cluster == ClusterLabel::HighLow || l.cluster == ClusterLabel::LowHigh;
    const bool picked = chosen.count(l.region_id) != 0;
    json props = {{"id", l.region_id},
                  {"cluster", to_string(l.cluster)},
                  {"lisa_p", l.p_value},
                  {"hotspot", to_string(g.hotspot)},
                  {"gistar_p", g.p_value},
                  {"selected", picked},
                  {"rule", !picked ? "none" : outlier ? "outlier" : "cluster_and_hotspot"}};
    records.push_back(props);
    if (picked)
      features.push_back(region_feature(s.light, s.regions.regions[*s.regions.find(l.region_id)], std::move(props)));
  }
  json sources = {{"lisa", lisa_path ? json(display_path(c, *lisa_path)) : json("computed")},
                  {"gistar", gi_path ? json(display_path(c, *gi_path)) : json("computed")}};
  c.write("selected_regions.json", json{{"provenance", c.provenance()},
                                        {"sources", std::move(sources)},
                                        {"selected", selected},
                                        {"regions", std::move(records)}});
  c.write("selected_regions.geojson", feature_collection(c, std::move(features)));
  c.say("select-regions: " + std::to_string(selected.size()) + " of " + std::to_string(lisa.size()) +
        " regions selected");
}

void check_conservation(const AllocationPlan& plan) {
  std::int64_t total = 0;
  std::map<std::string, std::int64_t> per_region;
  for (const auto& r : plan.regions) total += r.samples;
  for (const auto& k : plan.classes) per_region[k.region_id] += k.samples;
  if (total != plan.total) throw Error("internal error: region allocation does not sum to the total");
  for (const auto& r : plan.regions) {
    const auto it = per_region.find(r.region_id);
    const std::int64_t got = it == per_region.end() ? 0 : it->second;
    if (got != r.samples)
      throw Error("internal error: class allocation of region '" + r.region_id + "' does not sum to its share");
  }
}

void cmd_sample(const Context& c) {
  const RasterGrid landcover = read_ascii_grid(c.input("landcover_raster"), GridKind::Categorical);
  if (landcover.kind() != GridKind::Categorical) throw Error("land cover raster must be categorical");
  const RegionSet all = read_regions(c.input("regions"), landcover);

  RegionSet chosen;
  chosen.provenance = all.provenance;
  std::vector<std::string> warnings;
  json source;
  if (const auto sel = prior_report(c, "selected_regions", "selected_regions.json")) {
    json doc = read_json(*sel);
    if (!doc.contains("selected") || !doc["selected"].is_array())
      throw Error(sel->string() + ": missing 'selected' id list");
    for (const auto& id : doc["selected"]) {
      const auto idx = all.find(id.get<std::string>());
      if (!idx) throw Error("mismatched region universes: '" + id.get<std::string>() + "' is not in the region set");
      chosen.regions.push_back(all.regions[*idx]);
    }
    source = display_path(c, *sel);
  } else {
    chosen = all;
    warnings.push_back("no region selection found; sampling all regions");
    source = "all";
  }

  SamplingSpec spec;
  spec.total_samples = c.get<std::int64_t>("total_samples", 0);
  spec.unit_rows = c.get<std::int32_t>("unit_rows", 4);
  spec.unit_cols = c.get<std::int32_t>("unit_cols", 4);
  spec.clamp = c.get<bool>("clamp", false);
  spec.seed = c.seed();
  spec.threads = c.threads();
  if (spec.total_samples < 0) throw Error("total samples must be non-negative");
  if (spec.unit_rows < 1 || spec.unit_cols < 1) throw Error("unit rows and cols must be positive");
  if (chosen.regions.empty() && spec.total_samples > 0) throw Error("no regions selected for sampling");

  SamplingResult result;
  if (!chosen.regions.empty()) {
    result = run_sampling(landcover, chosen, spec);
  } else {
    result.plan.total = 0;
  }
  check_conservation(result.plan);
  result.plan.warnings.insert(result.plan.warnings.begin(), warnings.begin(), warnings.end());

  json plan = to_json(result.plan);
  plan["provenance"] = c.provenance();
  plan["selection"] = std::move(source);
  plan["spec"] = {{"total_samples", spec.total_samples},
                  {"unit_rows", spec.unit_rows},
                  {"unit_cols", spec.unit_cols},
                  {"clamp", spec.clamp}};
  c.write("allocation.json", plan);
  json points = points_to_geojson(landcover, result.points);
  points["provenance"] = c.provenance();
  c.write("samples.geojson", points);
  c.say("sample: " + std::to_string(result.points.size()) + " points in " +
        std::to_string(result.plan.regions.size()) + " regions");
}

// Taxonomy --------------------------------------------------------------------

std::unique_ptr<SemanticMatcher> make_matcher(const Context& c) {
  if (c.has("matcher_replay")) return std::make_unique<ReplayMatcher>(c.input("matcher_replay"));
  if (c.has("matcher_url")) {
    std::optional<fs::path> transcript;
    if (c.has("matcher_transcript")) transcript = fs::path(c.get<std::string>("matcher_transcript", ""));
    else transcript = c.output("matcher_transcript.jsonl");
    return std::make_unique<RemoteMatcher>(c.get<std::string>("matcher_url", ""),
                                           std::chrono::milliseconds(c.get<std::int64_t>("matcher_timeout_ms", 10000)),
                                           transcript);
  }
  if (c.has("dictionary")) return std::make_unique<DictionaryMatcher>(DictionaryMatcher::load(c.input("dictionary")));
  return std::make_unique<DictionaryMatcher>();
}

void write_tree(const Context& c, const fs::path& source, const LabelTree& tree,
                const std::string& stem = "taxonomy") {
  tree.validate();
  const std::string name = stem + ".v" + std::to_string(tree.version()) + ".json";
  const fs::path target = c.out_dir() / name;
  std::error_code ec;
  if (fs::exists(target) && fs::equivalent(target, source, ec))
    throw Error("refusing to overwrite the input taxonomy " + source.string());
  json doc = tree.to_json();
  doc["provenance"] = c.provenance();
  c.write(name, doc);
}

struct TaxonomyArgs {
  std::string name;
  std::string description;
  std::string category;
};

void cmd_taxonomy_add(const Context& c, const TaxonomyArgs& a) {
  const fs::path source = c.input("taxonomy");
  LabelTree tree = LabelTree::load(source);
  auto matcher = make_matcher(c);
  InclusionThresholds th;
  th.descend = c.get<double>("descend_threshold", th.descend);
  th.floor = c.get<double>("floor_threshold", th.floor);
  const Placement p = include_novel_label(tree, {a.name, a.description, a.category}, *matcher, th);
  write_tree(c, source, tree);
  json doc = to_json(p);
  doc["provenance"] = c.provenance();
  doc["label"] = normalize_label(a.name);
  c.write("placement.json", doc);
  c.say("taxonomy add: '" + normalize_label(a.name) + "' -> " +
        (p.absorbed_as_synonym ? "synonym of " + p.node_id : "child of " + p.parent.value_or("(root)")));
}

void cmd_taxonomy_merge(const Context& c) {
  const fs::path source = c.input("taxonomy");
  LabelTree tree = LabelTree::load(source);
  auto matcher = make_matcher(c);
  const MergeReport report = consolidate_duplicates(tree, *matcher);
  write_tree(c, source, tree);
  json doc = to_json(report);
  doc["provenance"] = c.provenance();
  c.write("merge_report.json", doc);
  c.say("taxonomy merge: " + std::to_string(report.merges.size()) + " merges, " +
        std::to_string(report.skipped.size()) + " skipped");
}

void cmd_taxonomy_map(const Context& c) {
  const fs::path source = c.input("taxonomy");
  LabelTree tree = LabelTree::load(source);
  const auto counts = read_image_label_counts(c.input("labels"));
  const MappingResult m = map_labels(tree, counts);
  write_tree(c, source, tree);
  write_tree(c, source, m.subtree, "taxonomy_subtree");
  c.write("rejects.json", json{{"provenance", c.provenance()},
                               {"rejects", m.rejects},
                               {"accepted_total", m.accepted_total}});
  c.say("taxonomy map: " + std::to_string(m.subtree.size()) + " nodes kept, " +
        std::to_string(m.rejects.size()) + " rejected labels");
}

void cmd_taxonomy_export(const Context& c) {
  const fs::path source = c.input("taxonomy");
  const LabelTree tree = LabelTree::load(source);
  write_tree(c, source, tree);
}

// Evaluation ------------------------------------------------------------------

void cmd_eval(const Context& c) {
  const LabelTree tree = LabelTree::load(c.input("taxonomy"));
  const int level = c.get<int>("level", 3);
  const GroundTruth truth = read_truth(c.input("truth"), tree, level);
  RankedRun run = read_run(c.input("run"));
  if (c.has("direction")) run.direction = parse_run_direction(c.get<std::string>("direction", ""));
  const auto cutoffs = c.get<std::vector<std::size_t>>("cutoffs", kDefaultCutoffs);
  const MetricsReport report = evaluate(run, truth, cutoffs, std::nullopt, c.threads());
  json doc = to_json(report);
  doc["provenance"] = c.provenance();
  doc["direction"] = to_string(run.direction);
  c.write("metrics.json", doc);
  c.write("metrics.txt", to_text_table(report));
  c.say("eval: " + std::to_string(report.per_query.size()) + " queries at level " + std::to_string(level));
}

void add_analysis_options(CLI::App* sub, Overlays& ov) {
  ov.option<std::string>(sub, "--light", "light_raster", "continuous raster (.asc)");
  ov.option<std::string>(sub, "--regions", "regions", "regions (cell runs JSON or GeoJSON)");
  ov.option<std::string>(sub, "--aggregator", "aggregator", "mean or sum");
  ov.option<std::string>(sub, "--weights", "weights", "contiguity, inverse_distance or distance_decay");
  ov.option<std::string>(sub, "--contiguity", "contiguity", "edge or edge_or_corner");
  ov.option<double>(sub, "--gamma", "gamma", "distance decay exponent");
  ov.option<double>(sub, "--cutoff", "cutoff", "inverse distance radius");
  ov.flag(sub, "--standardize", "standardize", "row-standardize the weights");
  ov.option<std::string>(sub, "--method", "method", "analytical or permutation");
  ov.option<std::int64_t>(sub, "--permutations", "permutations", "permutation count");
  ov.option<double>(sub, "--alpha", "alpha", "significance level");
}

void add_matcher_options(CLI::App* sub, Overlays& ov) {
  ov.option<std::string>(sub, "--taxonomy", "taxonomy", "taxonomy JSON");
  ov.option<std::string>(sub, "--dictionary", "dictionary", "dictionary matcher JSON");
  ov.option<std::string>(sub, "--matcher-url", "matcher_url", "remote matcher base URL");
  ov.option<std::int64_t>(sub, "--matcher-timeout-ms", "matcher_timeout_ms", "remote matcher timeout");
  ov.option<std::string>(sub, "--matcher-transcript", "matcher_transcript", "remote matcher transcript (JSON lines)");
  ov.option<std::string>(sub, "--matcher-replay", "matcher_replay", "answer from a recorded transcript");
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spatial sampling, label taxonomy and retrieval evaluation toolkit", "geostrata"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", toolkit_version());

  Overlays ov;
  std::string config_path;
  app.add_option("--config", config_path, "flat JSON config; flags override its keys");
  ov.option<std::uint64_t>(&app, "--seed", "seed", "master seed");
  ov.option<std::string>(&app, "--out-dir", "out_dir", "output directory");
  ov.flag(&app, "--quiet", "quiet", "suppress progress lines");
  ov.option<unsigned>(&app, "--threads", "threads", "worker threads (0 = all cores)");

  auto* moran = app.add_subcommand("moran", "global Moran's I");
  add_analysis_options(moran, ov);
  auto* lisa = app.add_subcommand("lisa", "local Moran's I (gated on the global test)");
  add_analysis_options(lisa, ov);
  ov.flag(lisa, "--force", "force", "run even when the global test is not significant");
  auto* gistar = app.add_subcommand("gistar", "Getis-Ord Gi* hot and cold spots");
  add_analysis_options(gistar, ov);
  auto* select = app.add_subcommand("select-regions", "regions selected for sampling");
  add_analysis_options(select, ov);
  ov.flag(select, "--force", "force", "compute LISA even when the global test is not significant");
  ov.option<std::string>(select, "--lisa-report", "lisa_report", "lisa.json from a previous run");
  ov.option<std::string>(select, "--gistar-report", "gistar_report", "gistar.json from a previous run");

  auto* sample = app.add_subcommand("sample", "allocate and place samples");
  ov.option<std::string>(sample, "--landcover", "landcover_raster", "categorical raster (.asc)");
  ov.option<std::string>(sample, "--regions", "regions", "regions (cell runs JSON or GeoJSON)");
  ov.option<std::string>(sample, "--selected", "selected_regions", "selected_regions.json");
  ov.option<std::int64_t>(sample, "--total-samples", "total_samples", "total sample count N");
  ov.option<std::int32_t>(sample, "--unit-rows", "unit_rows", "unit grid rows R");
  ov.option<std::int32_t>(sample, "--unit-cols", "unit_cols", "unit grid cols L");
  ov.flag(sample, "--clamp", "clamp", "clamp infeasible class counts");

  auto* taxonomy = app.add_subcommand("taxonomy", "label taxonomy maintenance");
  taxonomy->require_subcommand(1);
  TaxonomyArgs targs;
  auto* add = taxonomy->add_subcommand("add", "insert a novel label");
  add_matcher_options(add, ov);
  add->add_option("--name", targs.name, "label name")->required();
  add->add_option("--description", targs.description, "label description");
  add->add_option("--category", targs.category, "source-system parent tag");
  ov.option<double>(add, "--descend-threshold", "descend_threshold", "score needed to descend");
  ov.option<double>(add, "--floor-threshold", "floor_threshold", "minimum level-1 score");
  auto* merge = taxonomy->add_subcommand("merge", "consolidate duplicate labels");
  add_matcher_options(merge, ov);
  auto* map = taxonomy->add_subcommand("map", "map image labels and extract the used sub-tree");
  ov.option<std::string>(map, "--taxonomy", "taxonomy", "taxonomy JSON");
  ov.option<std::string>(map, "--labels", "labels", "CSV of image_id,label_name");
  auto* exp = taxonomy->add_subcommand("export", "write a validated copy");
  ov.option<std::string>(exp, "--taxonomy", "taxonomy", "taxonomy JSON");

  auto* eval = app.add_subcommand("eval", "score a retrieval run");
  ov.option<std::string>(eval, "--taxonomy", "taxonomy", "taxonomy JSON");
  ov.option<std::string>(eval, "--truth", "truth", "ground truth JSON");
  ov.option<std::string>(eval, "--run", "run", "run file");
  ov.option<int>(eval, "--level", "level", "label level (2 or 3)")->check(CLI::IsMember({2, 3}));
  ov.option<std::vector<std::size_t>>(eval, "--cutoffs", "cutoffs", "comma separated cutoffs")->delimiter(',');
  ov.option<std::string>(eval, "--direction", "direction", "image_to_text or text_to_image");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return kExitInputError;
  }

  try {
    json cfg = config_path.empty() ? json::object() : load_config(config_path);
    ov.apply(cfg);
    std::string command;
    std::function<void(const Context&)> body;
    if (moran->parsed()) { command = "moran"; body = cmd_moran; }
    else if (lisa->parsed()) { command = "lisa"; body = cmd_lisa; }
    else if (gistar->parsed()) { command = "gistar"; body = cmd_gistar; }
    else if (select->parsed()) { command = "select-regions"; body = cmd_select_regions; }
    else if (sample->parsed()) { command = "sample"; body = cmd_sample; }
    else if (add->parsed()) { command = "taxonomy add"; body = [&](const Context& c) { cmd_taxonomy_add(c, targs); }; }
    else if (merge->parsed()) { command = "taxonomy merge"; body = cmd_taxonomy_merge; }
    else if (map->parsed()) { command = "taxonomy map"; body = cmd_taxonomy_map; }
    else if (exp->parsed()) { command = "taxonomy export"; body = cmd_taxonomy_export; }
    else { command = "eval"; body = cmd_eval; }
    const Context ctx(std::move(cfg), command, out);
    body(ctx);
    return kExitOk;
  } catch (const Refused& e) {
    err << "refused: " << one_line(e.what()) << "\n";
    return kExitRefused;
  } catch (const std::exception& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return kExitInputError;
  }
}

} // namespace geostrata::cli
