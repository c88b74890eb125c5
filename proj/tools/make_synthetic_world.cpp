// Writes the bundled synthetic world: a light raster with one bright core
// and one isolated bright block, a patchy land-cover raster, 16 square
// regions, and a small labelled retrieval set with a noisy run.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "geostrata/grid_io.hpp"
#include "geostrata/rng.hpp"
#include "geostrata/taxonomy.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace geostrata;

namespace {

constexpr std::int32_t kSize = 64;
constexpr std::int32_t kBlocks = 4;
constexpr double kCell = 30.0;
constexpr double kOriginX = 500000.0;
constexpr double kOriginY = 3300000.0;
constexpr double kNodata = -9999.0;

RasterGrid make_light(Stream& rng) {
  std::vector<double> v(kSize * kSize);
  for (std::int32_t r = 0; r < kSize; ++r) {
    for (std::int32_t c = 0; c < kSize; ++c) {
      const double d2 = (r - 10.0) * (r - 10.0) + (c - 10.0) * (c - 10.0);
      double x = 120.0 * std::exp(-d2 / (2.0 * 16.0 * 16.0)) + 5.0 * rng.uniform01();
      // Isolated bright block among dark neighbours.
      if (r >= 48 && c >= 48) x += 90.0;
      v[static_cast<std::size_t>(r * kSize + c)] = std::round(x * 100.0) / 100.0;
    }
  }
  return {kSize, kSize, kCell, kOriginX, kOriginY, kNodata, GridKind::Continuous, std::move(v)};
}

RasterGrid make_landcover(Stream& rng) {
  // Voronoi patches with random classes 1..4, a road cross of class 5 and a
  // few nodata cells.
  struct Seed {
    double r, c;
    int cls;
  };
  std::vector<Seed> seeds;
  for (int i = 0; i < 48; ++i)
    seeds.push_back({rng.uniform01() * kSize, rng.uniform01() * kSize,
                     1 + static_cast<int>(rng.uniform_index(4))});
  std::vector<double> v(kSize * kSize);
  for (std::int32_t r = 0; r < kSize; ++r) {
    for (std::int32_t c = 0; c < kSize; ++c) {
      double best = 1e300;
      int cls = 1;
      for (const auto& s : seeds) {
        const double d = (r + 0.5 - s.r) * (r + 0.5 - s.r) + (c + 0.5 - s.c) * (c + 0.5 - s.c);
        if (d < best) {
          best = d;
          cls = s.cls;
        }
      }
      if (r == 37 || c == 21) cls = 5;
      v[static_cast<std::size_t>(r * kSize + c)] = cls;
    }
  }
  for (int i = 0; i < 6; ++i) v[rng.uniform_index(v.size())] = kNodata;
  return {kSize, kSize, kCell, kOriginX, kOriginY, kNodata, GridKind::Categorical, std::move(v)};
}

RegionSet make_regions() {
  RegionSet set;
  set.provenance = "synthetic 4x4 blocks";
  const std::int32_t step = kSize / kBlocks;
  for (std::int32_t br = 0; br < kBlocks; ++br) {
    for (std::int32_t bc = 0; bc < kBlocks; ++bc) {
      Region reg;
      reg.id = "R" + std::to_string(br) + std::to_string(bc);
      for (std::int32_t r = br * step; r < (br + 1) * step; ++r)
        for (std::int32_t c = bc * step; c < (bc + 1) * step; ++c) reg.cells.push_back({r, c});
      set.regions.push_back(std::move(reg));
    }
  }
  return set;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
  if (!f) throw std::runtime_error("cannot write " + p.string());
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate the synthetic world used by the end-to-end pipeline", "make_synthetic_world"};
  fs::path out = "data/synthetic";
  fs::path taxonomy_path = "data/taxonomy/seed_taxonomy.json";
  std::uint64_t seed = 7;
  int items = 40;
  int queries = 10;
  app.add_option("--out", out, "output directory");
  app.add_option("--taxonomy", taxonomy_path, "taxonomy JSON for ground-truth labels")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "generator seed");
  app.add_option("--items", items, "retrieval items");
  app.add_option("--queries", queries, "retrieval queries");
  CLI11_PARSE(app, argc, argv);

  try {
    fs::create_directories(out);
    Stream rng(derive_seed(seed, {hash_string("world")}));
    write_ascii_grid(make_light(rng), out / "light.asc");
    write_ascii_grid(make_landcover(rng), out / "landcover.asc");
    write_text(out / "regions.json", regions_to_json(make_regions()).dump(2) + "\n");

    // Items carry 1-3 level-3 labels drawn from a few level-2 families so
    // that level 2 and level 3 scores differ.
    const LabelTree tree = LabelTree::load(taxonomy_path);
    std::vector<std::string> leaves;
    for (const auto& id : tree.at_level(3)) leaves.push_back(tree.node(id).name);
    Stream lab(derive_seed(seed, {hash_string("labels")}));
    json truth = json::object();
    std::string csv = "image_id,label_name\n";
    std::vector<std::set<std::string>> labels(static_cast<std::size_t>(items));
    auto item_id = [](int i) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "img_%03d", i);
      return std::string(buf);
    };
    for (int i = 0; i < items; ++i) {
      const std::size_t k = 1 + lab.uniform_index(3);
      const std::size_t family = lab.uniform_index(6) * (leaves.size() / 6);
      while (labels[i].size() < k) labels[i].insert(leaves[(family + lab.uniform_index(8)) % leaves.size()]);
      truth[item_id(i)] = labels[i];
      for (const auto& l : labels[i]) csv += item_id(i) + "," + l + "\n";
    }
    csv += "img_000,spaceport\n";
    write_text(out / "truth.json", truth.dump(2) + "\n");
    write_text(out / "image_labels.csv", csv);

    // Scores: shared labels plus noise, so the run is good but not ideal.
    std::string run;
    for (int q = 0; q < queries; ++q) {
      std::vector<std::pair<double, std::string>> scored;
      for (int i = 0; i < items; ++i) {
        std::size_t shared = 0;
        for (const auto& l : labels[i]) shared += labels[q].count(l);
        const double score = static_cast<double>(shared) + 1.5 * lab.uniform01();
        scored.emplace_back(std::round(score * 1e6) / 1e6, item_id(i));
      }
      std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
      });
      for (std::size_t r = 0; r < scored.size(); ++r) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%s %s %zu %.6f\n", item_id(q).c_str(), scored[r].second.c_str(), r + 1,
                      scored[r].first);
        run += buf;
      }
    }
    write_text(out / "run.txt", run);

    const json config = {{"light_raster", "light.asc"},
                         {"landcover_raster", "landcover.asc"},
                         {"regions", "regions.json"},
                         {"taxonomy", "../taxonomy/seed_taxonomy.json"},
                         {"dictionary", "../taxonomy/dictionary.json"},
                         {"truth", "truth.json"},
                         {"run", "run.txt"},
                         {"labels", "image_labels.csv"},
                         {"seed", 20240611},
                         {"method", "permutation"},
                         {"permutations", 999},
                         {"alpha", 0.05},
                         {"weights", "contiguity"},
                         {"contiguity", "edge_or_corner"},
                         {"total_samples", 30},
                         {"unit_rows", 4},
                         {"unit_cols", 4},
                         {"level", 3},
                         {"cutoffs", {5, 10, 20, 50, 100}}};
    write_text(out / "config.json", config.dump(2) + "\n");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
