#include <doctest.h>

#include <set>
#include <sstream>

#include <json.hpp>

#include "geostrata/cli.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = geostrata::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string world_config() { return (testing::source_dir() / "data/synthetic/config.json").string(); }

std::string seed_taxonomy() { return (testing::source_dir() / "data/taxonomy/seed_taxonomy.json").string(); }

json read(const fs::path& p) { return json::parse(testing::slurp(p)); }

std::vector<std::string> with_world(const fs::path& dir, std::vector<std::string> tail) {
  std::vector<std::string> args{"--config", world_config(), "--out-dir", dir.string(), "--quiet"};
  args.insert(args.end(), tail.begin(), tail.end());
  return args;
}

} // namespace

TEST_CASE("cli: version, usage errors and exit codes") {
  const auto v = cli({"--version"});
  CHECK(v.code == geostrata::cli::kExitOk);
  CHECK(v.out.find(geostrata::cli::toolkit_version()) != std::string::npos);

  const auto none = cli({});
  CHECK(none.code == geostrata::cli::kExitInputError);
  CHECK(none.err.rfind("error: ", 0) == 0);

  const auto bogus = cli({"frobnicate"});
  CHECK(bogus.code == geostrata::cli::kExitInputError);

  const auto dir = testing::scratch("cli_missing");
  const auto missing = cli({"--out-dir", dir.string(), "moran", "--light", (dir / "nope.asc").string(), "--regions",
                            (dir / "nope.json").string()});
  CHECK(missing.code == geostrata::cli::kExitInputError);
  CHECK(missing.err.find("file not found") != std::string::npos);
  CHECK(std::count(missing.err.begin(), missing.err.end(), '\n') == 1);

  const auto no_input = cli({"--out-dir", dir.string(), "moran"});
  CHECK(no_input.code == geostrata::cli::kExitInputError);
  CHECK(no_input.err.find("light_raster") != std::string::npos);
}

TEST_CASE("cli: config keys are checked") {
  const auto dir = testing::scratch("cli_config");
  testing::spit(dir / "c.json", R"({"seed": 1, "colour": "blue"})");
  const auto r = cli({"--config", (dir / "c.json").string(), "moran"});
  CHECK(r.code == geostrata::cli::kExitInputError);
  CHECK(r.err.find("colour") != std::string::npos);
}

TEST_CASE("cli: moran report carries provenance; flags override config") {
  const auto dir = testing::scratch("cli_moran");
  REQUIRE(cli(with_world(dir, {"moran"})).code == 0);
  const json a = read(dir / "moran.json");
  CHECK(a["provenance"]["seed"] == 20240611);
  CHECK(a["provenance"]["version"] == geostrata::cli::toolkit_version());
  CHECK(a["provenance"].contains("config_hash"));

  REQUIRE(cli(with_world(dir, {"--seed", "5", "moran", "--method", "analytical"})).code == 0);
  const json b = read(dir / "moran.json");
  CHECK(b["provenance"]["seed"] == 5);
  CHECK(b["provenance"]["config_hash"] != a["provenance"]["config_hash"]);
}

TEST_CASE("cli: lisa is gated on the global test") {
  const auto dir = testing::scratch("cli_gate");
  // Permutation p-values are at least 1/1000, so this alpha always refuses.
  const auto refused = cli(with_world(dir, {"lisa", "--alpha", "0.0005"}));
  CHECK(refused.code == geostrata::cli::kExitRefused);
  CHECK(refused.err.rfind("refused: ", 0) == 0);
  CHECK(!fs::exists(dir / "lisa.json"));

  const auto forced = cli(with_world(dir, {"lisa", "--alpha", "0.0005", "--force"}));
  CHECK(forced.code == geostrata::cli::kExitOk);
  CHECK(fs::exists(dir / "lisa.json"));
  CHECK(fs::exists(dir / "lisa.geojson"));
}

TEST_CASE("cli: select-regions follows the selection rule") {
  const auto dir = testing::scratch("cli_select");
  REQUIRE(cli(with_world(dir, {"lisa"})).code == 0);
  REQUIRE(cli(with_world(dir, {"gistar"})).code == 0);
  REQUIRE(cli(with_world(dir, {"select-regions"})).code == 0);
  const json sel = read(dir / "selected_regions.json");
  std::set<std::string> selected;
  for (const auto& id : sel["selected"]) selected.insert(id.get<std::string>());
  REQUIRE(sel["regions"].size() == 16);
  for (const auto& r : sel["regions"]) {
    const std::string cluster = r["cluster"];
    const std::string spot = r["hotspot"];
    const bool positive = cluster == "HighHigh" || cluster == "LowLow";
    const bool negative = cluster == "HighLow" || cluster == "LowHigh";
    const bool hot = spot == "hot" || spot == "cold";
    const bool want = (positive && hot) || negative;
    CHECK(selected.count(r["id"].get<std::string>()) == static_cast<std::size_t>(want));
    CHECK(r["selected"] == want);
  }
  CHECK(read(dir / "selected_regions.geojson")["features"].size() == selected.size());
}

TEST_CASE("cli: sample is deterministic and conserves counts") {
  const auto a = testing::scratch("cli_sample_a");
  const auto b = testing::scratch("cli_sample_b");
  REQUIRE(cli(with_world(a, {"select-regions"})).code == 0);
  REQUIRE(cli(with_world(b, {"select-regions"})).code == 0);
  REQUIRE(cli(with_world(a, {"sample"})).code == 0);
  REQUIRE(cli(with_world(b, {"--threads", "1", "sample"})).code == 0);
  CHECK(testing::slurp(a / "samples.geojson") == testing::slurp(b / "samples.geojson"));
  CHECK(testing::slurp(a / "allocation.json") == testing::slurp(b / "allocation.json"));

  const json plan = read(a / "allocation.json");
  std::int64_t sum = 0;
  for (const auto& r : plan["per_region"]) sum += r["samples"].get<std::int64_t>();
  CHECK(sum == 30);
  CHECK(read(a / "samples.geojson")["features"].size() == 30);
}

TEST_CASE("cli: zero samples and clamping") {
  const auto dir = testing::scratch("cli_sample_edge");
  REQUIRE(cli(with_world(dir, {"select-regions"})).code == 0);
  REQUIRE(cli(with_world(dir, {"sample", "--total-samples", "0"})).code == 0);
  CHECK(read(dir / "samples.geojson")["features"].empty());

  const auto infeasible = cli(with_world(dir, {"sample", "--total-samples", "5000"}));
  CHECK(infeasible.code == geostrata::cli::kExitInputError);
  CHECK(infeasible.err.find("infeasible") != std::string::npos);

  REQUIRE(cli(with_world(dir, {"sample", "--total-samples", "5000", "--clamp"})).code == 0);
  const json plan = read(dir / "allocation.json");
  CHECK(!plan["warnings"].empty());
  bool noted = false;
  for (const auto& t : plan["rounding_trace"]) noted = noted || t.contains("note");
  CHECK(noted);
}

TEST_CASE("cli: taxonomy add, merge, map, export") {
  const auto dir = testing::scratch("cli_taxonomy");
  const std::string before = testing::slurp(seed_taxonomy());
  const auto base = [&](std::vector<std::string> tail) {
    std::vector<std::string> args{"--out-dir", dir.string(), "--quiet", "taxonomy"};
    args.insert(args.end(), tail.begin(), tail.end());
    return args;
  };
  const std::string dict = (testing::source_dir() / "data/taxonomy/dictionary.json").string();

  REQUIRE(cli(base({"add", "--taxonomy", seed_taxonomy(), "--dictionary", dict, "--name", "farmyard",
                    "--description", "buildings for keeping animals, or crop supplies"}))
              .code == 0);
  const json placement = read(dir / "placement.json");
  CHECK(placement["parent"] == "building");
  CHECK(fs::exists(dir / "taxonomy.v2.json"));

  const auto dup = cli(base({"add", "--taxonomy", seed_taxonomy(), "--dictionary", dict, "--name", "graveyard"}));
  CHECK(dup.code == geostrata::cli::kExitInputError);
  CHECK(dup.err.find("already present") != std::string::npos);

  REQUIRE(cli(base({"merge", "--taxonomy", seed_taxonomy(), "--dictionary", dict})).code == 0);
  CHECK(read(dir / "merge_report.json")["merges"].size() == 2);
  const fs::path merged = dir / "taxonomy.v2.json";
  const json merged_doc = read(merged);
  CHECK(merged_doc["version"] == 2);

  const auto sub = testing::scratch("cli_taxonomy_again");
  REQUIRE(cli({"--out-dir", sub.string(), "taxonomy", "merge", "--taxonomy", merged.string(), "--dictionary", dict})
              .code == 0);
  CHECK(read(sub / "merge_report.json")["merges"].empty());
  CHECK(fs::exists(sub / "taxonomy.v3.json"));

  const auto labels = dir / "labels.csv";
  testing::spit(labels, "image_id,label_name\na,pond\nb,spaceport\n");
  REQUIRE(cli(base({"map", "--taxonomy", seed_taxonomy(), "--labels", labels.string()})).code == 0);
  const json rejects = read(dir / "rejects.json");
  CHECK(rejects["rejects"] == json::array({"spaceport"}));

  CHECK(testing::slurp(seed_taxonomy()) == before);

  // Exporting onto the input path is refused and leaves the file alone.
  const auto inplace = testing::scratch("cli_taxonomy_inplace");
  fs::copy_file(seed_taxonomy(), inplace / "taxonomy.v1.json");
  const auto r = cli({"--out-dir", inplace.string(), "taxonomy", "export", "--taxonomy",
                      (inplace / "taxonomy.v1.json").string()});
  CHECK(r.code == geostrata::cli::kExitInputError);
  CHECK(r.err.find("refusing to overwrite") != std::string::npos);
  CHECK(testing::slurp(inplace / "taxonomy.v1.json") == before);
}

TEST_CASE("cli: eval reports all cutoffs and depends on the level") {
  const auto dir = testing::scratch("cli_eval");
  REQUIRE(cli(with_world(dir, {"eval"})).code == 0);
  const json l3 = read(dir / "metrics.json");
  for (const char* n : {"5", "10", "20", "50", "100"}) CHECK(l3["mean"]["NDCG"].contains(n));
  const std::string table = testing::slurp(dir / "metrics.txt");
  CHECK(table.find("@50") != std::string::npos);

  REQUIRE(cli(with_world(dir, {"eval", "--level", "2"})).code == 0);
  const json l2 = read(dir / "metrics.json");
  CHECK(l2["level"] == 2);
  CHECK(l2["mean"]["ACG"] != l3["mean"]["ACG"]);

  REQUIRE(cli(with_world(dir, {"eval", "--cutoffs", "1,3"})).code == 0);
  CHECK(read(dir / "metrics.json")["cutoffs"] == json::array({1, 3}));

  testing::spit(dir / "ghost.txt", "img_000 ghost_1 1 0.9\nimg_000 img_001 2 0.5\n");
  const auto bad = cli(with_world(dir, {"eval", "--run", (dir / "ghost.txt").string()}));
  CHECK(bad.code == geostrata::cli::kExitInputError);
  CHECK(bad.err.find("ghost_1") != std::string::npos);
}
