#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "geostrata/error.hpp"
#include "geostrata/matcher.hpp"
#include "support.hpp"

using namespace geostrata;
using nlohmann::json;

TEST_CASE("label normalization and tokens") {
  CHECK(normalize_label("  Car \t Park ") == "car park");
  CHECK(normalize_label("") == "");
  CHECK(label_tokens("Buildings for keeping animals, or crop supplies") ==
        std::vector<std::string>{"building", "keeping", "animal", "crop", "supply"});
  CHECK(label_tokens("grass") == std::vector<std::string>{"grass"});
}

TEST_CASE("edit distance counts adjacent transpositions once") {
  CHECK(edit_distance("reservior", "reservoir") == 1);
  CHECK(edit_distance("ca", "ac") == 1);
  CHECK(edit_distance("kitten", "sitting") == 3);
  CHECK(edit_distance("", "abc") == 3);
  CHECK(edit_distance("pond", "pond") == 0);
}

TEST_CASE("dictionary matcher score tiers") {
  DictionaryMatcher m(
      json::parse(R"({"synonyms": [["cemetery", "graveyard"]], "keywords": {"building area": ["house"]}})"));
  const MatchCandidate cem{"cemetery", "cemetery", "", {}, {}};
  CHECK(m.score({"graveyard", "", ""}, cem) == 1.0);
  CHECK(m.score({"old burial site", "a graveyard by the church", ""}, cem) == 0.9);
  const MatchCandidate infra{"infrastructure", "infrastructure", "", {}, {"cemetery", "school"}};
  CHECK(m.score({"crypt", "under a graveyard", ""}, infra) == 0.7);
  const MatchCandidate area{"building_area", "building area", "", {}, {}};
  CHECK(m.score({"farmhouse", "a house on a farm", ""}, area) == 0.9);
  CHECK(m.score({"tower", "tall building", ""}, area) == 0.25);
  CHECK(m.score({"lake", "", ""}, area) == 0.0);

  const std::vector<MatchCandidate> both{area, cem};
  const auto best = m.best_match({"graveyard", "", ""}, both);
  CHECK(best.id == std::optional<std::string>("cemetery"));
  CHECK(!m.best_match({"lake", "", ""}, both).id);
}

TEST_CASE("dictionary matcher duplicates") {
  DictionaryMatcher m(json::parse(R"({"synonyms": [["cemetery", "graveyard"]], "functional": [["church", "chapel"]]})"));
  const MatchCandidate cem{"a", "cemetery", "", {}, {}};
  const MatchCandidate grave{"b", "graveyard", "", {}, {}};
  const MatchCandidate church{"c", "church", "", {}, {}};
  const MatchCandidate chapel{"d", "chapel", "", {}, {}};
  CHECK(m.is_duplicate(cem, grave, DuplicateKind::Synonym));
  CHECK(!m.is_duplicate(cem, grave, DuplicateKind::Function));
  CHECK(m.is_duplicate(church, chapel, DuplicateKind::Function));
  CHECK(!m.is_duplicate(church, chapel, DuplicateKind::Synonym));
  const MatchCandidate tagged{"e", "burial ground", "", {"cemetery"}, {}};
  CHECK(m.is_duplicate(tagged, cem, DuplicateKind::Synonym));
}

namespace {

// Minimal matcher service on a loopback port.
struct FakeService {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> calls{0};

  explicit FakeService(int delay_ms = 0) {
    server.Post("/best_match", [this, delay_ms](const httplib::Request& req, httplib::Response& res) {
      ++calls;
      if (delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
      const json body = json::parse(req.body);
      const auto& cands = body["candidates"];
      json out = {{"best", nullptr}, {"score", 0.0}};
      for (const auto& c : cands)
        if (body["query"]["description"].get<std::string>().find(c["name"].get<std::string>()) != std::string::npos)
          out = {{"best", c["id"]}, {"score", 0.8}};
      res.set_content(out.dump(), "application/json");
    });
    server.Post("/is_duplicate", [this](const httplib::Request& req, httplib::Response& res) {
      ++calls;
      const json body = json::parse(req.body);
      res.set_content(json{{"duplicate", body["kind"] == "function"}}.dump(), "application/json");
    });
    server.Post("/broken", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~FakeService() {
    server.stop();
    thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

} // namespace

TEST_CASE("remote matcher: requests, transcript and replay") {
  FakeService service;
  const auto dir = testing::scratch("remote_matcher");
  const auto transcript = dir / "t.jsonl";
  RemoteMatcher remote(service.url(), std::chrono::milliseconds(2000), transcript);
  const std::vector<MatchCandidate> cands{{"w", "water", "", {}, {}}, {"r", "road", "", {}, {}}};
  const MatchQuery q{"ferry", "boat across the water", ""};
  const auto best = remote.best_match(q, cands);
  CHECK(best.id == std::optional<std::string>("w"));
  CHECK(best.score == 0.8);
  CHECK(remote.is_duplicate(cands[0], cands[1], DuplicateKind::Function));
  CHECK(!remote.is_duplicate(cands[0], cands[1], DuplicateKind::Synonym));
  CHECK(service.calls == 3);

  const std::string log = testing::slurp(transcript);
  CHECK(std::count(log.begin(), log.end(), '\n') == 3);

  ReplayMatcher replay(transcript);
  const auto again = replay.best_match(q, cands);
  CHECK(again.id == best.id);
  CHECK(again.score == best.score);
  CHECK(replay.is_duplicate(cands[0], cands[1], DuplicateKind::Function));
  CHECK(!replay.is_duplicate(cands[0], cands[1], DuplicateKind::Synonym));
  CHECK(service.calls == 3);
  CHECK_THROWS_WITH_AS(replay.best_match({"ferry", "other text", ""}, cands),
                       doctest::Contains("no response for /best_match"), Error);
}

TEST_CASE("remote matcher: transport failures carry retry advice") {
  int dead_port = 0;
  {
    FakeService probe;
    dead_port = probe.port;
  }
  RemoteMatcher dead("http://127.0.0.1:" + std::to_string(dead_port), std::chrono::milliseconds(500));
  const std::vector<MatchCandidate> cands{{"w", "water", "", {}, {}}};
  CHECK_THROWS_WITH_AS(dead.best_match({"x", "", ""}, cands), doctest::Contains("retry"), Error);

  FakeService slow(600);
  RemoteMatcher impatient(slow.url(), std::chrono::milliseconds(100));
  CHECK_THROWS_WITH_AS(impatient.best_match({"x", "", ""}, cands), doctest::Contains("transport failure"), Error);
}

TEST_CASE("replay matcher: missing transcript") {
  CHECK_THROWS_WITH_AS(ReplayMatcher(testing::scratch("replay_missing") / "none.jsonl"),
                       doctest::Contains("file not found"), Error);
}
