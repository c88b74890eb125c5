#include "geostrata/matcher.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <httplib.h>

#include "geostrata/error.hpp"

namespace geostrata {

using nlohmann::json;

std::string to_string(DuplicateKind kind) {
  return kind == DuplicateKind::Synonym ? "synonym" : "function";
}

std::string normalize_label(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (const char ch : s) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isspace(u)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(u)));
  }
  return out;
}

namespace {

const std::set<std::string>& stop_words() {
  static const std::set<std::string> words{
      "a",  "an", "and", "are", "as",  "at",   "be",  "by", "for",  "from",  "in",
      "is", "it", "of",  "on",  "or",  "that", "the", "to", "with", "would", "typically",
      "part", "tagged", "usually", "which", "this", "its", "may", "can"};
  return words;
}

std::string stem(std::string w) {
  auto ends = [&](std::string_view suf) {
    return w.size() > suf.size() + 2 && w.compare(w.size() - suf.size(), suf.size(), suf) == 0;
  };
  if (ends("ies")) return w.substr(0, w.size() - 3) + "y";
  if (ends("sses")) return w.substr(0, w.size() - 2);
  if (ends("ches") || ends("shes") || ends("xes")) return w.substr(0, w.size() - 2);
  if (ends("s") && !ends("ss") && !ends("us")) return w.substr(0, w.size() - 1);
  return w;
}

bool contains_phrase(const std::vector<std::string>& text, const std::vector<std::string>& phrase) {
  if (phrase.empty() || phrase.size() > text.size()) return false;
  for (std::size_t i = 0; i + phrase.size() <= text.size(); ++i)
    if (std::equal(phrase.begin(), phrase.end(), text.begin() + static_cast<std::ptrdiff_t>(i)))
      return true;
  return false;
}

} // namespace

std::vector<std::string> label_tokens(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty() && !stop_words().count(cur)) out.push_back(stem(cur));
    cur.clear();
  };
  for (const char ch : s) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isalnum(u)) cur.push_back(static_cast<char>(std::tolower(u)));
    else flush();
  }
  flush();
  return out;
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::vector<std::size_t>> d(n + 1, std::vector<std::size_t>(m + 1, 0));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t cost = a[i - 1] == b[j - 1] ? 0 : 1;
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + cost});
      if (i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1])
        d[i][j] = std::min(d[i][j], d[i - 2][j - 2] + 1);
    }
  }
  return d[n][m];
}

// ---------------------------------------------------------------------------

DictionaryMatcher::DictionaryMatcher(const json& dictionary) {
  auto groups = [](const json& list) {
    std::vector<std::set<std::string>> out;
    for (const auto& g : list) {
      std::set<std::string> group;
      for (const auto& term : g) group.insert(normalize_label(term.get<std::string>()));
      out.push_back(std::move(group));
    }
    return out;
  };
  if (dictionary.contains("synonyms")) synonym_groups_ = groups(dictionary["synonyms"]);
  if (dictionary.contains("functional")) functional_groups_ = groups(dictionary["functional"]);
  if (dictionary.contains("keywords")) {
    for (const auto& [name, terms] : dictionary["keywords"].items()) {
      auto& list = keywords_[normalize_label(name)];
      for (const auto& t : terms) list.push_back(normalize_label(t.get<std::string>()));
    }
  }
}

DictionaryMatcher DictionaryMatcher::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("file not found: " + path.string());
  try {
    return DictionaryMatcher(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(path.string() + ": invalid dictionary: " + e.what());
  }
}

std::set<std::string> DictionaryMatcher::expand(const std::string& term,
                                                const std::vector<std::set<std::string>>& groups) const {
  std::set<std::string> out{term};
  for (const auto& g : groups)
    if (g.count(term)) out.insert(g.begin(), g.end());
  return out;
}

std::set<std::string> DictionaryMatcher::own_terms(const MatchCandidate& c) const {
  std::set<std::string> terms;
  std::vector<std::string> base{normalize_label(c.name)};
  for (const auto& s : c.synonyms) base.push_back(normalize_label(s));
  for (const auto& t : base) {
    const auto e = expand(t, synonym_groups_);
    terms.insert(e.begin(), e.end());
    if (const auto it = keywords_.find(t); it != keywords_.end())
      terms.insert(it->second.begin(), it->second.end());
  }
  return terms;
}

double DictionaryMatcher::score(const MatchQuery& query, const MatchCandidate& candidate) const {
  const std::string qname = normalize_label(query.name);
  const auto text = label_tokens(query.name + " " + query.description + " " + query.category);
  const auto own = own_terms(candidate);
  if (own.count(qname)) return 1.0;
  for (const auto& t : own)
    if (contains_phrase(text, label_tokens(t))) return 0.9;
  for (const auto& inherited : candidate.inherited_terms)
    for (const auto& t : expand(normalize_label(inherited), synonym_groups_))
      if (contains_phrase(text, label_tokens(t))) return 0.7;
  double best = 0.0;
  for (const auto& t : own) {
    const auto toks = label_tokens(t);
    if (toks.empty()) continue;
    std::size_t hit = 0;
    for (const auto& tok : toks)
      if (std::find(text.begin(), text.end(), tok) != text.end()) ++hit;
    best = std::max(best, 0.5 * static_cast<double>(hit) / static_cast<double>(toks.size()));
  }
  return best;
}

MatchResult DictionaryMatcher::best_match(const MatchQuery& query,
                                          std::span<const MatchCandidate> candidates) {
  MatchResult best;
  for (const auto& c : candidates) {
    const double s = score(query, c);
    if (s > best.score) best = {c.id, s};
  }
  return best;
}

bool DictionaryMatcher::is_duplicate(const MatchCandidate& a, const MatchCandidate& b,
                                     DuplicateKind kind) {
  const auto& groups = kind == DuplicateKind::Synonym ? synonym_groups_ : functional_groups_;
  std::set<std::string> ta{normalize_label(a.name)}, tb{normalize_label(b.name)};
  for (const auto& s : a.synonyms) ta.insert(normalize_label(s));
  for (const auto& s : b.synonyms) tb.insert(normalize_label(s));
  for (const auto& x : ta) {
    if (tb.count(x)) return true;
    for (const auto& g : groups)
      if (g.count(x))
        for (const auto& y : tb)
          if (g.count(y)) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------

namespace {

json candidate_json(const MatchCandidate& c) {
  return {{"id", c.id},
          {"name", c.name},
          {"description", c.description},
          {"synonyms", c.synonyms},
          {"terms", c.inherited_terms}};
}

std::string replay_key(const std::string& endpoint, const json& request) {
  return endpoint + " " + request.dump();
}

MatchResult parse_best(const json& response) {
  MatchResult r;
  if (response.contains("best") && !response["best"].is_null()) r.id = response["best"].get<std::string>();
  r.score = std::clamp(response.value("score", 0.0), 0.0, 1.0);
  return r;
}

} // namespace

json best_match_request(const MatchQuery& query, std::span<const MatchCandidate> candidates) {
  json cands = json::array();
  for (const auto& c : candidates) cands.push_back(candidate_json(c));
  return {{"query", {{"name", query.name}, {"description", query.description}, {"category", query.category}}},
          {"candidates", std::move(cands)}};
}

json is_duplicate_request(const MatchCandidate& a, const MatchCandidate& b, DuplicateKind kind) {
  return {{"a", candidate_json(a)}, {"b", candidate_json(b)}, {"kind", to_string(kind)}};
}

RemoteMatcher::RemoteMatcher(std::string base_url, std::chrono::milliseconds timeout,
                             std::optional<std::filesystem::path> transcript)
    : base_url_(std::move(base_url)), timeout_(timeout), transcript_(std::move(transcript)) {}

json RemoteMatcher::post(const std::string& endpoint, const json& body) {
  httplib::Client client(base_url_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  const auto res = client.Post(endpoint, body.dump(), "application/json");
  if (!res)
    throw Error("matcher transport failure on " + base_url_ + endpoint + ": " +
                httplib::to_string(res.error()) + "; retry later or use the dictionary matcher");
  if (res->status != 200)
    throw Error("matcher transport failure on " + base_url_ + endpoint + ": HTTP " +
                std::to_string(res->status) + "; retry later or use the dictionary matcher");
  json response;
  try {
    response = json::parse(res->body);
  } catch (const json::exception&) {
    throw Error("matcher returned invalid JSON from " + endpoint);
  }
  if (transcript_) {
    std::ofstream log(*transcript_, std::ios::app);
    log << json{{"endpoint", endpoint}, {"request", body}, {"response", response}}.dump() << '\n';
  }
  return response;
}

MatchResult RemoteMatcher::best_match(const MatchQuery& query, std::span<const MatchCandidate> candidates) {
  return parse_best(post("/best_match", best_match_request(query, candidates)));
}

bool RemoteMatcher::is_duplicate(const MatchCandidate& a, const MatchCandidate& b, DuplicateKind kind) {
  return post("/is_duplicate", is_duplicate_request(a, b, kind)).value("duplicate", false);
}

ReplayMatcher::ReplayMatcher(const std::filesystem::path& transcript) {
  std::ifstream in(transcript);
  if (!in) throw Error("file not found: " + transcript.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line);
    responses_[replay_key(rec.at("endpoint").get<std::string>(), rec.at("request"))] = rec.at("response");
  }
}

const json& ReplayMatcher::lookup(const std::string& endpoint, const json& request) const {
  const auto it = responses_.find(replay_key(endpoint, request));
  if (it == responses_.end()) throw Error("replay transcript has no response for " + endpoint + " request");
  return it->second;
}

MatchResult ReplayMatcher::best_match(const MatchQuery& query, std::span<const MatchCandidate> candidates) {
  return parse_best(lookup("/best_match", best_match_request(query, candidates)));
}

bool ReplayMatcher::is_duplicate(const MatchCandidate& a, const MatchCandidate& b, DuplicateKind kind) {
  return lookup("/is_duplicate", is_duplicate_request(a, b, kind)).value("duplicate", false);
}

} // namespace geostrata
