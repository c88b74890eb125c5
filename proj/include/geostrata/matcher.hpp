#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace geostrata {

struct MatchQuery {
  std::string name;
  std::string description;
  std::string category; // source-system parent tag, e.g. OSM "amenity"
};

/// A tree node as the matcher sees it. `inherited_terms` holds names and
/// synonyms of all descendants: a query related to a descendant is related
/// to the node.
struct MatchCandidate {
  std::string id;
  std::string name;
  std::string description;
  std::vector<std::string> synonyms;
  std::vector<std::string> inherited_terms;
};

struct MatchResult {
  std::optional<std::string> id;
  double score = 0.0; // in [0, 1]
};

enum class DuplicateKind { Synonym, Function };

std::string to_string(DuplicateKind kind);

/// Semantic judgement used by the taxonomy procedures. Implementations:
/// DictionaryMatcher (offline, deterministic), RemoteMatcher (HTTP JSON
/// service with transcript logging) and ReplayMatcher (answers from a
/// recorded transcript).
class SemanticMatcher {
public:
  virtual ~SemanticMatcher() = default;
  virtual MatchResult best_match(const MatchQuery& query,
                                 std::span<const MatchCandidate> candidates) = 0;
  virtual bool is_duplicate(const MatchCandidate& a, const MatchCandidate& b, DuplicateKind kind) = 0;
};

/// Lowercase, trimmed, internal whitespace collapsed to one space.
std::string normalize_label(std::string_view s);

/// Normalized word tokens with light plural stripping and stop words removed.
std::vector<std::string> label_tokens(std::string_view s);

/// Optimal-string-alignment distance (adjacent transpositions cost 1).
std::size_t edit_distance(std::string_view a, std::string_view b);

/// Dictionary-backed matcher.
///
/// Dictionary JSON:
///   {"synonyms":   [["cemetery", "graveyard"], ...],
///    "functional": [["car park", "parking"], ...],
///    "keywords":   {"building": ["house", ...], ...}}
///
/// Scoring of a candidate against a query (name + description + category):
///   1.0  query name equals one of the candidate's own terms
///   0.9  one of its own terms occurs as a phrase in the query text
///   0.7  an inherited term (or its dictionary synonym) occurs in the query
///   0.5 * fraction of tokens of the best own term found in the query otherwise
/// Own terms are the name, synonyms, dictionary synonyms and keywords.
/// Ties go to the earlier candidate.
class DictionaryMatcher : public SemanticMatcher {
public:
  DictionaryMatcher() = default;
  explicit DictionaryMatcher(const nlohmann::json& dictionary);
  static DictionaryMatcher load(const std::filesystem::path& path);

  MatchResult best_match(const MatchQuery& query, std::span<const MatchCandidate> candidates) override;
  bool is_duplicate(const MatchCandidate& a, const MatchCandidate& b, DuplicateKind kind) override;

  double score(const MatchQuery& query, const MatchCandidate& candidate) const;

private:
  std::set<std::string> expand(const std::string& term, const std::vector<std::set<std::string>>& groups) const;
  std::set<std::string> own_terms(const MatchCandidate& c) const;

  std::vector<std::set<std::string>> synonym_groups_;
  std::vector<std::set<std::string>> functional_groups_;
  std::map<std::string, std::vector<std::string>> keywords_;
};

/// Client for a matcher service speaking
///   POST /best_match   {"query": {...}, "candidates": [...]} -> {"best": id|null, "score": s}
///   POST /is_duplicate {"a": {...}, "b": {...}, "kind": k}   -> {"duplicate": bool}
/// Every exchange is appended to `transcript` (JSON lines) when set.
class RemoteMatcher : public SemanticMatcher {
public:
  RemoteMatcher(std::string base_url, std::chrono::milliseconds timeout,
                std::optional<std::filesystem::path> transcript = std::nullopt);

  MatchResult best_match(const MatchQuery& query, std::span<const MatchCandidate> candidates) override;
  bool is_duplicate(const MatchCandidate& a, const MatchCandidate& b, DuplicateKind kind) override;

private:
  nlohmann::json post(const std::string& endpoint, const nlohmann::json& body);

  std::string base_url_;
  std::chrono::milliseconds timeout_;
  std::optional<std::filesystem::path> transcript_;
};

/// Answers from a RemoteMatcher transcript; an unrecorded request is an error.
class ReplayMatcher : public SemanticMatcher {
public:
  explicit ReplayMatcher(const std::filesystem::path& transcript);

  MatchResult best_match(const MatchQuery& query, std::span<const MatchCandidate> candidates) override;
  bool is_duplicate(const MatchCandidate& a, const MatchCandidate& b, DuplicateKind kind) override;

private:
  const nlohmann::json& lookup(const std::string& endpoint, const nlohmann::json& request) const;
  std::map<std::string, nlohmann::json> responses_;
};

nlohmann::json best_match_request(const MatchQuery& query, std::span<const MatchCandidate> candidates);
nlohmann::json is_duplicate_request(const MatchCandidate& a, const MatchCandidate& b, DuplicateKind kind);

} // namespace geostrata
