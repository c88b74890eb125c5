#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "geostrata/matcher.hpp"

namespace geostrata {

inline constexpr int kMaxLabelLevel = 4;
inline constexpr const char* kUnclassifiedId = "unclassified";

struct LabelNode {
  std::string id;
  std::string name; // normalized
  int level = 1;
  std::optional<std::string> parent;
  std::string description;
  std::set<std::string> synonyms; // normalized
  std::uint64_t frequency = 0;
};

/// Hierarchical label taxonomy. Level-1 nodes are roots; every other node
/// sits exactly one level below its parent. Names and synonyms are unique
/// across the tree after normalization.
class LabelTree {
public:
  static LabelTree from_json(const nlohmann::json& doc);
  static LabelTree load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  std::uint64_t version() const { return version_; }
  void bump_version() { ++version_; }

  std::size_t size() const { return nodes_.size(); }
  bool contains(const std::string& id) const { return nodes_.count(id) != 0; }
  const LabelNode& node(const std::string& id) const;
  /// Node whose name or synonym equals `label` after normalization.
  const LabelNode* find_label(std::string_view label) const;

  std::vector<std::string> ids() const;
  std::vector<std::string> roots() const;
  std::vector<std::string> children(const std::string& id) const;
  std::vector<std::string> at_level(int level) const;
  std::size_t count_at_level(int level) const;
  /// Ancestor of `id` at `level`; `id` itself at its own level; nullopt above.
  std::optional<std::string> ancestor_at(const std::string& id, int level) const;
  bool is_ancestor(const std::string& ancestor, const std::string& id) const;

  /// Matcher view of a node: own terms plus the terms of all descendants.
  MatchCandidate candidate(const std::string& id) const;

  /// Inserts a node; returns its id. Throws on any invariant violation.
  std::string add_node(const std::string& name, const std::string& description,
                       const std::optional<std::string>& parent,
                       const std::set<std::string>& synonyms = {}, std::uint64_t frequency = 0);
  void add_synonym(const std::string& id, const std::string& synonym);
  void set_frequency(const std::string& id, std::uint64_t frequency);
  /// Folds `absorbed` into `survivor`: names become synonyms, frequencies add,
  /// children move over. Both must sit at the same level.
  void absorb(const std::string& survivor, const std::string& absorbed);

  /// Full invariant check; throws Error naming the first violation.
  void validate() const;

private:
  std::string fresh_id(const std::string& name) const;
  void check_label_free(const std::string& label, const std::string& except_id = {}) const;

  std::map<std::string, LabelNode> nodes_;
  std::map<std::string, std::string> label_index_; // normalized name/synonym -> id
  std::uint64_t version_ = 0;
};

struct InclusionThresholds {
  double descend = 0.6;
  double floor = 0.3;
};

struct Placement {
  std::optional<std::string> parent;
  std::string node_id;
  int level = 0;
  bool absorbed_as_synonym = false; // the matcher judged it a duplicate of node_id
  std::vector<std::pair<std::string, double>> path; // matched nodes with scores
};

/// Top-down insertion of a label not yet in the tree. Matches among level-1
/// roots, then keeps descending while the best child scores at least
/// `descend`; the label becomes a child of the deepest match (at most level
/// 4). No root at `floor` or better sends the label under the reserved
/// "unclassified" root.
Placement include_novel_label(LabelTree& tree, const MatchQuery& label, SemanticMatcher& matcher,
                              const InclusionThresholds& thresholds = {});

enum class MergeReason { Synonym, Spelling, Function };
std::string to_string(MergeReason r);

struct MergeRecord {
  std::string survivor_id;
  std::vector<std::string> absorbed_names;
  MergeReason reason = MergeReason::Synonym;
};

struct SkippedMerge {
  std::string a;
  std::string b;
  MergeReason reason = MergeReason::Synonym;
  std::string why;
};

struct MergeReport {
  std::vector<MergeRecord> merges;
  std::vector<SkippedMerge> skipped;
  bool empty() const { return merges.empty(); }
};

/// Pass 1 merges synonym and spelling duplicates (matcher synonyms, or
/// transposition-aware edit distance <= 1 between names of >= 5 characters);
/// pass 2 merges functional duplicates. Each pass repeats to a fixed point.
/// The survivor is the more frequent node, ties to the smaller name.
/// Cross-level proposals are skipped and reported.
MergeReport consolidate_duplicates(LabelTree& tree, SemanticMatcher& matcher);

struct MappingResult {
  LabelTree subtree;                 // T*
  std::vector<std::string> rejects;  // names not found in the tree
  std::uint64_t accepted_total = 0;
};

/// Resets all frequencies to the given counts (names or synonyms) and
/// returns the subtree of labelled nodes plus their ancestors.
MappingResult map_labels(LabelTree& tree, const std::map<std::string, std::uint64_t>& counts);

/// Per-label image counts from "image_id,label_name" CSV rows (header
/// optional); an image counts once per label.
std::map<std::string, std::uint64_t> read_image_label_counts(const std::filesystem::path& path);

/// Each label replaced by its ancestor at `level`; labels above it dropped.
std::set<std::string> ancestor_closure(const LabelTree& tree, const std::set<std::string>& labels,
                                       int level);

nlohmann::json to_json(const Placement& p);
nlohmann::json to_json(const MergeReport& r);

} // namespace geostrata
