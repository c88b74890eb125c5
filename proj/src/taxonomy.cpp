#include "geostrata/taxonomy.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "geostrata/error.hpp"

namespace geostrata {

using nlohmann::json;

LabelTree LabelTree::from_json(const json& doc) {
  LabelTree tree;
  tree.version_ = doc.value("version", std::uint64_t{0});
  for (const auto& item : doc.at("nodes")) {
    LabelNode n;
    n.id = item.at("id").get<std::string>();
    n.name = normalize_label(item.at("name").get<std::string>());
    n.level = item.at("level").get<int>();
    if (item.contains("parent") && !item["parent"].is_null()) n.parent = item["parent"].get<std::string>();
    n.description = item.value("description", "");
    for (const auto& s : item.value("synonyms", json::array())) n.synonyms.insert(normalize_label(s.get<std::string>()));
    n.frequency = item.value("frequency", std::uint64_t{0});
    if (n.id.empty()) throw Error("taxonomy node with empty id");
    if (tree.nodes_.count(n.id)) throw Error("duplicate taxonomy node id '" + n.id + "'");
    tree.check_label_free(n.name);
    tree.label_index_[n.name] = n.id;
    for (const auto& s : n.synonyms) {
      tree.check_label_free(s);
      tree.label_index_[s] = n.id;
    }
    tree.nodes_.emplace(n.id, std::move(n));
  }
  tree.validate();
  return tree;
}

LabelTree LabelTree::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("file not found: " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(path.string() + ": malformed taxonomy: " + e.what());
  }
}

json LabelTree::to_json() const {
  json nodes = json::array();
  // Parents before children: by level, then id.
  std::vector<const LabelNode*> ordered;
  for (const auto& [id, n] : nodes_) ordered.push_back(&n);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const LabelNode* a, const LabelNode* b) { return a->level < b->level; });
  for (const LabelNode* n : ordered) {
    nodes.push_back({{"id", n->id},
                     {"name", n->name},
                     {"level", n->level},
                     {"parent", n->parent ? json(*n->parent) : json(nullptr)},
                     {"description", n->description},
                     {"synonyms", n->synonyms},
                     {"frequency", n->frequency}});
  }
  return {{"version", version_}, {"nodes", std::move(nodes)}};
}

const LabelNode& LabelTree::node(const std::string& id) const {
  const auto it = nodes_.find(id);
  if (it == nodes_.end()) throw Error("unknown taxonomy node '" + id + "'");
  return it->second;
}

const LabelNode* LabelTree::find_label(std::string_view label) const {
  const auto it = label_index_.find(normalize_label(label));
  return it == label_index_.end() ? nullptr : &nodes_.at(it->second);
}

std::vector<std::string> LabelTree::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, n] : nodes_) out.push_back(id);
  return out;
}

std::vector<std::string> LabelTree::roots() const { return at_level(1); }

std::vector<std::string> LabelTree::children(const std::string& id) const {
  std::vector<std::string> out;
  for (const auto& [cid, n] : nodes_)
    if (n.parent && *n.parent == id) out.push_back(cid);
  return out;
}

std::vector<std::string> LabelTree::at_level(int level) const {
  std::vector<std::string> out;
  for (const auto& [id, n] : nodes_)
    if (n.level == level) out.push_back(id);
  return out;
}

std::size_t LabelTree::count_at_level(int level) const { return at_level(level).size(); }

std::optional<std::string> LabelTree::ancestor_at(const std::string& id, int level) const {
  const LabelNode* n = &node(id);
  if (n->level < level) return std::nullopt;
  while (n->level > level) n = &node(*n->parent);
  return n->id;
}

bool LabelTree::is_ancestor(const std::string& ancestor, const std::string& id) const {
  const LabelNode* n = &node(id);
  while (n->parent) {
    if (*n->parent == ancestor) return true;
    n = &node(*n->parent);
  }
  return false;
}

MatchCandidate LabelTree::candidate(const std::string& id) const {
  const LabelNode& n = node(id);
  MatchCandidate c{n.id, n.name, n.description, {n.synonyms.begin(), n.synonyms.end()}, {}};
  std::vector<std::string> stack = children(id);
  while (!stack.empty()) {
    const std::string cur = stack.back();
    stack.pop_back();
    const LabelNode& d = node(cur);
    c.inherited_terms.push_back(d.name);
    c.inherited_terms.insert(c.inherited_terms.end(), d.synonyms.begin(), d.synonyms.end());
    for (auto& k : children(cur)) stack.push_back(std::move(k));
  }
  std::sort(c.inherited_terms.begin(), c.inherited_terms.end());
  return c;
}

void LabelTree::check_label_free(const std::string& label, const std::string& except_id) const {
  if (label.empty()) throw Error("empty label name");
  const auto it = label_index_.find(label);
  if (it != label_index_.end() && it->second != except_id)
    throw Error("label '" + label + "' already present (node '" + it->second + "')");
}

std::string LabelTree::fresh_id(const std::string& name) const {
  std::string base;
  for (const char ch : name) base.push_back(ch == ' ' ? '_' : ch);
  std::string id = base;
  for (int k = 2; nodes_.count(id); ++k) id = base + "_" + std::to_string(k);
  return id;
}

std::string LabelTree::add_node(const std::string& name, const std::string& description,
                                const std::optional<std::string>& parent,
                                const std::set<std::string>& synonyms, std::uint64_t frequency) {
  LabelNode n;
  n.name = normalize_label(name);
  n.description = description;
  n.frequency = frequency;
  check_label_free(n.name);
  for (const auto& s : synonyms) {
    const std::string ns = normalize_label(s);
    if (ns == n.name) continue;
    check_label_free(ns);
    n.synonyms.insert(ns);
  }
  if (parent) {
    const LabelNode& p = node(*parent);
    if (p.level >= kMaxLabelLevel)
      throw Error("cannot add a child below level " + std::to_string(kMaxLabelLevel));
    n.level = p.level + 1;
    n.parent = parent;
  }
  n.id = fresh_id(n.name);
  label_index_[n.name] = n.id;
  for (const auto& s : n.synonyms) label_index_[s] = n.id;
  const std::string id = n.id;
  nodes_.emplace(id, std::move(n));
  return id;
}

void LabelTree::add_synonym(const std::string& id, const std::string& synonym) {
  const std::string s = normalize_label(synonym);
  check_label_free(s, id);
  LabelNode& n = nodes_.at(node(id).id);
  if (s == n.name) return;
  n.synonyms.insert(s);
  label_index_[s] = id;
}

void LabelTree::set_frequency(const std::string& id, std::uint64_t frequency) {
  nodes_.at(node(id).id).frequency = frequency;
}

void LabelTree::absorb(const std::string& survivor, const std::string& absorbed) {
  if (survivor == absorbed) throw Error("cannot merge a node into itself");
  LabelNode& s = nodes_.at(node(survivor).id);
  LabelNode& a = nodes_.at(node(absorbed).id);
  if (s.level != a.level)
    throw Error("merge of '" + a.name + "' into '" + s.name + "' crosses levels");
  s.synonyms.insert(a.name);
  s.synonyms.insert(a.synonyms.begin(), a.synonyms.end());
  label_index_[a.name] = survivor;
  for (const auto& syn : a.synonyms) label_index_[syn] = survivor;
  s.frequency += a.frequency;
  for (auto& [id, n] : nodes_)
    if (n.parent && *n.parent == absorbed) n.parent = survivor;
  nodes_.erase(absorbed);
}

void LabelTree::validate() const {
  std::map<std::string, std::string> seen;
  auto claim = [&](const std::string& label, const std::string& id) {
    if (label.empty() || label != normalize_label(label))
      throw Error("node '" + id + "' has a non-normalized label '" + label + "'");
    const auto [it, fresh] = seen.emplace(label, id);
    if (!fresh && it->second != id)
      throw Error("label '" + label + "' used by both '" + it->second + "' and '" + id + "'");
  };
  for (const auto& [id, n] : nodes_) {
    if (n.id != id) throw Error("node id mismatch for '" + id + "'");
    if (n.level < 1 || n.level > kMaxLabelLevel)
      throw Error("node '" + id + "' has level " + std::to_string(n.level));
    if (n.level == 1 && n.parent) throw Error("level-1 node '" + id + "' has a parent");
    if (n.level > 1) {
      if (!n.parent) throw Error("node '" + id + "' at level " + std::to_string(n.level) + " has no parent");
      const auto p = nodes_.find(*n.parent);
      if (p == nodes_.end()) throw Error("node '" + id + "' has missing parent '" + *n.parent + "'");
      if (p->second.level != n.level - 1)
        throw Error("node '" + id + "' is not one level below its parent");
    }
    claim(n.name, id);
    for (const auto& s : n.synonyms) claim(s, id);
  }
  if (seen.size() != label_index_.size()) throw Error("taxonomy label index out of sync");
  for (const auto& [label, id] : seen) {
    const auto it = label_index_.find(label);
    if (it == label_index_.end() || it->second != id) throw Error("taxonomy label index out of sync");
  }
}

// ---------------------------------------------------------------------------

Placement include_novel_label(LabelTree& tree, const MatchQuery& label, SemanticMatcher& matcher,
                              const InclusionThresholds& thresholds) {
  const std::string name = normalize_label(label.name);
  if (const LabelNode* existing = tree.find_label(name))
    throw Error("label '" + name + "' already present (node '" + existing->id + "')");

  std::vector<MatchCandidate> roots;
  for (const auto& id : tree.roots())
    if (id != kUnclassifiedId) roots.push_back(tree.candidate(id));

  Placement placement;
  const MatchResult root = matcher.best_match(label, roots);
  if (!root.id || root.score < thresholds.floor) {
    if (!tree.contains(kUnclassifiedId)) tree.add_node(kUnclassifiedId, "labels without a semantic match", std::nullopt);
    placement.parent = kUnclassifiedId;
  } else {
    std::string current = *root.id;
    placement.path.emplace_back(current, root.score);
    const MatchCandidate query_node{"", name, label.description, {}, {}};
    for (;;) {
      std::vector<MatchCandidate> kids;
      for (const auto& id : tree.children(current)) kids.push_back(tree.candidate(id));
      if (kids.empty()) break;
      const MatchResult best = matcher.best_match(label, kids);
      if (!best.id) break;
      const MatchCandidate& kid = tree.candidate(*best.id);
      if (matcher.is_duplicate(query_node, kid, DuplicateKind::Synonym) ||
          matcher.is_duplicate(query_node, kid, DuplicateKind::Function)) {
        tree.add_synonym(*best.id, name);
        tree.bump_version();
        placement.parent = tree.node(*best.id).parent;
        placement.node_id = *best.id;
        placement.level = tree.node(*best.id).level;
        placement.absorbed_as_synonym = true;
        placement.path.emplace_back(*best.id, best.score);
        return placement;
      }
      if (best.score < thresholds.descend) break;
      current = *best.id;
      placement.path.emplace_back(current, best.score);
    }
    const LabelNode& deepest = tree.node(current);
    placement.parent = deepest.level < kMaxLabelLevel ? deepest.id : *deepest.parent;
  }
  placement.node_id = tree.add_node(name, label.description, placement.parent);
  placement.level = tree.node(placement.node_id).level;
  tree.bump_version();
  return placement;
}

std::string to_string(MergeReason r) {
  switch (r) {
  case MergeReason::Synonym: return "synonym";
  case MergeReason::Spelling: return "spelling";
  case MergeReason::Function: return "function";
  }
  return "synonym";
}

namespace {

bool spelling_variant(const std::string& a, const std::string& b) {
  return a.size() >= 5 && b.size() >= 5 && edit_distance(a, b) <= 1;
}

// One scan over all node pairs; applies the first acceptable merge and
// returns true, or returns false when nothing is left to merge.
bool merge_one(LabelTree& tree, SemanticMatcher& matcher, bool function_pass, MergeReport& report,
               std::set<std::pair<std::string, std::string>>& skipped_pairs) {
  const auto ids = tree.ids();
  std::vector<MatchCandidate> cands;
  cands.reserve(ids.size());
  for (const auto& id : ids) cands.push_back(tree.candidate(id));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      const LabelNode& a = tree.node(ids[i]);
      const LabelNode& b = tree.node(ids[j]);
      std::optional<MergeReason> reason;
      if (function_pass) {
        if (matcher.is_duplicate(cands[i], cands[j], DuplicateKind::Function)) reason = MergeReason::Function;
      } else if (matcher.is_duplicate(cands[i], cands[j], DuplicateKind::Synonym)) {
        reason = MergeReason::Synonym;
      } else if (spelling_variant(a.name, b.name)) {
        reason = MergeReason::Spelling;
      }
      if (!reason) continue;
      if (a.level != b.level || tree.is_ancestor(a.id, b.id) || tree.is_ancestor(b.id, a.id)) {
        if (skipped_pairs.emplace(a.id, b.id).second)
          report.skipped.push_back({a.id, b.id, *reason,
                                    "levels " + std::to_string(a.level) + " and " +
                                        std::to_string(b.level) + " differ"});
        continue;
      }
      const bool a_wins = a.frequency != b.frequency ? a.frequency > b.frequency : a.name < b.name;
      const LabelNode& survivor = a_wins ? a : b;
      const LabelNode& absorbed = a_wins ? b : a;
      MergeRecord rec{survivor.id, {absorbed.name}, *reason};
      rec.absorbed_names.insert(rec.absorbed_names.end(), absorbed.synonyms.begin(), absorbed.synonyms.end());
      tree.absorb(survivor.id, absorbed.id);
      report.merges.push_back(std::move(rec));
      return true;
    }
  }
  return false;
}

} // namespace

MergeReport consolidate_duplicates(LabelTree& tree, SemanticMatcher& matcher) {
  tree.validate();
  MergeReport report;
  std::set<std::pair<std::string, std::string>> skipped_pairs;
  while (merge_one(tree, matcher, false, report, skipped_pairs)) {}
  while (merge_one(tree, matcher, true, report, skipped_pairs)) {}
  tree.bump_version();
  return report;
}

MappingResult map_labels(LabelTree& tree, const std::map<std::string, std::uint64_t>& counts) {
  MappingResult result;
  std::map<std::string, std::uint64_t> freq;
  for (const auto& [name, count] : counts) {
    const LabelNode* n = tree.find_label(name);
    if (!n) {
      result.rejects.push_back(name);
      continue;
    }
    freq[n->id] += count;
    result.accepted_total += count;
  }
  for (const auto& id : tree.ids()) tree.set_frequency(id, freq.count(id) ? freq[id] : 0);
  tree.bump_version();

  std::set<std::string> keep;
  for (const auto& [id, f] : freq) {
    if (f == 0) continue;
    std::optional<std::string> cur = id;
    while (cur && keep.insert(*cur).second) cur = tree.node(*cur).parent;
  }
  json nodes = json::array();
  const json full = tree.to_json();
  for (const auto& n : full["nodes"])
    if (keep.count(n["id"].get<std::string>())) nodes.push_back(n);
  result.subtree = LabelTree::from_json({{"version", tree.version()}, {"nodes", std::move(nodes)}});
  return result;
}

std::map<std::string, std::uint64_t> read_image_label_counts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("file not found: " + path.string());
  std::map<std::string, std::set<std::string>> images;
  std::string line;
  int line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw Error(path.string() + ":" + std::to_string(line_no) + ": expected image_id,label_name");
    const std::string image = trim(line.substr(0, comma));
    const std::string label = trim(line.substr(comma + 1));
    if (line_no == 1 && image == "image_id") continue;
    images[label].insert(image);
  }
  std::map<std::string, std::uint64_t> out;
  for (const auto& [label, set] : images) out[label] = set.size();
  return out;
}

std::set<std::string> ancestor_closure(const LabelTree& tree, const std::set<std::string>& labels,
                                       int level) {
  std::set<std::string> out;
  for (const auto& id : labels)
    if (auto a = tree.ancestor_at(id, level)) out.insert(*a);
  return out;
}

json to_json(const Placement& p) {
  json path = json::array();
  for (const auto& [id, score] : p.path) path.push_back({{"id", id}, {"score", score}});
  return {{"parent", p.parent ? json(*p.parent) : json(nullptr)},
          {"node_id", p.node_id},
          {"level", p.level},
          {"absorbed_as_synonym", p.absorbed_as_synonym},
          {"path", std::move(path)}};
}

json to_json(const MergeReport& r) {
  json merges = json::array();
  for (const auto& m : r.merges)
    merges.push_back({{"survivor", m.survivor_id}, {"absorbed", m.absorbed_names}, {"reason", to_string(m.reason)}});
  json skipped = json::array();
  for (const auto& s : r.skipped)
    skipped.push_back({{"a", s.a}, {"b", s.b}, {"reason", to_string(s.reason)}, {"why", s.why}});
  return {{"merges", std::move(merges)}, {"skipped", std::move(skipped)}};
}

} // namespace geostrata
