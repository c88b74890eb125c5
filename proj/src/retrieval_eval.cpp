#include "geostrata/retrieval_eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "format.hpp"
#include "geostrata/error.hpp"
#include "geostrata/parallel.hpp"

namespace geostrata {

using nlohmann::json;

std::string to_string(RunDirection d) {
  return d == RunDirection::ImageToText ? "image_to_text" : "text_to_image";
}

RunDirection parse_run_direction(const std::string& s) {
  if (s == "image_to_text") return RunDirection::ImageToText;
  if (s == "text_to_image") return RunDirection::TextToImage;
  throw Error("unknown run direction '" + s + "'");
}

void order_ranked_list(std::vector<RankedItem>& list, const std::string& query_id) {
  std::sort(list.begin(), list.end(), [](const RankedItem& a, const RankedItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.item_id < b.item_id;
  });
  std::set<std::string> seen;
  for (const auto& it : list)
    if (!seen.insert(it.item_id).second)
      throw Error("duplicate item '" + it.item_id + "' in query '" + query_id + "'");
  for (std::size_t i = 0; i < list.size(); ++i) list[i].rank = i + 1;
}

std::size_t shared_labels(const std::set<std::string>& q, const std::set<std::string>& i) {
  std::size_t c = 0;
  auto a = q.begin();
  auto b = i.begin();
  while (a != q.end() && b != i.end()) {
    if (*a < *b) {
      ++a;
    } else if (*b < *a) {
      ++b;
    } else {
      ++c;
      ++a;
      ++b;
    }
  }
  return c;
}

namespace {

void check_cutoff(std::size_t n) {
  if (n == 0) throw Error("cutoff n must be positive");
}

double gain(unsigned c) { return std::ldexp(1.0, static_cast<int>(c)) - 1.0; }

} // namespace

double acg_at_n(std::span<const unsigned> gains, std::size_t n) {
  check_cutoff(n);
  const std::size_t m = std::min(n, gains.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) sum += gains[i];
  return sum / static_cast<double>(n);
}

double dcg_at_n(std::span<const unsigned> gains, std::size_t n) {
  check_cutoff(n);
  const std::size_t m = std::min(n, gains.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) sum += gain(gains[i]) / std::log(2.0 + static_cast<double>(i));
  return sum;
}

double ndcg_at_n(std::span<const unsigned> gains, std::span<const unsigned> gallery_gains,
                 std::size_t n, bool* undefined) {
  std::vector<unsigned> ideal(gallery_gains.begin(), gallery_gains.end());
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  const double z = dcg_at_n(ideal, n);
  if (undefined) *undefined = z <= 0.0;
  if (z <= 0.0) return 0.0;
  return std::clamp(dcg_at_n(gains, n) / z, 0.0, 1.0);
}

double average_precision_at_n(std::span<const unsigned> gains, std::size_t n) {
  check_cutoff(n);
  // Extended precision keeps hand-checkable fractions (5/6) correctly rounded.
  const std::size_t m = std::min(n, gains.size());
  long double sum = 0.0L;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (gains[i] == 0) continue;
    ++hits;
    sum += static_cast<long double>(hits) / static_cast<long double>(i + 1);
  }
  return hits == 0 ? 0.0 : static_cast<double>(sum / static_cast<long double>(hits));
}

double weighted_average_precision_at_n(std::span<const unsigned> gains, std::size_t n) {
  check_cutoff(n);
  const std::size_t m = std::min(n, gains.size());
  long double sum = 0.0L;
  std::uint64_t cum = 0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < m; ++i) {
    cum += gains[i];
    if (gains[i] == 0) continue;
    ++hits;
    sum += static_cast<long double>(cum) / static_cast<long double>(i + 1);
  }
  return hits == 0 ? 0.0 : static_cast<double>(sum / static_cast<long double>(hits));
}

std::vector<unsigned> gains_for(const std::string& query_id, std::span<const RankedItem> list,
                                const GroundTruth& truth) {
  const auto q = truth.items.find(query_id);
  if (q == truth.items.end()) throw Error("query '" + query_id + "' missing from ground truth");
  std::vector<unsigned> out;
  out.reserve(list.size());
  for (const auto& it : list) {
    const auto i = truth.items.find(it.item_id);
    if (i == truth.items.end()) throw Error("item '" + it.item_id + "' missing from ground truth");
    out.push_back(static_cast<unsigned>(shared_labels(q->second, i->second)));
  }
  return out;
}

std::vector<std::string> run_gallery(const RankedRun& run) {
  std::set<std::string> all;
  for (const auto& [q, list] : run.queries)
    for (const auto& it : list) all.insert(it.item_id);
  return {all.begin(), all.end()};
}

double map_at_n(const RankedRun& run, const GroundTruth& truth, std::size_t n) {
  check_cutoff(n);
  if (run.queries.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [q, list] : run.queries) sum += average_precision_at_n(gains_for(q, list, truth), n);
  return sum / static_cast<double>(run.queries.size());
}

double wmap_at_n(const RankedRun& run, const GroundTruth& truth, std::size_t n) {
  check_cutoff(n);
  if (run.queries.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [q, list] : run.queries)
    sum += weighted_average_precision_at_n(gains_for(q, list, truth), n);
  return sum / static_cast<double>(run.queries.size());
}

MetricsReport evaluate(const RankedRun& run, const GroundTruth& truth,
                       std::span<const std::size_t> cutoffs,
                       const std::optional<std::vector<std::string>>& gallery, unsigned threads) {
  if (cutoffs.empty()) throw Error("no cutoffs given");
  for (const std::size_t n : cutoffs) check_cutoff(n);

  std::vector<std::string> offenders;
  auto note_unknown = [&](const std::string& id) {
    if (!truth.items.count(id) &&
        std::find(offenders.begin(), offenders.end(), id) == offenders.end())
      offenders.push_back(id);
  };
  for (const auto& [q, list] : run.queries) {
    note_unknown(q);
    for (const auto& it : list) note_unknown(it.item_id);
  }
  const std::vector<std::string> gallery_ids = gallery ? *gallery : run_gallery(run);
  for (const auto& id : gallery_ids) note_unknown(id);
  if (!offenders.empty()) {
    std::string msg = "run references " + std::to_string(offenders.size()) + " unknown item(s):";
    for (std::size_t i = 0; i < std::min<std::size_t>(10, offenders.size()); ++i) msg += " " + offenders[i];
    throw Error(msg);
  }

  MetricsReport report;
  report.cutoffs.assign(cutoffs.begin(), cutoffs.end());
  report.level = truth.level;
  report.warnings = truth.warnings;

  std::vector<const std::string*> qids;
  std::vector<const std::vector<RankedItem>*> lists;
  for (const auto& [q, list] : run.queries) {
    qids.push_back(&q);
    lists.push_back(&list);
  }
  report.per_query.resize(qids.size());
  parallel_for(qids.size(), threads, [&](std::size_t qi) {
    QueryMetrics& m = report.per_query[qi];
    m.query_id = *qids[qi];
    const auto& labels = truth.items.at(m.query_id);
    const auto gains = gains_for(m.query_id, *lists[qi], truth);
    std::vector<unsigned> gallery_gains;
    gallery_gains.reserve(gallery_ids.size());
    for (const auto& id : gallery_ids)
      gallery_gains.push_back(static_cast<unsigned>(shared_labels(labels, truth.items.at(id))));
    m.empty = gains.empty();
    for (const std::size_t n : cutoffs) {
      bool undefined = false;
      m.acg.push_back(acg_at_n(gains, n));
      m.ndcg.push_back(ndcg_at_n(gains, gallery_gains, n, &undefined));
      m.map.push_back(average_precision_at_n(gains, n));
      m.wmap.push_back(weighted_average_precision_at_n(gains, n));
      m.ndcg_undefined = m.ndcg_undefined || undefined;
    }
  });

  const std::size_t k = cutoffs.size();
  report.acg.assign(k, 0.0);
  report.ndcg.assign(k, 0.0);
  report.map.assign(k, 0.0);
  report.wmap.assign(k, 0.0);
  for (const auto& m : report.per_query) {
    if (m.empty) report.warnings.push_back("query '" + m.query_id + "' has an empty ranked list");
    if (m.ndcg_undefined)
      report.warnings.push_back("query '" + m.query_id + "' shares no labels with the gallery; NDCG set to 0");
    for (std::size_t c = 0; c < k; ++c) {
      report.acg[c] += m.acg[c];
      report.ndcg[c] += m.ndcg[c];
      report.map[c] += m.map[c];
      report.wmap[c] += m.wmap[c];
    }
  }
  if (!report.per_query.empty()) {
    const double q = static_cast<double>(report.per_query.size());
    for (std::size_t c = 0; c < k; ++c) {
      report.acg[c] /= q;
      report.ndcg[c] /= q;
      report.map[c] /= q;
      report.wmap[c] /= q;
    }
  }
  return report;
}

RankedRun parse_run(std::string_view text, const std::string& source) {
  RankedRun run;
  std::map<std::string, std::set<std::size_t>> ranks;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::vector<std::string> tok;
    for (std::string t; fields >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (tok.size() != 4) throw Error(where + "expected 'query_id item_id rank score'");
    double rank = 0.0;
    double score = 0.0;
    if (!detail::parse_double(tok[2], rank) || rank < 1 || rank != std::floor(rank))
      throw Error(where + "rank must be a positive integer");
    if (!detail::parse_double(tok[3], score) || !std::isfinite(score))
      throw Error(where + "score is not a finite number");
    if (!ranks[tok[0]].insert(static_cast<std::size_t>(rank)).second)
      throw Error(where + "rank " + tok[2] + " repeated for query '" + tok[0] + "'");
    run.queries[tok[0]].push_back({tok[1], score, static_cast<std::size_t>(rank)});
  }
  for (auto& [q, list] : run.queries) order_ranked_list(list, q);
  return run;
}

RankedRun read_run(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("file not found: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run(ss.str(), path.string());
}

GroundTruth truth_from_json(const json& doc, const LabelTree& tree, int level) {
  if (level != 2 && level != 3) throw Error("evaluation level must be 2 or 3");
  if (!doc.is_object()) throw Error("ground truth must be a JSON object of item -> [labels]");
  GroundTruth truth;
  truth.level = level;
  for (const auto& [item, labels] : doc.items()) {
    if (!labels.is_array() || labels.empty()) throw Error("item '" + item + "' has no labels");
    std::set<std::string> ids;
    for (const auto& l : labels) {
      const std::string name = l.get<std::string>();
      const LabelNode* n = tree.find_label(name);
      if (!n) throw Error("item '" + item + "' uses unknown label '" + name + "'");
      ids.insert(n->id);
    }
    auto lifted = ancestor_closure(tree, ids, level);
    if (lifted.empty())
      truth.warnings.push_back("item '" + item + "' has no label at level " + std::to_string(level));
    truth.items.emplace(item, std::move(lifted));
  }
  return truth;
}

GroundTruth read_truth(const std::filesystem::path& path, const LabelTree& tree, int level) {
  std::ifstream in(path);
  if (!in) throw Error("file not found: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(path.string() + ": malformed JSON: " + e.what());
  }
  return truth_from_json(doc, tree, level);
}

json to_json(const MetricsReport& r) {
  auto series = [&](const std::vector<double>& v) {
    json o = json::object();
    for (std::size_t c = 0; c < r.cutoffs.size(); ++c) o[std::to_string(r.cutoffs[c])] = v[c];
    return o;
  };
  json per_query = json::array();
  for (const auto& m : r.per_query) {
    json q = {{"query_id", m.query_id},
              {"ACG", series(m.acg)},
              {"NDCG", series(m.ndcg)},
              {"MAP", series(m.map)},
              {"WMAP", series(m.wmap)}};
    if (m.ndcg_undefined) q["ndcg_undefined"] = true;
    if (m.empty) q["empty"] = true;
    per_query.push_back(std::move(q));
  }
  return {{"level", r.level},
          {"cutoffs", r.cutoffs},
          {"queries", r.per_query.size()},
          {"mean", {{"ACG", series(r.acg)}, {"NDCG", series(r.ndcg)}, {"MAP", series(r.map)}, {"WMAP", series(r.wmap)}}},
          {"per_query", std::move(per_query)},
          {"warnings", r.warnings}};
}

std::string to_text_table(const MetricsReport& r) {
  std::string out = "metric";
  char buf[32];
  for (const std::size_t n : r.cutoffs) {
    std::snprintf(buf, sizeof buf, "%10s", ("@" + std::to_string(n)).c_str());
    out += buf;
  }
  out += '\n';
  const std::pair<const char*, const std::vector<double>*> rows[] = {
      {"ACG", &r.acg}, {"NDCG", &r.ndcg}, {"MAP", &r.map}, {"WMAP", &r.wmap}};
  for (const auto& [name, values] : rows) {
    std::snprintf(buf, sizeof buf, "%-6s", name);
    out += buf;
    for (const double v : *values) {
      std::snprintf(buf, sizeof buf, "%10.4f", v);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

} // namespace geostrata
