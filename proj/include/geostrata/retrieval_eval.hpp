#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "geostrata/taxonomy.hpp"

namespace geostrata {

/// Item id -> label node ids at the evaluation level.
struct GroundTruth {
  std::map<std::string, std::set<std::string>> items;
  int level = 3;
  std::vector<std::string> warnings;
};

enum class RunDirection { ImageToText, TextToImage };

std::string to_string(RunDirection d);
RunDirection parse_run_direction(const std::string& s);

struct RankedItem {
  std::string item_id;
  double score = 0.0;
  std::size_t rank = 0; // 1-based, after ordering
};

/// Lists are kept ordered by score descending, ties by item id ascending.
struct RankedRun {
  std::map<std::string, std::vector<RankedItem>> queries;
  RunDirection direction = RunDirection::ImageToText;
};

/// Sorts a list by the run ordering and renumbers ranks. Duplicate items
/// raise an Error.
void order_ranked_list(std::vector<RankedItem>& list, const std::string& query_id = "");

std::size_t shared_labels(const std::set<std::string>& q, const std::set<std::string>& i);

// Metrics over a gain sequence C(q, i) in rank order. Lists shorter than n
// count as padded with zero-gain items. n = 0 raises an Error.
double acg_at_n(std::span<const unsigned> gains, std::size_t n);
double dcg_at_n(std::span<const unsigned> gains, std::size_t n);
/// DCG@n divided by the ideal DCG@n over `gallery_gains`. Returns 0 and sets
/// *undefined when the ideal is 0.
double ndcg_at_n(std::span<const unsigned> gains, std::span<const unsigned> gallery_gains,
                 std::size_t n, bool* undefined = nullptr);
/// Relevance is C >= 1. Zero when nothing relevant is retrieved in the top n.
double average_precision_at_n(std::span<const unsigned> gains, std::size_t n);
double weighted_average_precision_at_n(std::span<const unsigned> gains, std::size_t n);

/// C(q, i) for every item in a query's list.
std::vector<unsigned> gains_for(const std::string& query_id, std::span<const RankedItem> list,
                                const GroundTruth& truth);

/// Default gallery: every item that appears in any list of the run.
std::vector<std::string> run_gallery(const RankedRun& run);

double map_at_n(const RankedRun& run, const GroundTruth& truth, std::size_t n);
double wmap_at_n(const RankedRun& run, const GroundTruth& truth, std::size_t n);

struct QueryMetrics {
  std::string query_id;
  std::vector<double> acg, ndcg, map, wmap; // one per cutoff
  bool ndcg_undefined = false;
  bool empty = false;
};

struct MetricsReport {
  std::vector<std::size_t> cutoffs;
  int level = 3;
  std::vector<double> acg, ndcg, map, wmap; // means over queries
  std::vector<QueryMetrics> per_query;
  std::vector<std::string> warnings;
};

inline const std::vector<std::size_t> kDefaultCutoffs{5, 10, 20, 50, 100};

/// Scores every query at every cutoff. Unknown query or item ids raise an
/// Error naming up to 10 offenders. `gallery` overrides run_gallery().
MetricsReport evaluate(const RankedRun& run, const GroundTruth& truth,
                       std::span<const std::size_t> cutoffs,
                       const std::optional<std::vector<std::string>>& gallery = std::nullopt,
                       unsigned threads = 1);

/// Whitespace separated "query_id item_id rank score" lines; '#' starts a comment.
RankedRun parse_run(std::string_view text, const std::string& source = "<run>");
RankedRun read_run(const std::filesystem::path& path);

/// JSON object item_id -> [label names], resolved against the taxonomy and
/// lifted to `level` via ancestor closure.
GroundTruth truth_from_json(const nlohmann::json& doc, const LabelTree& tree, int level);
GroundTruth read_truth(const std::filesystem::path& path, const LabelTree& tree, int level);

nlohmann::json to_json(const MetricsReport& r);
std::string to_text_table(const MetricsReport& r);

} // namespace geostrata
