#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "geostrata/spatial_weights.hpp"

namespace geostrata {

enum class SignificanceMethod { Analytical, Permutation };

SignificanceMethod parse_significance_method(const std::string& s);
std::string to_string(SignificanceMethod m);

struct SignificanceSpec {
  SignificanceMethod method = SignificanceMethod::Permutation;
  std::size_t permutations = 999;
  std::uint64_t seed = 0;
  /// Worker threads for permutation replicates; 0 picks hardware concurrency.
  /// Results do not depend on this value.
  unsigned threads = 0;
};

struct MoranResult {
  double I = 0.0;
  double expected_I = 0.0;
  double z_score = 0.0;
  double p_value = 1.0;
  SignificanceMethod method = SignificanceMethod::Permutation;
  std::size_t n_permutations = 0;
  /// |I| exceeded 1; possible for some weight structures, reported not fatal.
  bool out_of_range = false;
};

enum class ClusterLabel { HighHigh, LowLow, LowHigh, HighLow, NotSignificant };
enum class Hotspot { Hot, Cold, None };

std::string to_string(ClusterLabel c);
std::string to_string(Hotspot h);
ClusterLabel parse_cluster_label(const std::string& s);
Hotspot parse_hotspot(const std::string& s);

struct LisaResult {
  std::string region_id;
  double z_i = 0.0;     // x_i - mean
  double lisa = 0.0;    // sum_{j != i} w_ij z_j
  double I_local = 0.0;
  double z_score = 0.0; // standardized I_local under the chosen null
  double p_value = 1.0;
  ClusterLabel cluster = ClusterLabel::NotSignificant;
};

struct GiStarResult {
  std::string region_id;
  double g_star = 0.0;
  double p_value = 1.0;
  Hotspot hotspot = Hotspot::None;
};

/// Global Moran's I with analytical (normality) or permutation significance.
/// Two-sided; permutation extremeness is |I - E[I]|, E[I] = -1/(n-1).
MoranResult global_morans_i(std::span<const double> x, const WeightMatrix& w,
                            const SignificanceSpec& significance);

/// Local Moran's I with S_i^2 = sum_{j != i} (x_j - mean)^2 / (n - 1).
/// p-values come from conditional randomization: x_i is held fixed and the
/// neighbour values are drawn without replacement from the other n - 1.
/// Clusters are labelled at `alpha`.
std::vector<LisaResult> local_morans_i(std::span<const double> x, const WeightMatrix& w,
                                       const SignificanceSpec& significance,
                                       std::span<const std::string> ids, double alpha = 0.05);

/// Getis-Ord Gi* with the focal region included at weight 1. Significance is
/// one-sided in the direction of the observed statistic.
std::vector<GiStarResult> getis_ord_gi_star(std::span<const double> x, const WeightMatrix& w,
                                            const SignificanceSpec& significance,
                                            std::span<const std::string> ids, double alpha = 0.05);

/// Cluster type from the signs of z_i and lisa, gated on p <= alpha.
ClusterLabel classify_cluster(double z_i, double lisa, double p_value, double alpha);
std::vector<ClusterLabel> classify_clusters(std::span<const LisaResult> lisa, double alpha);

/// r = (M+ ∩ G) ∪ M-, with M+ = {HighHigh, LowLow}, M- = {HighLow, LowHigh},
/// G = {hot, cold}. Result follows the order of `lisa`. Both inputs must
/// cover the same region ids.
std::vector<std::string> select_sampling_regions(std::span<const LisaResult> lisa,
                                                 std::span<const GiStarResult> gi);

nlohmann::json to_json(const MoranResult& r);
nlohmann::json to_json(const LisaResult& r);
nlohmann::json to_json(const GiStarResult& r);
LisaResult lisa_from_json(const nlohmann::json& j);
GiStarResult gi_from_json(const nlohmann::json& j);

} // namespace geostrata
