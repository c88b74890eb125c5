#include "geostrata/autocorrelation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <map>
#include <set>

#include "geostrata/error.hpp"
#include "geostrata/kernels.hpp"
#include "geostrata/parallel.hpp"
#include "geostrata/rng.hpp"

namespace geostrata {

using nlohmann::json;

SignificanceMethod parse_significance_method(const std::string& s) {
  if (s == "analytical") return SignificanceMethod::Analytical;
  if (s == "permutation") return SignificanceMethod::Permutation;
  throw Error("unknown significance method '" + s + "'");
}

std::string to_string(SignificanceMethod m) {
  return m == SignificanceMethod::Analytical ? "analytical" : "permutation";
}

std::string to_string(ClusterLabel c) {
  switch (c) {
  case ClusterLabel::HighHigh: return "HighHigh";
  case ClusterLabel::LowLow: return "LowLow";
  case ClusterLabel::LowHigh: return "LowHigh";
  case ClusterLabel::HighLow: return "HighLow";
  case ClusterLabel::NotSignificant: return "NotSignificant";
  }
  return "NotSignificant";
}

std::string to_string(Hotspot h) {
  switch (h) {
  case Hotspot::Hot: return "hot";
  case Hotspot::Cold: return "cold";
  case Hotspot::None: return "none";
  }
  return "none";
}

ClusterLabel parse_cluster_label(const std::string& s) {
  for (const auto c : {ClusterLabel::HighHigh, ClusterLabel::LowLow, ClusterLabel::LowHigh,
                       ClusterLabel::HighLow, ClusterLabel::NotSignificant})
    if (to_string(c) == s) return c;
  throw Error("unknown cluster label '" + s + "'");
}

Hotspot parse_hotspot(const std::string& s) {
  for (const auto h : {Hotspot::Hot, Hotspot::Cold, Hotspot::None})
    if (to_string(h) == s) return h;
  throw Error("unknown hotspot label '" + s + "'");
}

namespace {

// Stream tags keep the global, local and Gi* substreams apart under one seed.
constexpr std::uint64_t kTagGlobal = 0x676c6f62;
constexpr std::uint64_t kTagLocal = 0x6c6f6361;
constexpr std::uint64_t kTagGiStar = 0x67697374;
constexpr std::size_t kPermutationChunk = 32;

// Relative slack when deciding "at least as extreme", so that arrangements
// equal to the observed one up to summation order count as ties.
constexpr double kTieSlack = 1e-12;

double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }
double normal_one_sided_p(double z) { return 0.5 * std::erfc(std::abs(z) / std::sqrt(2.0)); }

struct Centered {
  std::vector<double> z;
  double mean = 0.0;
  double sum_sq = 0.0;
};

Centered center(std::span<const double> x) {
  const auto n = static_cast<double>(x.size());
  double mean = 0.0;
  double max_abs = 0.0;
  for (const double v : x) {
    if (!std::isfinite(v)) throw Error("analysis values must be finite (nodata removed)");
    mean += v;
    max_abs = std::max(max_abs, std::abs(v));
  }
  mean /= n;
  double correction = 0.0;
  for (const double v : x) correction += v - mean;
  mean += correction / n;

  Centered c;
  c.mean = mean;
  c.z.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) c.z[i] = x[i] - mean;
  c.sum_sq = kernels::sum_squares(c.z);
  const bool all_equal = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; });
  const double floor = 1e-13 * max_abs;
  if (all_equal || c.sum_sq <= n * floor * floor) throw Error("zero variance");
  return c;
}

void check_inputs(std::span<const double> x, const WeightMatrix& w, std::size_t min_n) {
  if (x.size() != w.n())
    throw Error("value count " + std::to_string(x.size()) + " does not match weight matrix n=" +
                std::to_string(w.n()));
  if (x.size() < min_n) throw Error("need at least " + std::to_string(min_n) + " regions");
}

void check_ids(std::span<const std::string> ids, std::size_t n) {
  if (ids.size() != n) throw Error("region id count does not match value count");
}

double cross(const WeightMatrix& w, std::span<const double> z) {
  return kernels::active().csr_cross(w.row_ptr().data(), w.cols().data(), w.vals().data(),
                                     z.data(), w.n());
}

double p_from_count(std::size_t extreme, std::size_t m) {
  return static_cast<double>(extreme + 1) / static_cast<double>(m + 1);
}

// Draws neighbour values for a conditional permutation of region i: k
// distinct indices from {0..n-1} \ {i}, in random order.
class ConditionalSampler {
public:
  ConditionalSampler(std::size_t n, std::size_t focal) : n_(n), focal_(focal) {}

  void draw(Stream& stream, std::size_t k, std::vector<std::size_t>& out) {
    out.clear();
    const std::size_t pool = n_ - 1;
    if (2 * k <= pool) {
      while (out.size() < k) {
        std::size_t j = static_cast<std::size_t>(stream.uniform_index(pool));
        if (j >= focal_) ++j;
        if (std::find(out.begin(), out.end(), j) == out.end()) out.push_back(j);
      }
      return;
    }
    scratch_.resize(pool);
    for (std::size_t j = 0, t = 0; j < n_; ++j)
      if (j != focal_) scratch_[t++] = j;
    for (std::size_t t = 0; t < k; ++t) {
      const std::size_t r = t + static_cast<std::size_t>(stream.uniform_index(pool - t));
      std::swap(scratch_[t], scratch_[r]);
      out.push_back(scratch_[t]);
    }
  }

private:
  std::size_t n_;
  std::size_t focal_;
  std::vector<std::size_t> scratch_;
};

struct RowMoments {
  double sum_w = 0.0;
  double sum_w2 = 0.0;
};

RowMoments row_moments(const WeightMatrix& w, std::size_t i) {
  RowMoments m;
  for (const double v : w.weights(i)) {
    m.sum_w += v;
    m.sum_w2 += v * v;
  }
  return m;
}

double spatial_lag(const WeightMatrix& w, std::size_t i, std::span<const double> values) {
  double s = 0.0;
  const auto nb = w.neighbors(i);
  const auto wt = w.weights(i);
  for (std::size_t k = 0; k < nb.size(); ++k) s += wt[k] * values[nb[k]];
  return s;
}

} // namespace

MoranResult global_morans_i(std::span<const double> x, const WeightMatrix& w,
                            const SignificanceSpec& significance) {
  check_inputs(x, w, 2);
  const Centered c = center(x);
  const double s0 = w.s0();
  if (!(s0 > 0.0)) throw Error("degenerate weights: S0 = 0");
  const auto n = static_cast<double>(x.size());
  const double scale = n / (s0 * c.sum_sq);

  MoranResult r;
  r.I = scale * cross(w, c.z);
  r.expected_I = -1.0 / (n - 1.0);
  r.method = significance.method;
  r.out_of_range = std::abs(r.I) > 1.0 + 1e-9;

  if (significance.method == SignificanceMethod::Analytical) {
    // Moments under the normality assumption.
    // S1 = 1/2 sum_ij (w_ij + w_ji)^2 over ordered pairs; a pair stored in
    // one direction only still contributes both orderings.
    double s1 = 0.0;
    std::vector<double> out_sum(w.n(), 0.0);
    std::vector<double> in_sum(w.n(), 0.0);
    for (const WeightEntry& e : w.entries()) {
      const double back = w.weight(e.j, e.i);
      const double sym = e.w + back;
      s1 += sym * sym;
      if (back == 0.0) s1 += e.w * e.w;
      out_sum[e.i] += e.w;
      in_sum[e.j] += e.w;
    }
    s1 *= 0.5;
    double s2 = 0.0;
    for (std::size_t i = 0; i < w.n(); ++i) s2 += (out_sum[i] + in_sum[i]) * (out_sum[i] + in_sum[i]);
    const double var = (n * n * s1 - n * s2 + 3.0 * s0 * s0) / ((n * n - 1.0) * s0 * s0) -
                       r.expected_I * r.expected_I;
    // Complete graphs pin I to its expectation; the variance is then zero up
    // to rounding and z carries no information.
    const bool informative = var > 1e-12;
    r.z_score = informative ? (r.I - r.expected_I) / std::sqrt(var) : 0.0;
    r.p_value = informative ? normal_two_sided_p(r.z_score) : 1.0;
    return r;
  }

  const std::size_t m = significance.permutations;
  if (m == 0) throw Error("permutation count must be positive");
  const std::size_t chunks = (m + kPermutationChunk - 1) / kPermutationChunk;
  std::vector<double> perm_I(m);
  parallel_for(chunks, significance.threads, [&](std::size_t chunk) {
    Stream stream(derive_seed(significance.seed, {kTagGlobal, chunk}));
    std::vector<double> z = c.z;
    const std::size_t begin = chunk * kPermutationChunk;
    const std::size_t end = std::min(m, begin + kPermutationChunk);
    for (std::size_t p = begin; p < end; ++p) {
      stream.shuffle(std::span<double>(z));
      perm_I[p] = scale * cross(w, z);
    }
  });

  const double observed = std::abs(r.I - r.expected_I);
  const double slack = kTieSlack * std::max(1.0, observed);
  std::size_t extreme = 0;
  double mean = 0.0;
  for (const double v : perm_I) {
    if (std::abs(v - r.expected_I) >= observed - slack) ++extreme;
    mean += v;
  }
  mean /= static_cast<double>(m);
  double var = 0.0;
  for (const double v : perm_I) var += (v - mean) * (v - mean);
  var /= static_cast<double>(m > 1 ? m - 1 : 1);
  r.z_score = var > 0.0 ? (r.I - mean) / std::sqrt(var) : 0.0;
  r.p_value = p_from_count(extreme, m);
  r.n_permutations = m;
  return r;
}

ClusterLabel classify_cluster(double z_i, double lisa, double p_value, double alpha) {
  if (p_value > alpha || z_i == 0.0 || lisa == 0.0) return ClusterLabel::NotSignificant;
  if (z_i > 0.0) return lisa > 0.0 ? ClusterLabel::HighHigh : ClusterLabel::HighLow;
  return lisa < 0.0 ? ClusterLabel::LowLow : ClusterLabel::LowHigh;
}

std::vector<ClusterLabel> classify_clusters(std::span<const LisaResult> lisa, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("alpha must lie in (0, 1)");
  std::vector<ClusterLabel> out;
  out.reserve(lisa.size());
  for (const LisaResult& r : lisa) out.push_back(classify_cluster(r.z_i, r.lisa, r.p_value, alpha));
  return out;
}

std::vector<LisaResult> local_morans_i(std::span<const double> x, const WeightMatrix& w,
                                       const SignificanceSpec& significance,
                                       std::span<const std::string> ids, double alpha) {
  check_inputs(x, w, 3);
  check_ids(ids, x.size());
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("alpha must lie in (0, 1)");
  const Centered c = center(x);
  const std::size_t n = x.size();
  const double others = static_cast<double>(n - 1);
  if (significance.method == SignificanceMethod::Permutation && significance.permutations == 0)
    throw Error("permutation count must be positive");

  std::vector<LisaResult> out(n);
  parallel_for(n, significance.threads, [&](std::size_t i) {
    LisaResult& r = out[i];
    r.region_id = ids[i];
    r.z_i = c.z[i];
    r.lisa = spatial_lag(w, i, c.z);
    const double s_i2 = (c.sum_sq - c.z[i] * c.z[i]) / others;
    const double factor = c.z[i] / s_i2;
    r.I_local = factor * r.lisa;

    const RowMoments mom = row_moments(w, i);
    // Moments of the lag when neighbour values are drawn without replacement
    // from the other n-1 deviations (population mean -z_i/(n-1)).
    const double pop_mean = -c.z[i] / others;
    const double pop_var = (c.sum_sq - c.z[i] * c.z[i]) / others - pop_mean * pop_mean;
    const double expected_lag = pop_mean * mom.sum_w;

    if (w.neighbors(i).empty() || factor == 0.0) {
      r.z_score = 0.0;
      r.p_value = 1.0;
    } else if (significance.method == SignificanceMethod::Analytical) {
      const double var_lag =
          n > 2 ? pop_var * (others * mom.sum_w2 - mom.sum_w * mom.sum_w) / (others - 1.0) : 0.0;
      if (var_lag > 0.0) {
        const double z_lag = (r.lisa - expected_lag) / std::sqrt(var_lag);
        r.z_score = factor > 0.0 ? z_lag : -z_lag;
        r.p_value = normal_two_sided_p(z_lag);
      } else {
        r.z_score = 0.0;
        r.p_value = 1.0;
      }
    } else {
      const std::size_t m = significance.permutations;
      Stream stream(derive_seed(significance.seed, {kTagLocal, i}));
      ConditionalSampler sampler(n, i);
      std::vector<std::size_t> drawn;
      const auto wt = w.weights(i);
      const double observed = std::abs(r.lisa - expected_lag);
      const double slack = kTieSlack * std::max(1.0, observed);
      std::size_t extreme = 0;
      double mean = 0.0, m2 = 0.0;
      for (std::size_t p = 0; p < m; ++p) {
        sampler.draw(stream, wt.size(), drawn);
        double lag = 0.0;
        for (std::size_t k = 0; k < wt.size(); ++k) lag += wt[k] * c.z[drawn[k]];
        if (std::abs(lag - expected_lag) >= observed - slack) ++extreme;
        const double delta = lag - mean;
        mean += delta / static_cast<double>(p + 1);
        m2 += delta * (lag - mean);
      }
      const double sd = m > 1 ? std::sqrt(m2 / static_cast<double>(m - 1)) : 0.0;
      const double z_lag = sd > 0.0 ? (r.lisa - mean) / sd : 0.0;
      r.z_score = factor > 0.0 ? z_lag : -z_lag;
      r.p_value = p_from_count(extreme, m);
    }
    r.cluster = classify_cluster(r.z_i, r.lisa, r.p_value, alpha);
  });
  return out;
}

std::vector<GiStarResult> getis_ord_gi_star(std::span<const double> x, const WeightMatrix& w,
                                            const SignificanceSpec& significance,
                                            std::span<const std::string> ids, double alpha) {
  check_inputs(x, w, 2);
  check_ids(ids, x.size());
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("alpha must lie in (0, 1)");
  const Centered c = center(x);
  const std::size_t n = x.size();
  const auto nd = static_cast<double>(n);
  const double s = std::sqrt(c.sum_sq / nd);
  if (significance.method == SignificanceMethod::Permutation && significance.permutations == 0)
    throw Error("permutation count must be positive");

  // Denominators first so a degenerate row fails before any sampling.
  std::vector<double> denom(n);
  for (std::size_t i = 0; i < n; ++i) {
    RowMoments mom = row_moments(w, i);
    mom.sum_w += 1.0;
    mom.sum_w2 += 1.0;
    const double radicand = (nd * mom.sum_w2 - mom.sum_w * mom.sum_w) / (nd - 1.0);
    if (!(radicand > 1e-12 * nd * mom.sum_w2))
      throw Error("degenerate weights: Gi* variance term is not positive for region '" + ids[i] + "'");
    denom[i] = s * std::sqrt(radicand);
  }

  std::vector<GiStarResult> out(n);
  parallel_for(n, significance.threads, [&](std::size_t i) {
    GiStarResult& r = out[i];
    r.region_id = ids[i];
    const double sum_w = row_moments(w, i).sum_w + 1.0;
    const double neighbour_sum = spatial_lag(w, i, x);
    const double numerator = neighbour_sum + x[i] - c.mean * sum_w;
    r.g_star = numerator / denom[i];

    if (significance.method == SignificanceMethod::Analytical) {
      r.p_value = normal_one_sided_p(r.g_star);
    } else {
      const std::size_t m = significance.permutations;
      Stream stream(derive_seed(significance.seed, {kTagGiStar, i}));
      ConditionalSampler sampler(n, i);
      std::vector<std::size_t> drawn;
      const auto wt = w.weights(i);
      const double slack = kTieSlack * std::max(1.0, std::abs(neighbour_sum));
      std::size_t extreme = 0;
      for (std::size_t p = 0; p < m; ++p) {
        sampler.draw(stream, wt.size(), drawn);
        double lag = 0.0;
        for (std::size_t k = 0; k < wt.size(); ++k) lag += wt[k] * x[drawn[k]];
        if (r.g_star >= 0.0 ? lag >= neighbour_sum - slack : lag <= neighbour_sum + slack) ++extreme;
      }
      r.p_value = p_from_count(extreme, m);
    }
    if (r.p_value <= alpha && r.g_star > 0.0) r.hotspot = Hotspot::Hot;
    else if (r.p_value <= alpha && r.g_star < 0.0) r.hotspot = Hotspot::Cold;
    else r.hotspot = Hotspot::None;
  });
  return out;
}

std::vector<std::string> select_sampling_regions(std::span<const LisaResult> lisa,
                                                 std::span<const GiStarResult> gi) {
  std::set<std::string> lisa_ids, gi_ids;
  for (const auto& r : lisa) lisa_ids.insert(r.region_id);
  for (const auto& r : gi) gi_ids.insert(r.region_id);
  if (lisa_ids != gi_ids || lisa_ids.size() != lisa.size() || gi_ids.size() != gi.size())
    throw Error("mismatched region universes between LISA and Gi* results");

  std::map<std::string, Hotspot> hot;
  for (const auto& r : gi) hot[r.region_id] = r.hotspot;
  std::vector<std::string> selected;
  for (const auto& r : lisa) {
    const bool homogeneous = r.cluster == ClusterLabel::HighHigh || r.cluster == ClusterLabel::LowLow;
    const bool outlier = r.cluster == ClusterLabel::HighLow || r.cluster == ClusterLabel::LowHigh;
    const bool in_g = hot[r.region_id] != Hotspot::None;
    if ((homogeneous && in_g) || outlier) selected.push_back(r.region_id);
  }
  return selected;
}

json to_json(const MoranResult& r) {
  return {{"I", r.I},
          {"expected_I", r.expected_I},
          {"z_score", r.z_score},
          {"p_value", r.p_value},
          {"method", to_string(r.method)},
          {"n_permutations", r.n_permutations},
          {"out_of_range", r.out_of_range}};
}

json to_json(const LisaResult& r) {
  return {{"id", r.region_id},   {"z_i", r.z_i},         {"lisa", r.lisa},
          {"statistic", r.I_local}, {"z", r.z_score},    {"p", r.p_value},
          {"label", to_string(r.cluster)}};
}

json to_json(const GiStarResult& r) {
  return {{"id", r.region_id}, {"statistic", r.g_star}, {"z", r.g_star},
          {"p", r.p_value},    {"label", to_string(r.hotspot)}};
}

LisaResult lisa_from_json(const json& j) {
  LisaResult r;
  r.region_id = j.at("id").get<std::string>();
  r.z_i = j.at("z_i").get<double>();
  r.lisa = j.at("lisa").get<double>();
  r.I_local = j.at("statistic").get<double>();
  r.z_score = j.at("z").get<double>();
  r.p_value = j.at("p").get<double>();
  r.cluster = parse_cluster_label(j.at("label").get<std::string>());
  return r;
}

GiStarResult gi_from_json(const json& j) {
  GiStarResult r;
  r.region_id = j.at("id").get<std::string>();
  r.g_star = j.at("statistic").get<double>();
  r.p_value = j.at("p").get<double>();
  r.hotspot = parse_hotspot(j.at("label").get<std::string>());
  return r;
}

} // namespace geostrata
