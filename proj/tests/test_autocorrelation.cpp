#include <doctest.h>

#include <cmath>

#include "geostrata/autocorrelation.hpp"
#include "geostrata/error.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace geostrata;

namespace {

oracle::Dense dense(const WeightMatrix& w) {
  oracle::Dense d(w.n(), std::vector<double>(w.n(), 0.0));
  for (const auto& e : w.entries()) d[e.i][e.j] = e.w;
  return d;
}

SignificanceSpec analytical() {
  SignificanceSpec s;
  s.method = SignificanceMethod::Analytical;
  return s;
}

SignificanceSpec permutation(std::size_t m, std::uint64_t seed, unsigned threads = 1) {
  SignificanceSpec s;
  s.permutations = m;
  s.seed = seed;
  s.threads = threads;
  return s;
}

std::vector<std::string> ids_for(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("r" + std::to_string(i));
  return ids;
}

WeightMatrix chain(int n) { return testing::lattice(1, n); }

bool close(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(b)); }

} // namespace

TEST_CASE("global Moran: hand examples") {
  const std::vector<double> checker{1, 0, 0, 1};
  CHECK(global_morans_i(checker, testing::lattice(2, 2), analytical()).I == -1.0);
  const std::vector<double> blocks{1, 1, 0, 0};
  CHECK(global_morans_i(blocks, chain(4), analytical()).I == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("global Moran: errors") {
  const std::vector<double> flat{5, 5, 5, 5};
  CHECK_THROWS_WITH_AS(global_morans_i(flat, chain(4), analytical()), doctest::Contains("zero variance"), Error);
  const std::vector<double> x{1, 2, 3};
  CHECK_THROWS_WITH_AS(global_morans_i(x, WeightMatrix(3, {}), analytical()),
                       doctest::Contains("degenerate weights"), Error);
  // Near-constant data with rounding noise is still zero variance.
  const std::vector<double> noisy{0.1 + 0.2, 0.3, 0.30000000000000004, 0.3};
  CHECK_THROWS_AS(global_morans_i(noisy, chain(4), analytical()), Error);
}

TEST_CASE("global Moran: matches the dense oracle") {
  geostrata::Stream rng(101);
  for (int t = 0; t < 60; ++t) {
    const int rows = 2 + static_cast<int>(rng.uniform_index(6));
    const int cols = 2 + static_cast<int>(rng.uniform_index(6));
    WeightMatrix w = testing::lattice(rows, cols, t % 2 == 0);
    if (t % 3 == 0) w = row_standardize(w);
    const auto x = testing::uniform_values(rng, w.n());
    const auto r = global_morans_i(x, w, analytical());
    const auto d = dense(w);
    CHECK(close(r.I, oracle::moran(x, d), 1e-12));
    const double n = static_cast<double>(x.size());
    CHECK(r.expected_I == doctest::Approx(-1.0 / (n - 1.0)));
    const double var = oracle::moran_variance_normal(d);
    if (var <= 1e-12) {
      // 2x2 queen is complete: I is constant.
      CHECK(r.z_score == 0.0);
      CHECK(r.p_value == 1.0);
      continue;
    }
    const double z = (oracle::moran(x, d) + 1.0 / (n - 1.0)) / std::sqrt(var);
    CHECK(close(r.z_score, z, 1e-9));
    CHECK(r.p_value == doctest::Approx(std::erfc(std::abs(z) / std::sqrt(2.0))).epsilon(1e-9));
  }
}

TEST_CASE("global Moran: asymmetric weights use the symmetrized S1") {
  const WeightMatrix w(3, {{0, 1, 1.0}, {1, 2, 2.0}, {2, 0, 0.5}});
  const std::vector<double> x{1.0, 4.0, 2.0};
  const auto r = global_morans_i(x, w, analytical());
  const auto d = dense(w);
  const double z = (oracle::moran(x, d) + 0.5) / std::sqrt(oracle::moran_variance_normal(d));
  CHECK(close(r.z_score, z, 1e-12));
}

TEST_CASE("global Moran: permutation p-values") {
  geostrata::Stream rng(7);
  const auto x = testing::uniform_values(rng, 49);
  const WeightMatrix w = testing::lattice(7, 7);
  const auto a = global_morans_i(x, w, permutation(199, 42, 1));
  const auto b = global_morans_i(x, w, permutation(199, 42, 4));
  const auto c = global_morans_i(x, w, permutation(199, 43, 1));
  CHECK(a.p_value == b.p_value);
  CHECK(a.z_score == b.z_score);
  CHECK(a.n_permutations == 199);
  const double k = a.p_value * 200.0 - 1.0;
  CHECK(k == doctest::Approx(std::round(k)).epsilon(1e-12));
  CHECK(a.p_value >= 1.0 / 200.0);
  CHECK(a.p_value <= 1.0);
  CHECK(c.I == a.I);

  // A strongly clustered field is always the most extreme.
  std::vector<double> grad(49);
  for (int i = 0; i < 49; ++i) grad[i] = i / 7;
  CHECK(global_morans_i(grad, w, permutation(99, 1)).p_value == doctest::Approx(0.01));
}

TEST_CASE("statistics are invariant under positive affine maps") {
  geostrata::Stream rng(21);
  const WeightMatrix w = testing::lattice(5, 5, true);
  for (int t = 0; t < 10; ++t) {
    const auto x = testing::uniform_values(rng, 25);
    std::vector<double> y(x.size());
    const double a = 0.5 + 10.0 * rng.uniform01(), b = -50.0 + 100.0 * rng.uniform01();
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = a * x[i] + b;
    const auto ids = ids_for(25);
    const auto gx = global_morans_i(x, w, permutation(99, 5));
    const auto gy = global_morans_i(y, w, permutation(99, 5));
    CHECK(gx.I == doctest::Approx(gy.I).epsilon(1e-9));
    CHECK(gx.p_value == gy.p_value);
    const auto lx = local_morans_i(x, w, permutation(99, 5), ids);
    const auto ly = local_morans_i(y, w, permutation(99, 5), ids);
    const auto hx = getis_ord_gi_star(x, w, permutation(99, 5), ids);
    const auto hy = getis_ord_gi_star(y, w, permutation(99, 5), ids);
    for (std::size_t i = 0; i < 25; ++i) {
      CHECK(lx[i].I_local == doctest::Approx(ly[i].I_local).epsilon(1e-9));
      CHECK(lx[i].cluster == ly[i].cluster);
      CHECK(hx[i].g_star == doctest::Approx(hy[i].g_star).epsilon(1e-9));
      CHECK(hx[i].hotspot == hy[i].hotspot);
    }
    CHECK(select_sampling_regions(lx, hx) == select_sampling_regions(ly, hy));
  }
}

TEST_CASE("local Moran: checkerboard") {
  const std::vector<double> checker{1, 0, 0, 1};
  const auto ids = ids_for(4);
  const auto r = local_morans_i(checker, testing::lattice(2, 2), analytical(), ids);
  for (const auto& l : r) {
    CHECK(l.I_local < 0.0);
    CHECK(l.z_i * l.lisa < 0.0);
    const auto c = classify_cluster(l.z_i, l.lisa, 0.01, 0.05);
    CHECK((c == ClusterLabel::HighLow || c == ClusterLabel::LowHigh));
  }
}

TEST_CASE("local Moran: neighbours at the mean give zero") {
  // Region 0 has neighbours 1 and 2 whose values equal the global mean.
  const std::vector<double> x{4, 2, 2, 0};
  const WeightMatrix w(4, {{0, 1, 1}, {1, 0, 1}, {0, 2, 1}, {2, 0, 1}, {1, 3, 1}, {3, 1, 1}});
  const auto r = local_morans_i(x, w, analytical(), ids_for(4));
  CHECK(r[0].lisa == 0.0);
  CHECK(r[0].I_local == 0.0);
  CHECK(r[0].cluster == ClusterLabel::NotSignificant);
}

TEST_CASE("local Moran: matches the dense oracle and the sign rule") {
  geostrata::Stream rng(77);
  for (int t = 0; t < 30; ++t) {
    const WeightMatrix w = testing::lattice(4, 5, t % 2 == 1);
    const auto x = testing::uniform_values(rng, 20);
    const auto d = dense(w);
    const auto r = local_morans_i(x, w, permutation(99, t), ids_for(20));
    for (std::size_t i = 0; i < 20; ++i) {
      CHECK(close(r[i].I_local, oracle::local_moran(x, d, i), 1e-12));
      if (r[i].z_i != 0.0 && r[i].lisa != 0.0)
        CHECK(std::signbit(r[i].I_local) == (std::signbit(r[i].z_i) != std::signbit(r[i].lisa)));
      const double k = r[i].p_value * 100.0 - 1.0;
      CHECK(k == doctest::Approx(std::round(k)).epsilon(1e-12));
    }
  }
}

TEST_CASE("local Moran: global I recovered from the local terms") {
  geostrata::Stream rng(8);
  for (int t = 0; t < 20; ++t) {
    const WeightMatrix w = row_standardize(testing::lattice(4, 4, true));
    const auto x = testing::uniform_values(rng, 16);
    const auto g = global_morans_i(x, w, analytical());
    const auto l = local_morans_i(x, w, analytical(), ids_for(16));
    double cross = 0.0, ss = 0.0;
    for (const auto& r : l) {
      cross += r.z_i * r.lisa;
      ss += r.z_i * r.z_i;
    }
    CHECK(close(g.I, 16.0 / w.s0() * cross / ss, 1e-12));
  }
}

TEST_CASE("local Moran: isolated regions are never significant") {
  const std::vector<double> x{1, 5, 2, 9};
  const WeightMatrix w(4, {{0, 1, 1}, {1, 0, 1}, {1, 2, 1}, {2, 1, 1}});
  for (const auto& spec : {analytical(), permutation(99, 3)}) {
    const auto r = local_morans_i(x, w, spec, ids_for(4));
    CHECK(r[3].p_value == 1.0);
    CHECK(r[3].cluster == ClusterLabel::NotSignificant);
  }
}

TEST_CASE("local Moran: permutation results do not depend on threads") {
  geostrata::Stream rng(9);
  const auto x = testing::uniform_values(rng, 36);
  const WeightMatrix w = testing::lattice(6, 6, true);
  const auto a = local_morans_i(x, w, permutation(199, 11, 1), ids_for(36));
  const auto b = local_morans_i(x, w, permutation(199, 11, 8), ids_for(36));
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].p_value == b[i].p_value);
    CHECK(a[i].z_score == b[i].z_score);
  }
}

TEST_CASE("local Moran: false positive rate on i.i.d. values") {
  geostrata::Stream rng(1234);
  const WeightMatrix w = testing::lattice(8, 8);
  std::size_t hits = 0, total = 0;
  for (int t = 0; t < 20; ++t) {
    const auto x = testing::uniform_values(rng, 64);
    for (const auto& r : local_morans_i(x, w, permutation(199, 500 + t), ids_for(64))) {
      hits += r.p_value < 0.05 ? 1 : 0;
      ++total;
    }
  }
  const double rate = static_cast<double>(hits) / static_cast<double>(total);
  CHECK(rate > 0.02);
  CHECK(rate < 0.08);
}

TEST_CASE("Gi*: self weight only") {
  const std::vector<double> x{3, 1, 8, 0};
  const WeightMatrix empty(4, {});
  // With only the injected self weight the variance term vanishes unless n
  // is large enough; it is (n*1 - 1)/(n-1) = 1 here, so the statistic exists.
  const auto r = getis_ord_gi_star(x, empty, analytical(), ids_for(4));
  const double m = 3.0;
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::signbit(r[i].g_star) == std::signbit(x[i] - m));
}

TEST_CASE("Gi*: chain with a high block") {
  const std::vector<double> x{10, 10, 10, 0, 0};
  const WeightMatrix w = chain(5);
  const auto r = getis_ord_gi_star(x, w, analytical(), ids_for(5));
  const auto d = dense(w);
  std::size_t best = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(close(r[i].g_star, oracle::gi_star(x, d, i), 1e-10));
    if (r[i].g_star > r[best].g_star) best = i;
  }
  CHECK(best == 1);
}

TEST_CASE("Gi*: oracle agreement, labels follow the sign") {
  geostrata::Stream rng(55);
  for (int t = 0; t < 20; ++t) {
    const WeightMatrix w = testing::lattice(5, 4, true);
    const auto x = testing::uniform_values(rng, 20);
    const auto d = dense(w);
    for (const auto& spec : {analytical(), permutation(99, t)}) {
      const auto r = getis_ord_gi_star(x, w, spec, ids_for(20), 0.1);
      for (std::size_t i = 0; i < 20; ++i) {
        CHECK(close(r[i].g_star, oracle::gi_star(x, d, i), 1e-10));
        if (r[i].hotspot == Hotspot::Hot) CHECK(r[i].g_star > 0.0);
        if (r[i].hotspot == Hotspot::Cold) CHECK(r[i].g_star < 0.0);
        if (r[i].hotspot != Hotspot::None) CHECK(r[i].p_value <= 0.1);
      }
    }
  }
}

TEST_CASE("Gi*: errors") {
  const std::vector<double> flat{2, 2, 2};
  CHECK_THROWS_WITH_AS(getis_ord_gi_star(flat, chain(3), analytical(), ids_for(3)),
                       doctest::Contains("zero variance"), Error);
  // Complete graph: every region sees all n values, the radicand is 0.
  const std::vector<double> x{1, 2, 4};
  const WeightMatrix full(3, {{0, 1, 1}, {0, 2, 1}, {1, 0, 1}, {1, 2, 1}, {2, 0, 1}, {2, 1, 1}});
  CHECK_THROWS_WITH_AS(getis_ord_gi_star(x, full, analytical(), ids_for(3)), doctest::Contains("r0"), Error);
}

TEST_CASE("cluster classification table") {
  CHECK(classify_cluster(1.0, 2.0, 0.01, 0.05) == ClusterLabel::HighHigh);
  CHECK(classify_cluster(-1.0, -2.0, 0.01, 0.05) == ClusterLabel::LowLow);
  CHECK(classify_cluster(-1.0, 2.0, 0.01, 0.05) == ClusterLabel::LowHigh);
  CHECK(classify_cluster(1.0, -2.0, 0.01, 0.05) == ClusterLabel::HighLow);
  CHECK(classify_cluster(1.0, 2.0, 0.20, 0.05) == ClusterLabel::NotSignificant);
  CHECK(classify_cluster(-1.0, -2.0, 0.20, 0.05) == ClusterLabel::NotSignificant);
  CHECK(classify_cluster(0.0, 2.0, 0.01, 0.05) == ClusterLabel::NotSignificant);
  CHECK(classify_cluster(1.0, 0.0, 0.01, 0.05) == ClusterLabel::NotSignificant);
  CHECK(classify_cluster(1.0, 2.0, 0.05, 0.05) == ClusterLabel::HighHigh);
}

TEST_CASE("region selection examples") {
  auto lisa = [](const std::string& id, ClusterLabel c) {
    LisaResult r;
    r.region_id = id;
    r.cluster = c;
    return r;
  };
  auto gi = [](const std::string& id, Hotspot h) {
    GiStarResult g;
    g.region_id = id;
    g.hotspot = h;
    return g;
  };
  const std::vector<LisaResult> l{lisa("a", ClusterLabel::HighHigh), lisa("b", ClusterLabel::HighLow),
                                  lisa("c", ClusterLabel::HighHigh), lisa("d", ClusterLabel::LowLow),
                                  lisa("e", ClusterLabel::NotSignificant)};
  const std::vector<GiStarResult> g{gi("a", Hotspot::Hot), gi("b", Hotspot::None), gi("c", Hotspot::None),
                                    gi("d", Hotspot::Cold), gi("e", Hotspot::Hot)};
  CHECK(select_sampling_regions(l, g) == std::vector<std::string>{"a", "b", "d"});

  const std::vector<GiStarResult> other{gi("a", Hotspot::Hot), gi("z", Hotspot::None), gi("c", Hotspot::None),
                                        gi("d", Hotspot::Cold), gi("e", Hotspot::Hot)};
  CHECK_THROWS_WITH_AS(select_sampling_regions(l, other), doctest::Contains("mismatched"), Error);
}

TEST_CASE("report JSON round-trips") {
  LisaResult l{"r7", 0.5, -1.25, -0.75, -2.0, 0.031, ClusterLabel::HighLow};
  const LisaResult back = lisa_from_json(to_json(l));
  CHECK(back.region_id == "r7");
  CHECK(back.lisa == -1.25);
  CHECK(back.cluster == ClusterLabel::HighLow);
  GiStarResult g{"r8", 2.5, 0.01, Hotspot::Hot};
  const GiStarResult gb = gi_from_json(to_json(g));
  CHECK(gb.g_star == 2.5);
  CHECK(gb.hotspot == Hotspot::Hot);
  for (const auto c : {ClusterLabel::HighHigh, ClusterLabel::LowLow, ClusterLabel::LowHigh, ClusterLabel::HighLow,
                       ClusterLabel::NotSignificant})
    CHECK(parse_cluster_label(to_string(c)) == c);
}
