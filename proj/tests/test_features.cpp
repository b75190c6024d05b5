#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "mba/features.hpp"

using namespace mba;

namespace {

WorldGraph test_world(std::uint64_t seed, int d_f = 16) {
  WorldGenParams p;
  p.seed = seed;
  p.node_count = 15;
  p.feature_dim = d_f;
  p.object_dim = 4;
  p.box_size = 12.0;
  return generate_world(p);
}

double cosine(const Vec& a, const Vec& b) {
  double d = std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  double na = std::sqrt(std::inner_product(a.begin(), a.end(), a.begin(), 0.0));
  double nb = std::sqrt(std::inner_product(b.begin(), b.end(), b.begin(), 0.0));
  return d / (na * nb);
}

}  // namespace

TEST_CASE("perturbation spec text round-trips") {
  for (const char* t : {"og", "depth", "rn", "none", "pv:0.25"}) {
    auto s = PerturbationSpec::parse(t);
    CHECK(s.to_string() == t);
  }
  CHECK(PerturbationSpec::parse("-").kind == PerturbationKind::None);
  CHECK(PerturbationSpec::parse("pv").gamma == 0.5);  // default gamma
  CHECK_THROWS_AS(PerturbationSpec::parse("blur"), std::invalid_argument);
  CHECK_THROWS_AS(PerturbationSpec::parse("pv:1.5"), std::invalid_argument);
}

TEST_CASE("original panorama covers every neighbor exactly once") {
  WorldGraph g = test_world(1);
  for (NodeId n = 0; n < g.node_count(); ++n) {
    auto p = original_features(g, n, 0);
    REQUIRE(static_cast<int>(p.views.size()) == g.k_views);
    std::set<NodeId> assigned;
    for (const auto& [view, nbr] : p.view_to_neighbor) {
      CHECK(view >= 0);
      CHECK(view < g.k_views);
      assigned.insert(nbr);
    }
    auto nbrs = g.neighbors(n);
    CHECK(assigned == std::set<NodeId>(nbrs.begin(), nbrs.end()));
    for (const auto& v : p.views) CHECK(static_cast<int>(v.size()) == static_cast<int>(g.node(n).appearance.size()));
    // direction encodings lie on the unit circle
    for (const auto& d : p.directions)
      CHECK(d[0] * d[0] + d[1] * d[1] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("neighbor views resemble the neighbor appearance more than background views do") {
  // directional oracle: cosine similarity to the true appearance should be
  // systematically higher for the assigned view than for background clutter
  double win = 0, total = 0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    WorldGraph g = test_world(s, 32);
    for (NodeId n = 0; n < g.node_count(); ++n) {
      auto p = original_features(g, n, 0);
      for (const auto& [view, nbr] : p.view_to_neighbor) {
        double c_assigned = cosine(p.views[static_cast<std::size_t>(view)], g.node(nbr).appearance);
        for (int i = 0; i < g.k_views; ++i) {
          if (p.view_to_neighbor.count(i)) continue;
          total += 1;
          if (c_assigned > cosine(p.views[static_cast<std::size_t>(i)], g.node(nbr).appearance)) win += 1;
        }
      }
    }
  }
  REQUIRE(total > 500);
  CHECK(win / total > 0.9);
}

TEST_CASE("perturbed view is the exact convex combination") {
  Vec a = {1.0, 0.0, 0.5};
  Vec b = {0.0, 1.0, 0.5};
  CHECK(perturbed_view(a, b, 0.0) == a);
  CHECK(perturbed_view(a, b, 1.0) == b);
  Vec mid = perturbed_view(a, b, 0.25);
  CHECK(mid[0] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(mid[1] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(mid[2] == doctest::Approx(0.5).epsilon(1e-15));
  // linearity in gamma: v(g) - v(0) = g * (v(1) - v(0))
  for (double gam : {0.1, 0.3, 0.8}) {
    Vec v = perturbed_view(a, b, gam);
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK(v[i] - a[i] == doctest::Approx(gam * (b[i] - a[i])).epsilon(1e-12));
  }
  CHECK_THROWS_AS(perturbed_view(a, Vec{1.0}, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(perturbed_view(a, b, 1.5), std::invalid_argument);
}

TEST_CASE("pv strategy interpolates between og and the incongruent views") {
  WorldGraph g = test_world(3);
  std::uint64_t seed = 99;
  auto og = strategy_features(g, 2, PerturbationSpec::parse("og"), seed, 4);
  auto pv0 = strategy_features(g, 2, PerturbationSpec::parse("pv:0"), seed, 4);
  for (int i = 0; i < g.k_views; ++i)
    CHECK(pv0.views[static_cast<std::size_t>(i)] == og.views[static_cast<std::size_t>(i)]);
  auto pv1 = strategy_features(g, 2, PerturbationSpec::parse("pv:1"), seed, 4);
  auto pv_half = strategy_features(g, 2, PerturbationSpec::parse("pv:0.5"), seed, 4);
  for (int i = 0; i < g.k_views; ++i)
    for (std::size_t j = 0; j < og.views[0].size(); ++j) {
      double want = 0.5 * og.views[static_cast<std::size_t>(i)][j] + 0.5 * pv1.views[static_cast<std::size_t>(i)][j];
      CHECK(pv_half.views[static_cast<std::size_t>(i)][j] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("incongruent views come from other nodes and are deterministic") {
  WorldGraph g = test_world(4);
  for (int view = 0; view < g.k_views; ++view) {
    Vec a = sample_incongruent(g, 5, view, 7);
    Vec b = sample_incongruent(g, 5, view, 7);
    CHECK(a == b);
    // the incongruent view must be some other node's original view
    bool matched = false;
    for (NodeId m = 0; m < g.node_count() && !matched; ++m) {
      if (m == 5) continue;
      auto p = original_features(g, m, 0);
      for (const auto& v : p.views)
        if (v == a) matched = true;
    }
    CHECK(matched);
  }
  CHECK(sample_incongruent(g, 5, 0, 7) != sample_incongruent(g, 5, 0, 8));
}

TEST_CASE("depth views are quantized to 16 levels with background sentinel") {
  WorldGraph g = test_world(6);
  for (NodeId n = 0; n < g.node_count(); ++n) {
    auto p = depth_features(g, n, 8);
    for (int i = 0; i < g.k_views; ++i) {
      const Vec& v = p.views[static_cast<std::size_t>(i)];
      REQUIRE(v.size() == 8);
      double depth = v[0];
      // quantized: depth * 15 is an integer in [0, 15]
      double lv = depth * 15.0;
      CHECK(std::abs(lv - std::round(lv)) < 1e-9);
      CHECK(depth >= 0.0);
      CHECK(depth <= 1.0);
      auto it = p.view_to_neighbor.find(i);
      if (it == p.view_to_neighbor.end()) {
        CHECK(depth == 1.0);  // background sentinel
      } else {
        double d = g.edge_weight(n, it->second) / depth_normalization_range();
        int level = std::min(15, static_cast<int>(std::floor(std::clamp(d, 0.0, 1.0) * 16.0)));
        CHECK(depth == doctest::Approx(level / 15.0).epsilon(1e-12));
      }
      // tiling layout: [depth, sin, cos, depth, ...] and no appearance leakage
      CHECK(v[1] == doctest::Approx(p.directions[static_cast<std::size_t>(i)][0]).epsilon(1e-12));
      CHECK(v[2] == doctest::Approx(p.directions[static_cast<std::size_t>(i)][1]).epsilon(1e-12));
      CHECK(v[3] == v[0]);
      CHECK(v[4] == v[0]);
    }
  }
}

TEST_CASE("random noise is uniform on [0,1]: chi-squared and mean checks") {
  Rng rng(12345);
  const int kBins = 10;
  const int kSamples = 20000;
  std::vector<int> bins(kBins, 0);
  double mean = 0.0;
  Vec v = random_noise(kSamples, rng);
  for (double x : v) {
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
    ++bins[std::min(kBins - 1, static_cast<int>(x * kBins))];
    mean += x;
  }
  mean /= kSamples;
  double expect = static_cast<double>(kSamples) / kBins;
  double chi2 = 0.0;
  for (int c : bins) chi2 += (c - expect) * (c - expect) / expect;
  // 99th percentile of chi-squared with 9 degrees of freedom
  CHECK(chi2 < 21.666);
  // law of large numbers: mean within 5 sigma of 1/2
  CHECK(std::abs(mean - 0.5) < 5.0 * std::sqrt(1.0 / 12.0 / kSamples));
}

TEST_CASE("rn strategy is fixed per (seed, node, view)") {
  WorldGraph g = test_world(8);
  auto a = strategy_features(g, 1, PerturbationSpec::parse("rn"), 42, 4);
  auto b = strategy_features(g, 1, PerturbationSpec::parse("rn"), 42, 4);
  for (int i = 0; i < g.k_views; ++i)
    CHECK(a.views[static_cast<std::size_t>(i)] == b.views[static_cast<std::size_t>(i)]);
  auto c = strategy_features(g, 1, PerturbationSpec::parse("rn"), 43, 4);
  CHECK(a.views[0] != c.views[0]);
  // structure (directions, assignment) is preserved; content is replaced
  auto og = strategy_features(g, 1, PerturbationSpec::parse("og"), 42, 4);
  CHECK(a.view_to_neighbor == og.view_to_neighbor);
  CHECK(a.views[0] != og.views[0]);
}

TEST_CASE("high-dimensional features are supported") {
  WorldGraph g = test_world(9, 768);
  auto p = original_features(g, 0, 0);
  CHECK(p.views[0].size() == 768);
  Vec pooled = pooled_original_panorama(g, 0);
  REQUIRE(pooled.size() == 768);
  // pooled value is the arithmetic mean of the views
  for (std::size_t j = 0; j < 8; ++j) {
    double s = 0.0;
    for (const auto& v : p.views) s += v[j];
    CHECK(pooled[j] == doctest::Approx(s / static_cast<double>(g.k_views)).epsilon(1e-12));
  }
}

TEST_CASE("strategy none cannot be materialized") {
  WorldGraph g = test_world(2);
  CHECK_THROWS_AS(strategy_features(g, 0, PerturbationSpec::parse("none"), 0, 4),
                  std::invalid_argument);
}
