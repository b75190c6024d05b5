#include "mba/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace mba {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

double slot_heading(int i, int k_views) { return kTwoPi * static_cast<double>(i) / static_cast<double>(k_views); }

double angular_distance(double a, double b) {
  double d = std::fmod(std::fabs(a - b), kTwoPi);
  return d > kTwoPi / 2.0 ? kTwoPi - d : d;
}

// Nearest free view slot for each neighbor, neighbors in ascending id order.
std::map<int, NodeId> assign_views(const WorldGraph& g, NodeId n) {
  std::map<int, NodeId> out;
  const auto& pos = g.node(n).position;
  std::vector<char> taken(static_cast<std::size_t>(g.k_views), 0);
  auto nbrs = g.neighbors(n);
  if (static_cast<int>(nbrs.size()) > g.k_views)
    throw std::runtime_error("node degree exceeds k_views");
  for (NodeId w : nbrs) {
    const auto& wp = g.node(w).position;
    double theta = std::atan2(wp[1] - pos[1], wp[0] - pos[0]);
    if (theta < 0) theta += kTwoPi;
    int best = -1;
    double best_d = 1e300;
    for (int i = 0; i < g.k_views; ++i) {
      if (taken[static_cast<std::size_t>(i)]) continue;
      double d = angular_distance(theta, slot_heading(i, g.k_views));
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    taken[static_cast<std::size_t>(best)] = 1;
    out[best] = w;
  }
  return out;
}

void fill_directions(PanoramaFeatures& p, int k_views) {
  p.directions.resize(static_cast<std::size_t>(k_views));
  for (int i = 0; i < k_views; ++i) {
    double h = slot_heading(i, k_views);
    p.directions[static_cast<std::size_t>(i)] = {std::sin(h), std::cos(h), 0.0, 1.0};
  }
}

}  // namespace

PerturbationSpec PerturbationSpec::parse(const std::string& text) {
  PerturbationSpec s;
  if (text == "og") s.kind = PerturbationKind::Original;
  else if (text == "depth") s.kind = PerturbationKind::Depth;
  else if (text == "rn") s.kind = PerturbationKind::RandomNoise;
  else if (text == "none" || text == "-") s.kind = PerturbationKind::None;
  else if (text.rfind("pv", 0) == 0) {
    s.kind = PerturbationKind::Perturbed;
    std::string rest = text.substr(2);
    if (!rest.empty() && rest[0] == ':') rest = rest.substr(1);
    if (!rest.empty()) s.gamma = std::stod(rest);
    if (s.gamma < 0.0 || s.gamma > 1.0) throw std::invalid_argument("gamma out of [0,1]: " + text);
  } else {
    throw std::invalid_argument("unknown perturbation spec: " + text);
  }
  return s;
}

std::string PerturbationSpec::to_string() const {
  switch (kind) {
    case PerturbationKind::Original: return "og";
    case PerturbationKind::Depth: return "depth";
    case PerturbationKind::RandomNoise: return "rn";
    case PerturbationKind::None: return "none";
    case PerturbationKind::Perturbed: {
      char buf[32];
      std::snprintf(buf, sizeof buf, "pv:%g", gamma);
      return buf;
    }
  }
  return "og";
}

PanoramaFeatures original_features(const WorldGraph& g, NodeId n, std::uint64_t seed) {
  const int d_f = static_cast<int>(g.node(n).appearance.size());
  PanoramaFeatures p;
  p.node = n;
  fill_directions(p, g.k_views);
  p.view_to_neighbor = assign_views(g, n);
  p.views.resize(static_cast<std::size_t>(g.k_views));
  for (int i = 0; i < g.k_views; ++i) {
    Vec& v = p.views[static_cast<std::size_t>(i)];
    v.resize(static_cast<std::size_t>(d_f));
    auto it = p.view_to_neighbor.find(i);
    if (it != p.view_to_neighbor.end()) {
      const Vec& app = g.node(it->second).appearance;
      double h = slot_heading(i, g.k_views);
      for (int j = 0; j < d_f; ++j) {
        double positional = 0.5 * (1.0 + std::sin(h + kTwoPi * static_cast<double>(j) / static_cast<double>(d_f)));
        v[static_cast<std::size_t>(j)] = 0.75 * app[static_cast<std::size_t>(j)] + 0.25 * positional;
      }
    } else {
      Rng rng(hash_mix(g.seed, hash_mix(seed, hash_mix(hash_str("background"),
                                                       hash_mix(static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(i))))));
      for (double& x : v) x = rng.next_double();
    }
  }
  return p;
}

double depth_normalization_range() { return 10.0; }

PanoramaFeatures depth_features(const WorldGraph& g, NodeId n, int depth_dim) {
  const int d_f = static_cast<int>(g.node(n).appearance.size());
  if (depth_dim < 4 || depth_dim >= d_f) throw std::invalid_argument("depth_dim must be in [4, d_f)");
  PanoramaFeatures p;
  p.node = n;
  fill_directions(p, g.k_views);
  p.view_to_neighbor = assign_views(g, n);
  p.views.resize(static_cast<std::size_t>(g.k_views));
  for (int i = 0; i < g.k_views; ++i) {
    double depth = 1.0;  // background sentinel
    auto it = p.view_to_neighbor.find(i);
    if (it != p.view_to_neighbor.end()) {
      double d = g.edge_weight(n, it->second) / depth_normalization_range();
      int level = std::min(15, static_cast<int>(std::floor(std::clamp(d, 0.0, 1.0) * 16.0)));
      depth = static_cast<double>(level) / 15.0;
    }
    const auto& dir = p.directions[static_cast<std::size_t>(i)];
    Vec& v = p.views[static_cast<std::size_t>(i)];
    v.resize(static_cast<std::size_t>(depth_dim));
    for (int j = 0; j < depth_dim; ++j) {
      switch (j % 4) {
        case 0: v[static_cast<std::size_t>(j)] = depth; break;
        case 1: v[static_cast<std::size_t>(j)] = dir[0]; break;
        case 2: v[static_cast<std::size_t>(j)] = dir[1]; break;
        default: v[static_cast<std::size_t>(j)] = depth; break;
      }
    }
  }
  return p;
}

Vec perturbed_view(const Vec& v_og, const Vec& v_iv, double gamma) {
  if (v_og.size() != v_iv.size()) throw std::invalid_argument("perturbed_view dimension mismatch");
  if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("gamma out of [0,1]");
  Vec out(v_og.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - gamma) * v_og[i] + gamma * v_iv[i];
  return out;
}

Vec sample_incongruent(const WorldGraph& g, NodeId n, int view_idx, std::uint64_t seed) {
  if (g.node_count() < 2) throw std::runtime_error("incongruent sampling needs >= 2 nodes");
  Rng rng(hash_mix(seed, hash_mix(hash_str("incongruent"),
                                  hash_mix(static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(view_idx)))));
  NodeId src = static_cast<NodeId>(rng.next_below(static_cast<std::uint64_t>(g.node_count() - 1)));
  if (src >= n) ++src;
  int view = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(g.k_views)));
  return original_features(g, src, 0).views[static_cast<std::size_t>(view)];
}

Vec random_noise(int dim, Rng& rng) {
  if (dim < 1) throw std::invalid_argument("dim must be >= 1");
  Vec v(static_cast<std::size_t>(dim));
  for (double& x : v) x = rng.next_double();
  return v;
}

PanoramaFeatures strategy_features(const WorldGraph& g, NodeId n, const PerturbationSpec& spec,
                                   std::uint64_t seed, int depth_dim) {
  switch (spec.kind) {
    case PerturbationKind::Original:
      return original_features(g, n, 0);
    case PerturbationKind::Depth:
      return depth_features(g, n, depth_dim);
    case PerturbationKind::Perturbed: {
      PanoramaFeatures p = original_features(g, n, 0);
      for (int i = 0; i < g.k_views; ++i) {
        Vec iv = sample_incongruent(g, n, i, seed);
        p.views[static_cast<std::size_t>(i)] = perturbed_view(p.views[static_cast<std::size_t>(i)], iv, spec.gamma);
      }
      return p;
    }
    case PerturbationKind::RandomNoise: {
      PanoramaFeatures p = original_features(g, n, 0);
      const int d_f = static_cast<int>(g.node(n).appearance.size());
      for (int i = 0; i < g.k_views; ++i) {
        Rng rng(hash_mix(seed, hash_mix(hash_str("rn"),
                                        hash_mix(static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(i)))));
        p.views[static_cast<std::size_t>(i)] = random_noise(d_f, rng);
      }
      return p;
    }
    case PerturbationKind::None:
      throw std::invalid_argument("strategy 'none' produces no panorama");
  }
  throw std::logic_error("unreachable");
}

Vec pooled_original_panorama(const WorldGraph& g, NodeId n) {
  PanoramaFeatures p = original_features(g, n, 0);
  Vec mean(p.views[0].size(), 0.0);
  for (const Vec& v : p.views)
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += v[j];
  for (double& x : mean) x /= static_cast<double>(p.views.size());
  return mean;
}

}  // namespace mba
