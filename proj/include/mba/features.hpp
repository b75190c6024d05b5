#ifndef MBA_FEATURES_HPP
#define MBA_FEATURES_HPP

#include <cstdint>
#include <map>
#include <string>

#include "mba/rng.hpp"
#include "mba/world.hpp"

namespace mba {

// One panorama: k_views view vectors with direction encodings
// (sin/cos heading, sin/cos elevation) and the view -> neighbor assignment.
struct PanoramaFeatures {
  NodeId node = 0;
  std::vector<Vec> views;
  std::vector<std::array<double, 4>> directions;
  std::map<int, NodeId> view_to_neighbor;
};

enum class PerturbationKind { Original, Depth, Perturbed, RandomNoise, None };

struct PerturbationSpec {
  PerturbationKind kind = PerturbationKind::Original;
  double gamma = 0.5;  // only meaningful for Perturbed

  // Textual forms: og, depth, pv:<gamma>, rn, none.
  static PerturbationSpec parse(const std::string& text);
  std::string to_string() const;
};

// Synthetic stand-in for extracted view features: the view slot nearest the
// heading toward each neighbor carries that neighbor's appearance blended
// with a direction-dependent positional component; the rest are seeded
// background features.
PanoramaFeatures original_features(const WorldGraph& g, NodeId n, std::uint64_t seed);

// Geometric-only panorama: per view, quantized normalized distance to the
// assigned neighbor (sentinel 1.0 for background) plus direction encoding,
// tiled to depth_dim. Projection to d_f is a learnable dense layer owned by
// the agent.
PanoramaFeatures depth_features(const WorldGraph& g, NodeId n, int depth_dim);

// v_pv = (1 - gamma) * v_og + gamma * v_iv, elementwise.
Vec perturbed_view(const Vec& v_og, const Vec& v_iv, double gamma);

// One original view drawn uniformly from a node != n. Deterministic in
// (seed, n, view_idx).
Vec sample_incongruent(const WorldGraph& g, NodeId n, int view_idx, std::uint64_t seed);

// i.i.d. uniform [0,1] entries; advances the generator.
Vec random_noise(int dim, Rng& rng);

// Panorama under an arbitrary strategy, fixed per (seed, node). For rn the
// noise is drawn from a generator keyed on (seed, node, view).
PanoramaFeatures strategy_features(const WorldGraph& g, NodeId n, const PerturbationSpec& spec,
                                   std::uint64_t seed, int depth_dim);

// Mean over the node's original panorama views (used by instruction synthesis).
Vec pooled_original_panorama(const WorldGraph& g, NodeId n);

double depth_normalization_range();

}  // namespace mba

#endif
