#ifndef MBA_WORLD_HPP
#define MBA_WORLD_HPP

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace mba {

using Vec = std::vector<double>;
using NodeId = int;

struct ObjectSpec {
  int object_id = 0;  // unique within its host node
  Vec feature;        // entries in [0, 1], dim d_o
  NodeId host_node = 0;
};

struct WorldNode {
  NodeId id = 0;
  std::array<double, 3> position{};  // meters
  Vec appearance;                    // entries in [0, 1], dim d_f
  std::vector<ObjectSpec> objects;
};

// Undirected navigation graph. Edge weights are the Euclidean distances
// between endpoint positions.
struct WorldGraph {
  std::vector<WorldNode> nodes;
  std::set<std::pair<NodeId, NodeId>> edges;  // pairs stored with first < second
  int k_views = 12;
  std::uint64_t seed = 0;

  int node_count() const { return static_cast<int>(nodes.size()); }
  const WorldNode& node(NodeId n) const;
  double edge_weight(NodeId a, NodeId b) const;
  bool has_edge(NodeId a, NodeId b) const;
  // Neighbors of n, sorted ascending.
  std::vector<NodeId> neighbors(NodeId n) const;
};

struct Episode {
  int episode_id = 0;
  NodeId start = 0;
  NodeId goal = 0;
  int goal_object = 0;           // object_id hosted at goal
  std::vector<NodeId> gt_path;   // shortest path start -> goal
  Vec instruction;               // dim d_w
  std::uint64_t seed = 0;
  int max_steps = 15;

  double gt_distance(const WorldGraph& g) const;
};

struct WorldGenParams {
  std::uint64_t seed = 0;
  int node_count = 30;
  int k_views = 12;
  int m_max_objects = 3;  // objects per node drawn from [1, m_max]
  int feature_dim = 64;
  int object_dim = 16;
  double box_size = 20.0;    // xy extent in meters
  double z_jitter = 0.5;     // +- vertical variation
  double edge_radius = 3.0;  // proximity connection radius
};

// Proximity graph in a bounded box with spanning-tree repair for
// connectivity. Deterministic in its arguments.
WorldGraph generate_world(const WorldGenParams& p);

// Minimum-weight path with lexicographically-smallest node sequence among
// ties. Returned distance is the sum of edge weights in path order, so it
// matches a re-summation of the path bit for bit.
std::pair<std::vector<NodeId>, double> shortest_path(const WorldGraph& g, NodeId u, NodeId v);

double geodesic(const WorldGraph& g, NodeId u, NodeId v);

// Adjacency list of n, ascending. The stop action is not included here;
// the agent represents it as action index 0.
std::vector<NodeId> candidates(const WorldGraph& g, NodeId n);

struct EpisodeParams {
  std::uint64_t seed = 0;
  int instruction_dim = 32;
  int max_steps = 15;
  double min_separation_m = 6.0;
  int min_separation_edges = 3;
  double instruction_noise = 0.1;
};

// Samples start/goal under the separation constraint and synthesizes the
// instruction from the goal's pooled panorama and goal-object feature via
// a fixed seeded random projection.
Episode make_episode(const WorldGraph& g, const EpisodeParams& p);

// The projection applied to [pooled goal panorama ; goal object feature].
// Fixed for given dimensions (world-independent so it is learnable across
// worlds).
std::vector<Vec> instruction_projection(int d_w, int d_f, int d_o);

}  // namespace mba

#endif
