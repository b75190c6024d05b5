#ifndef MBA_TOPOMAP_HPP
#define MBA_TOPOMAP_HPP

#include <map>
#include <set>

#include "mba/features.hpp"
#include "mba/world.hpp"

namespace mba {

// Incrementally discovered map of visited and ghost nodes. Ghost
// observations are keyed by the node they were seen from, so revisits are
// idempotent.
struct TopoMap {
  NodeId current = -1;
  int step = 0;
  std::set<NodeId> visited;
  std::map<NodeId, std::vector<Vec>> visited_views;          // full panorama per visited node
  std::map<NodeId, std::map<NodeId, Vec>> ghost_obs;         // ghost -> (seen-from -> view)
  std::set<std::pair<NodeId, NodeId>> map_edges;             // first < second

  bool empty() const { return visited.empty(); }
  bool is_ghost(NodeId n) const { return ghost_obs.count(n) > 0; }
  // Mutating update used by rollouts.
  void update(NodeId now, const PanoramaFeatures& pano, const WorldGraph& g);
  // {ghosts} then {visited \ current}, each ascending: the global action
  // space without the stop slot.
  std::vector<NodeId> global_actions() const;
  // Shortest path from current to target using only discovered edges.
  std::vector<NodeId> map_path(const WorldGraph& g, NodeId target) const;
};

// Pure-function surface over TopoMap::update.
TopoMap update_map(const TopoMap& m, NodeId current, const PanoramaFeatures& pano,
                   const WorldGraph& g);

// Arithmetic mean of the ghost's observations.
Vec ghost_embedding(const TopoMap& m, NodeId n);
// Mean over the stored full panorama of a visited node.
Vec visited_embedding(const TopoMap& m, NodeId n);

}  // namespace mba

#endif
