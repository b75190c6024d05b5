#include "mba/topomap.hpp"

#include <algorithm>
#include <limits>
#include <queue>
#include <stdexcept>

namespace mba {

void TopoMap::update(NodeId now, const PanoramaFeatures& pano, const WorldGraph& g) {
  if (pano.node != now) throw std::invalid_argument("panorama does not belong to the updated node");
  current = now;
  ++step;
  if (!visited.count(now)) {
    visited.insert(now);
    visited_views[now] = pano.views;
    ghost_obs.erase(now);
  }
  for (const auto& [view_idx, nbr] : pano.view_to_neighbor) {
    auto e = nbr < now ? std::make_pair(nbr, now) : std::make_pair(now, nbr);
    map_edges.insert(e);
    if (!visited.count(nbr))
      ghost_obs[nbr][now] = pano.views[static_cast<std::size_t>(view_idx)];
  }
}

std::vector<NodeId> TopoMap::global_actions() const {
  std::vector<NodeId> out;
  for (const auto& [n, obs] : ghost_obs) out.push_back(n);
  for (NodeId n : visited)
    if (n != current) out.push_back(n);
  return out;
}

std::vector<NodeId> TopoMap::map_path(const WorldGraph& g, NodeId target) const {
  // Dijkstra restricted to discovered edges, lexicographic tie-break.
  std::map<NodeId, double> dist;
  std::map<NodeId, std::vector<NodeId>> path;
  dist[current] = 0.0;
  path[current] = {current};
  using Entry = std::pair<double, std::vector<NodeId>>;
  auto cmp = [](const Entry& a, const Entry& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second > b.second;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(cmp)> pq(cmp);
  pq.push({0.0, {current}});
  std::set<NodeId> done;
  while (!pq.empty()) {
    auto [d, p] = pq.top();
    pq.pop();
    NodeId n = p.back();
    if (done.count(n)) continue;
    done.insert(n);
    if (n == target) return p;
    for (const auto& [a, b] : map_edges) {
      NodeId w = -1;
      if (a == n) w = b;
      else if (b == n) w = a;
      else continue;
      if (done.count(w)) continue;
      double nd = d + g.edge_weight(n, w);
      std::vector<NodeId> np = p;
      np.push_back(w);
      auto it = dist.find(w);
      if (it == dist.end() || nd < it->second || (nd == it->second && np < path[w])) {
        dist[w] = nd;
        path[w] = np;
        pq.push({nd, np});
      }
    }
  }
  throw std::runtime_error("target not reachable in discovered map");
}

TopoMap update_map(const TopoMap& m, NodeId current, const PanoramaFeatures& pano,
                   const WorldGraph& g) {
  TopoMap out = m;
  out.update(current, pano, g);
  return out;
}

Vec ghost_embedding(const TopoMap& m, NodeId n) {
  auto it = m.ghost_obs.find(n);
  if (it == m.ghost_obs.end() || it->second.empty()) throw std::out_of_range("not a ghost node");
  Vec mean(it->second.begin()->second.size(), 0.0);
  for (const auto& [from, v] : it->second)
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += v[j];
  for (double& x : mean) x /= static_cast<double>(it->second.size());
  return mean;
}

Vec visited_embedding(const TopoMap& m, NodeId n) {
  auto it = m.visited_views.find(n);
  if (it == m.visited_views.end() || it->second.empty()) throw std::out_of_range("not a visited node");
  Vec mean(it->second.front().size(), 0.0);
  for (const Vec& v : it->second)
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += v[j];
  for (double& x : mean) x /= static_cast<double>(it->second.size());
  return mean;
}

}  // namespace mba
