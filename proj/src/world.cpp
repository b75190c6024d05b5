#include "mba/world.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <stdexcept>

#include "mba/rng.hpp"

namespace mba {

namespace {

double dist3(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

std::pair<NodeId, NodeId> ordered(NodeId a, NodeId b) {
  return a < b ? std::make_pair(a, b) : std::make_pair(b, a);
}

}  // namespace

const WorldNode& WorldGraph::node(NodeId n) const {
  if (n < 0 || n >= node_count()) throw std::out_of_range("unknown node id " + std::to_string(n));
  return nodes[static_cast<std::size_t>(n)];
}

double WorldGraph::edge_weight(NodeId a, NodeId b) const {
  if (!has_edge(a, b)) throw std::out_of_range("no such edge");
  return dist3(node(a).position, node(b).position);
}

bool WorldGraph::has_edge(NodeId a, NodeId b) const {
  return edges.count(ordered(a, b)) > 0;
}

std::vector<NodeId> WorldGraph::neighbors(NodeId n) const {
  node(n);  // validate
  std::vector<NodeId> out;
  for (const auto& [a, b] : edges) {
    if (a == n) out.push_back(b);
    else if (b == n) out.push_back(a);
  }
  std::sort(out.begin(), out.end());
  return out;
}

double Episode::gt_distance(const WorldGraph& g) const {
  double d = 0.0;
  for (std::size_t i = 1; i < gt_path.size(); ++i) d += g.edge_weight(gt_path[i - 1], gt_path[i]);
  return d;
}

WorldGraph generate_world(const WorldGenParams& p) {
  if (p.node_count < 1) throw std::invalid_argument("node_count must be >= 1");
  if (p.k_views < 4) throw std::invalid_argument("k_views must be >= 4");
  if (p.feature_dim < 8) throw std::invalid_argument("feature_dim must be >= 8");
  if (p.object_dim < 1 || p.m_max_objects < 1) throw std::invalid_argument("invalid object parameters");

  WorldGraph g;
  g.k_views = p.k_views;
  g.seed = p.seed;
  Rng rng(hash_mix(p.seed, hash_str("world-gen")));

  g.nodes.resize(static_cast<std::size_t>(p.node_count));
  for (int i = 0; i < p.node_count; ++i) {
    WorldNode& n = g.nodes[static_cast<std::size_t>(i)];
    n.id = i;
    n.position[0] = rng.next_double() * p.box_size;
    n.position[1] = rng.next_double() * p.box_size;
    n.position[2] = (rng.next_double() * 2.0 - 1.0) * p.z_jitter;
    n.appearance.resize(static_cast<std::size_t>(p.feature_dim));
    for (double& a : n.appearance) a = rng.next_double();
    int m = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(p.m_max_objects)));
    for (int j = 0; j < m; ++j) {
      ObjectSpec o;
      o.object_id = j;
      o.host_node = i;
      o.feature.resize(static_cast<std::size_t>(p.object_dim));
      for (double& f : o.feature) f = rng.next_double();
      n.objects.push_back(std::move(o));
    }
  }

  // proximity edges
  for (int i = 0; i < p.node_count; ++i)
    for (int j = i + 1; j < p.node_count; ++j)
      if (dist3(g.nodes[i].position, g.nodes[j].position) <= p.edge_radius)
        g.edges.insert({i, j});

  // spanning-tree repair: greedily join the closest pair of components
  std::vector<int> comp(static_cast<std::size_t>(p.node_count));
  for (int i = 0; i < p.node_count; ++i) comp[static_cast<std::size_t>(i)] = i;
  std::function<int(int)> find = [&](int x) { return comp[static_cast<std::size_t>(x)] == x ? x : comp[static_cast<std::size_t>(x)] = find(comp[static_cast<std::size_t>(x)]); };
  for (const auto& [a, b] : g.edges) comp[static_cast<std::size_t>(find(a))] = find(b);

  while (true) {
    double best = std::numeric_limits<double>::infinity();
    std::pair<NodeId, NodeId> best_pair{-1, -1};
    for (int i = 0; i < p.node_count; ++i)
      for (int j = i + 1; j < p.node_count; ++j)
        if (find(i) != find(j)) {
          double d = dist3(g.nodes[static_cast<std::size_t>(i)].position, g.nodes[static_cast<std::size_t>(j)].position);
          if (d < best) {
            best = d;
            best_pair = {i, j};
          }
        }
    if (best_pair.first < 0) break;
    g.edges.insert(best_pair);
    comp[static_cast<std::size_t>(find(best_pair.first))] = find(best_pair.second);
  }
  return g;
}

std::pair<std::vector<NodeId>, double> shortest_path(const WorldGraph& g, NodeId u, NodeId v) {
  g.node(u);
  g.node(v);
  const int k = g.node_count();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(static_cast<std::size_t>(k), inf);
  std::vector<std::vector<NodeId>> best_path(static_cast<std::size_t>(k));
  dist[static_cast<std::size_t>(u)] = 0.0;
  best_path[static_cast<std::size_t>(u)] = {u};

  // Dijkstra with (distance, path-so-far) keys; the path component breaks
  // ties lexicographically.
  using Entry = std::pair<double, std::vector<NodeId>>;
  auto cmp = [](const Entry& a, const Entry& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second > b.second;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(cmp)> pq(cmp);
  pq.push({0.0, {u}});
  std::vector<char> done(static_cast<std::size_t>(k), 0);
  while (!pq.empty()) {
    auto [d, path] = pq.top();
    pq.pop();
    NodeId n = path.back();
    if (done[static_cast<std::size_t>(n)]) continue;
    if (d != dist[static_cast<std::size_t>(n)] || path != best_path[static_cast<std::size_t>(n)]) continue;
    done[static_cast<std::size_t>(n)] = 1;
    if (n == v) break;
    for (NodeId w : g.neighbors(n)) {
      if (done[static_cast<std::size_t>(w)]) continue;
      double nd = d + g.edge_weight(n, w);
      auto& bw = best_path[static_cast<std::size_t>(w)];
      std::vector<NodeId> np = path;
      np.push_back(w);
      if (nd < dist[static_cast<std::size_t>(w)] ||
          (nd == dist[static_cast<std::size_t>(w)] && np < bw)) {
        dist[static_cast<std::size_t>(w)] = nd;
        bw = np;
        pq.push({nd, np});
      }
    }
  }
  if (dist[static_cast<std::size_t>(v)] == inf) throw std::runtime_error("graph not connected between endpoints");
  const auto& path = best_path[static_cast<std::size_t>(v)];
  double d = 0.0;  // re-sum in path order so callers can reproduce it exactly
  for (std::size_t i = 1; i < path.size(); ++i) d += g.edge_weight(path[i - 1], path[i]);
  return {path, d};
}

double geodesic(const WorldGraph& g, NodeId u, NodeId v) { return shortest_path(g, u, v).second; }

std::vector<NodeId> candidates(const WorldGraph& g, NodeId n) { return g.neighbors(n); }

std::vector<Vec> instruction_projection(int d_w, int d_f, int d_o) {
  Rng rng(hash_mix(hash_str("instruction-projection"),
                   hash_mix(static_cast<std::uint64_t>(d_w),
                            hash_mix(static_cast<std::uint64_t>(d_f), static_cast<std::uint64_t>(d_o)))));
  const int in = d_f + d_o;
  double a = std::sqrt(3.0 / static_cast<double>(in));
  std::vector<Vec> proj(static_cast<std::size_t>(d_w), Vec(static_cast<std::size_t>(in)));
  for (auto& row : proj)
    for (double& x : row) x = (rng.next_double() * 2.0 - 1.0) * a;
  return proj;
}

// Defined in features.cpp; used here for the instruction's pooled goal panorama.
Vec pooled_original_panorama(const WorldGraph& g, NodeId n);

Episode make_episode(const WorldGraph& g, const EpisodeParams& p) {
  if (g.node_count() < 2) throw std::runtime_error("episode generation needs >= 2 nodes");
  Rng rng(hash_mix(g.seed, hash_mix(p.seed, hash_str("episode"))));

  const int k = g.node_count();
  NodeId start = -1, goal = -1;
  for (int attempt = 0; attempt < 10000; ++attempt) {
    NodeId s = static_cast<NodeId>(rng.next_below(static_cast<std::uint64_t>(k)));
    NodeId t = static_cast<NodeId>(rng.next_below(static_cast<std::uint64_t>(k)));
    if (s == t) continue;
    auto [path, d] = shortest_path(g, s, t);
    if (d >= p.min_separation_m && static_cast<int>(path.size()) - 1 >= p.min_separation_edges) {
      start = s;
      goal = t;
      break;
    }
  }
  if (start < 0) throw std::runtime_error("no start/goal pair satisfies the separation constraint");

  Episode e;
  e.start = start;
  e.goal = goal;
  e.seed = p.seed;
  e.max_steps = p.max_steps;
  std::tie(e.gt_path, std::ignore) = shortest_path(g, start, goal);

  const auto& goal_objects = g.node(goal).objects;
  e.goal_object = goal_objects[rng.next_below(goal_objects.size())].object_id;

  const int d_f = static_cast<int>(g.node(goal).appearance.size());
  Vec pano = pooled_original_panorama(g, goal);
  const Vec& obj = goal_objects[static_cast<std::size_t>(e.goal_object)].feature;
  Vec desc;
  desc.reserve(pano.size() + obj.size());
  desc.insert(desc.end(), pano.begin(), pano.end());
  desc.insert(desc.end(), obj.begin(), obj.end());

  auto proj = instruction_projection(p.instruction_dim, d_f, static_cast<int>(obj.size()));
  e.instruction.resize(static_cast<std::size_t>(p.instruction_dim));
  for (int i = 0; i < p.instruction_dim; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < desc.size(); ++j) s += proj[static_cast<std::size_t>(i)][j] * desc[j];
    e.instruction[static_cast<std::size_t>(i)] = s + p.instruction_noise * rng.next_normal();
  }
  return e;
}

}  // namespace mba
