#ifndef MBA_METRICS_HPP
#define MBA_METRICS_HPP

#include <optional>

#include "mba/world.hpp"

namespace mba {

struct EpisodeResult {
  int episode_id = 0;
  std::vector<NodeId> trajectory;
  bool stopped = false;
  std::optional<int> predicted_object;
  NodeId goal = 0;
  int goal_object = 0;
  double d_gt = 0.0;  // ground-truth path length in meters
  int steps = 0;
};

double trajectory_length(const WorldGraph& g, const EpisodeResult& r);
// Geodesic distance from the final node to the goal.
double navigation_error(const WorldGraph& g, const EpisodeResult& r);
int success(const WorldGraph& g, const EpisodeResult& r);  // NE <= 3.0 m, inclusive
double spl(int success, double tl, double d_gt);
int rgs(const WorldGraph& g, const EpisodeResult& r);
double rgspl(const WorldGraph& g, const EpisodeResult& r);

struct MetricsRow {
  int episode_id = 0;
  double tl = 0.0, ne = 0.0;
  int sr = 0;
  double spl = 0.0;
  int rgs = 0;
  double rgspl = 0.0;
  bool stopped = false;
  int steps = 0;
};

MetricsRow evaluate_episode(const WorldGraph& g, const EpisodeResult& r);

struct MetricsSummary {
  double tl = 0.0, ne = 0.0, sr = 0.0, spl = 0.0, rgs = 0.0, rgspl = 0.0;
  std::size_t count = 0;
};

MetricsSummary aggregate(const std::vector<MetricsRow>& rows);

}  // namespace mba

#endif
