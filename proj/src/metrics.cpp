#include "mba/metrics.hpp"

#include <algorithm>
#include <stdexcept>

namespace mba {

double trajectory_length(const WorldGraph& g, const EpisodeResult& r) {
  if (r.trajectory.empty()) throw std::invalid_argument("empty trajectory");
  double tl = 0.0;
  for (std::size_t i = 1; i < r.trajectory.size(); ++i) {
    if (!g.has_edge(r.trajectory[i - 1], r.trajectory[i]))
      throw std::invalid_argument("non-adjacent consecutive trajectory nodes");
    tl += g.edge_weight(r.trajectory[i - 1], r.trajectory[i]);
  }
  return tl;
}

double navigation_error(const WorldGraph& g, const EpisodeResult& r) {
  return geodesic(g, r.trajectory.back(), r.goal);
}

int success(const WorldGraph& g, const EpisodeResult& r) {
  return navigation_error(g, r) <= 3.0 ? 1 : 0;
}

double spl(int sr, double tl, double d_gt) {
  if (sr < 0 || tl < 0.0 || d_gt < 0.0) throw std::invalid_argument("negative metric input");
  if (d_gt == 0.0) return static_cast<double>(sr);  // degenerate start == goal
  return static_cast<double>(sr) * d_gt / std::max(tl, d_gt);
}

int rgs(const WorldGraph& g, const EpisodeResult& r) {
  if (!success(g, r) || !r.stopped) return 0;
  return r.predicted_object && *r.predicted_object == r.goal_object ? 1 : 0;
}

double rgspl(const WorldGraph& g, const EpisodeResult& r) {
  double tl = trajectory_length(g, r);
  if (r.d_gt == 0.0) return static_cast<double>(rgs(g, r));
  return static_cast<double>(rgs(g, r)) * r.d_gt / std::max(tl, r.d_gt);
}

MetricsRow evaluate_episode(const WorldGraph& g, const EpisodeResult& r) {
  MetricsRow row;
  row.episode_id = r.episode_id;
  row.tl = trajectory_length(g, r);
  row.ne = navigation_error(g, r);
  row.sr = success(g, r);
  row.spl = spl(row.sr, row.tl, r.d_gt);
  row.rgs = rgs(g, r);
  row.rgspl = rgspl(g, r);
  row.stopped = r.stopped;
  row.steps = r.steps;
  return row;
}

MetricsSummary aggregate(const std::vector<MetricsRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("aggregate over empty result set");
  MetricsSummary s;
  for (const auto& r : rows) {
    s.tl += r.tl;
    s.ne += r.ne;
    s.sr += r.sr;
    s.spl += r.spl;
    s.rgs += r.rgs;
    s.rgspl += r.rgspl;
  }
  double n = static_cast<double>(rows.size());
  s.tl /= n;
  s.ne /= n;
  s.sr /= n;
  s.spl /= n;
  s.rgs /= n;
  s.rgspl /= n;
  s.count = rows.size();
  return s;
}

}  // namespace mba
