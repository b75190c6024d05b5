#include "mba/training.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mba/rng.hpp"

namespace mba {

LossTerms episode_loss(const std::vector<FusedPrediction>& predictions,
                       const std::vector<StepSupervision>& supervision, const Vec& object_probs,
                       int o_gt, double mu) {
  if (predictions.size() != supervision.size())
    throw std::invalid_argument("predictions and supervision are misaligned");
  LossTerms t;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& sup = supervision[i];
    if (sup.a_star_index < 0) throw std::invalid_argument("a_star must be defined on every step");
    if (sup.teacher_forced) {
      if (sup.a_gt_index < 0) throw std::invalid_argument("teacher-forced step without a_gt");
      t.term1 += mu * nn::cross_entropy(predictions[i].probs, static_cast<std::size_t>(sup.a_gt_index));
    } else {
      t.term2 += nn::cross_entropy(predictions[i].probs, static_cast<std::size_t>(sup.a_star_index));
    }
  }
  if (!object_probs.empty() && o_gt >= 0)
    t.term3 = nn::cross_entropy(object_probs, static_cast<std::size_t>(o_gt));
  return t;
}

LossTerms rollout_loss_backward(const Agent& agent, const WorldGraph& g, const Episode& episode,
                                bool teacher_forced, double mu, std::uint64_t sample_seed,
                                RolloutResult* out_result) {
  std::vector<StepCache> caches;
  RolloutResult r = agent.rollout(g, episode,
                                  teacher_forced ? RolloutMode::TeacherForced : RolloutMode::Sample,
                                  sample_seed, &caches);
  LossTerms t;
  for (std::size_t i = 0; i < caches.size(); ++i) {
    StepCache& sc = caches[i];
    const StepRecord& rec = r.records[i];
    Vec d_pa(sc.fused.probs.size(), 0.0);
    if (teacher_forced) {
      auto idx = static_cast<std::size_t>(rec.a_gt_index);
      t.term1 += mu * nn::cross_entropy(sc.fused.probs, idx);
      d_pa[idx] = -mu / std::max(sc.fused.probs[idx], 1e-300);
    } else {
      auto idx = static_cast<std::size_t>(rec.a_star_index);
      t.term2 += nn::cross_entropy(sc.fused.probs, idx);
      d_pa[idx] = -1.0 / std::max(sc.fused.probs[idx], 1e-300);
    }
    Vec d_po;
    bool last = i + 1 == caches.size();
    bool stop_here = last && r.stopped && sc.has_objects &&
                     episode.goal_object < static_cast<int>(sc.po.size());
    if (stop_here) {
      auto idx = static_cast<std::size_t>(episode.goal_object);
      t.term3 += nn::cross_entropy(sc.po, idx);
      d_po.assign(sc.po.size(), 0.0);
      d_po[idx] = -1.0 / std::max(sc.po[idx], 1e-300);
    }
    agent.step_backward(sc, d_pa, d_po);
  }
  if (out_result) *out_result = std::move(r);
  return t;
}

std::vector<EpochLog> train(Agent& agent, const std::vector<TrainDataset>& data,
                            const TrainConfig& cfg) {
  if (cfg.il_dagger_mix < 0.0 || cfg.il_dagger_mix > 1.0)
    throw std::invalid_argument("il_dagger_mix must lie in [0,1]");
  struct Item {
    const WorldGraph* g;
    const Episode* e;
  };
  std::vector<Item> items;
  for (const auto& d : data)
    for (const auto& e : d.episodes) items.push_back({d.world, &e});
  if (items.empty()) throw std::invalid_argument("empty training set");

  auto& ps = agent.params();
  std::map<std::string, Vec> velocity;
  for (const auto& [name, t] : ps.params) velocity[name].assign(t.size(), 0.0);

  std::vector<EpochLog> curve;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // deterministic per-epoch shuffle
    std::vector<std::size_t> order(items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(hash_mix(cfg.seed, hash_mix(static_cast<std::uint64_t>(epoch), hash_str("epoch-shuffle"))));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);

    EpochLog log;
    log.epoch = epoch;
    double mix_acc = 0.0;
    int in_batch = 0;
    int successes = 0;
    ps.zero_grad();

    auto apply_update = [&](int count) {
      if (count == 0) return;
      for (auto& [name, t] : ps.params) {
        Vec& v = velocity[name];
        for (std::size_t i = 0; i < t.size(); ++i) {
          double grad = t.grad[i] / static_cast<double>(count);
          v[i] = cfg.momentum * v[i] + grad;
          t.data[i] -= cfg.lr * v[i];
        }
      }
      ps.zero_grad();
    };

    for (std::size_t oi = 0; oi < order.size(); ++oi) {
      const Item& it = items[order[oi]];
      mix_acc += cfg.il_dagger_mix;
      bool teacher_forced = mix_acc >= 1.0;
      if (teacher_forced) mix_acc -= 1.0;
      std::uint64_t sample_seed = hash_mix(cfg.seed, hash_mix(static_cast<std::uint64_t>(epoch), oi));
      RolloutResult r;
      LossTerms t = rollout_loss_backward(agent, *it.g, *it.e, teacher_forced, cfg.mu, sample_seed, &r);
      double loss = t.total();
      if (!std::isfinite(loss)) throw std::runtime_error("non-finite training loss");
      log.mean_loss += loss;
      log.term1 += t.term1;
      log.term2 += t.term2;
      log.term3 += t.term3;
      NodeId final_node = r.trajectory.back();
      if (geodesic(*it.g, final_node, it.e->goal) <= 3.0) ++successes;
      if (++in_batch == cfg.batch_size) {
        apply_update(in_batch);
        in_batch = 0;
      }
    }
    apply_update(in_batch);
    double n = static_cast<double>(order.size());
    log.mean_loss /= n;
    log.term1 /= n;
    log.term2 /= n;
    log.term3 /= n;
    log.train_sr = static_cast<double>(successes) / n;
    curve.push_back(log);
  }
  return curve;
}

}  // namespace mba
