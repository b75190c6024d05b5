#ifndef MBA_TRAINING_HPP
#define MBA_TRAINING_HPP

#include "mba/agent.hpp"

namespace mba {

struct TrainConfig {
  double mu = 0.2;                // weight of the teacher-forced action term
  double gamma = 0.5;             // default perturbation degree
  double lr = 0.01;
  double momentum = 0.9;
  int epochs = 30;
  int batch_size = 8;
  double il_dagger_mix = 0.5;     // fraction of teacher-forced rollouts
  std::uint64_t seed = 0;
};

struct StepSupervision {
  int a_gt_index = -1;    // defined only on teacher-forced steps
  int a_star_index = -1;  // always defined
  bool teacher_forced = false;
};

struct LossTerms {
  double term1 = 0.0;  // mu * CE(P_a, a_gt) over teacher-forced steps
  double term2 = 0.0;  // CE(P_a, a*) over student steps
  double term3 = 0.0;  // CE(P_o, o_gt) at stop termination
  double total() const { return term1 + term2 + term3; }
};

// Loss of one episode from its per-step fused distributions. object_probs
// may be empty when the object term does not apply.
LossTerms episode_loss(const std::vector<FusedPrediction>& predictions,
                       const std::vector<StepSupervision>& supervision, const Vec& object_probs,
                       int o_gt, double mu);

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double term1 = 0.0, term2 = 0.0, term3 = 0.0;
  double train_sr = 0.0;
};

struct TrainDataset {
  const WorldGraph* world = nullptr;
  std::vector<Episode> episodes;
};

// Trains in place; returns the per-epoch loss curve. Alternates
// teacher-forced and student-sampled rollouts per il_dagger_mix, SGD with
// momentum, bitwise deterministic in (agent init, datasets, cfg).
std::vector<EpochLog> train(Agent& agent, const std::vector<TrainDataset>& data,
                            const TrainConfig& cfg);

// Runs one rollout, accumulates gradients of its Eq.-style loss into the
// agent's parameter store, and returns the loss terms. Exposed for the
// gradient-check tests.
LossTerms rollout_loss_backward(const Agent& agent, const WorldGraph& g, const Episode& episode,
                                bool teacher_forced, double mu, std::uint64_t sample_seed,
                                RolloutResult* out_result = nullptr);

}  // namespace mba

#endif
