#ifndef MBA_AGENT_HPP
#define MBA_AGENT_HPP

#include <array>
#include <optional>
#include <string>

#include "mba/features.hpp"
#include "mba/neural.hpp"
#include "mba/topomap.hpp"
#include "mba/world.hpp"

namespace mba {

// Branch slots in fixed order: base local, base global, ancillary local,
// ancillary global. The lambda concatenation uses exactly this order.
enum BranchSlot { kBaseLocal = 0, kBaseGlobal = 1, kAncLocal = 2, kAncGlobal = 3 };

struct BranchConfig {
  std::array<std::optional<PerturbationSpec>, 4> slots;

  // Comma list of scope:spec, e.g. "g:og,l:og,g:pv:0.5,l:pv:0.5". The
  // first l/g entries fill the base pair, the second fill the ancillary
  // pair. "-" entries are skipped.
  static BranchConfig parse(const std::string& text);
  std::string to_string() const;

  int branch_count() const;
  bool has_local() const { return slots[kBaseLocal] || slots[kAncLocal]; }
  bool has_global() const { return slots[kBaseGlobal] || slots[kAncGlobal]; }
  bool is_local_slot(int s) const { return s == kBaseLocal || s == kAncLocal; }
  std::string signature() const;  // active slots, e.g. "la-ga"
};

struct AgentConfig {
  int d_f = 64;
  int d_w = 32;
  int d_o = 16;
  int d_h = 64;
  int hidden = 128;
  int d_depth = 16;
  BranchConfig branches;
  std::uint64_t init_seed = 0;
  bool share_params = false;        // ancillary slots reuse base parameters
  bool resample_each_step = false;  // redraw pv/rn perturbations every step
};

// One branch's scored action space: index 0 is stop (node id -1), the rest
// are node-valued actions.
struct BranchOutput {
  std::vector<NodeId> action_ids;  // size = token count, [0] == -1 (stop)
  std::vector<Vec> hidden;         // per-token d_h vectors; [0] is the state token
};

struct FusedPrediction {
  std::vector<NodeId> action_ids;  // [0] == -1 (stop)
  Vec probs;
  Vec lambda;
  double sigma = 1.0;
};

struct BranchCache {
  BranchOutput out;
  Vec logits, probs;
  std::vector<nn::FfnCache> enc_caches;
  std::vector<nn::FfnCache> score_caches;
  std::vector<Vec> vis;       // per-token visual vector fed to proj_vis (d_f)
  std::vector<Vec> raw_vis;   // pre-projection vectors for depth slots (d_depth)
  std::vector<Vec> pv;        // proj_vis outputs
  Vec iw;                     // proj_instr output
  Vec instr;
};

struct StepCache {
  std::array<std::optional<BranchCache>, 4> branches;
  Vec lambda_in;
  nn::FfnCache lambda_ffn;
  Vec lambda_sig;
  Vec lambda;
  Vec pl, pg;                       // renormalized aggregates
  std::vector<NodeId> local_ids;    // without stop
  std::vector<NodeId> global_ids;   // without stop
  std::vector<std::size_t> embed;   // local token index -> fused index
  double lam_l = 0.0, lam_g = 0.0;  // slot-weight mass per scope
  Vec stop_l, stop_g;
  nn::FfnCache gate_ffn;
  double sigma = 1.0;
  bool gated = false;
  Vec pa_raw;
  FusedPrediction fused;
  // object head
  bool has_objects = false;
  Vec state_pool;
  Vec obj_iw;
  std::vector<Vec> obj_feats;
  std::vector<Vec> obj_pf;
  std::vector<nn::FfnCache> obj_caches;
  Vec obj_logits;
  Vec po;
};

enum class RolloutMode { Greedy, Sample, TeacherForced, Oracle };

struct StepRecord {
  NodeId decided_at = -1;
  FusedPrediction fused;
  int chosen_index = 0;      // index into fused.action_ids
  int a_star_index = -1;     // DAgger target index
  int a_gt_index = -1;       // ground-truth next action (teacher-forced steps)
  bool teacher_forced = false;
  std::vector<NodeId> visited_snapshot;
  std::vector<NodeId> ghost_snapshot;
};

struct RolloutResult {
  std::vector<NodeId> trajectory;
  bool stopped = false;
  int steps = 0;
  std::optional<int> predicted_object;
  Vec object_probs;
  std::vector<StepRecord> records;
};

class Agent {
 public:
  explicit Agent(const AgentConfig& cfg);

  const AgentConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // Single-branch forwards (hidden states only; scores are a separate op).
  BranchOutput local_branch(int slot, const Vec& instr, const PanoramaFeatures& pano,
                            BranchCache* cache = nullptr) const;
  BranchOutput global_branch(int slot, const Vec& instr, const TopoMap& map,
                             const WorldGraph& g, BranchCache* cache = nullptr) const;
  Vec branch_scores(int slot, const BranchOutput& b, BranchCache* cache = nullptr) const;
  Vec branch_weights(const std::vector<Vec>& state_tokens, StepCache* cache = nullptr) const;

  // Full decision step: branches, weights, aggregation, dynamic fusion and
  // (optionally) object prediction. Panoramas must match each slot's
  // strategy; maps are required for global slots.
  StepCache step(const Vec& instr, const std::array<const PanoramaFeatures*, 4>& panos,
                 const std::array<const TopoMap*, 4>& maps, NodeId current, const WorldGraph& g,
                 const std::vector<ObjectSpec>* objects) const;

  // Accumulates parameter gradients for one decision step. d_pa is the
  // gradient w.r.t. the fused probability vector; d_po (may be empty) the
  // gradient w.r.t. the object distribution.
  void step_backward(StepCache& c, const Vec& d_pa, const Vec& d_po) const;

  RolloutResult rollout(const WorldGraph& g, const Episode& episode, RolloutMode mode,
                        std::uint64_t sample_seed = 0,
                        std::vector<StepCache>* caches = nullptr) const;

 private:
  struct SlotNets {
    nn::Dense proj_instr, proj_vis;
    nn::Ffn enc, score;
    std::optional<nn::Dense> depth_proj;
  };

  std::string slot_prefix(int s) const;
  Vec slot_visual(int slot, const Vec& raw, BranchCache* cache, std::size_t token) const;
  BranchOutput encode_tokens(int slot, const Vec& instr, const std::vector<NodeId>& ids,
                             const std::vector<Vec>& raw_vis,
                             const std::vector<std::array<double, 4>>& dirs,
                             BranchCache* cache) const;

  AgentConfig cfg_;
  nn::ParamStore params_;
  std::array<std::optional<SlotNets>, 4> nets_;
  std::optional<nn::Ffn> lambda_ffn_;
  std::optional<nn::Ffn> gate_ffn_;
  nn::Dense obj_proj_instr_, obj_proj_feat_;
  nn::Ffn obj_head_;
  int arity_ = 0;
};

// Stop if current == goal, otherwise the action whose traversal minimizes
// the remaining geodesic distance to the goal: argmin over adjacent actions
// of edge(current, n) + geodesic(n, goal), ties to the lowest node id.
// Returns an index into action_ids (0 == stop).
int dagger_target(const WorldGraph& g, NodeId current, const std::vector<NodeId>& action_ids,
                  NodeId goal);

Vec predict_objects_probs(const StepCache& c);

}  // namespace mba

#endif
