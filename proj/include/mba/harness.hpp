#ifndef MBA_HARNESS_HPP
#define MBA_HARNESS_HPP

#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>

#include "mba/agent.hpp"
#include "mba/metrics.hpp"
#include "mba/training.hpp"

namespace mba {

// Exit codes: 0 ok, 2 validation, 3 training abort, 4 checkpoint mismatch.
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MismatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat key = value configuration with CLI override precedence.
struct Config {
  std::map<std::string, std::string> kv;

  static Config load(const std::string& path);
  void set(const std::string& key, const std::string& value) { kv[key] = value; }
  bool has(const std::string& key) const { return kv.count(key) > 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
};

AgentConfig agent_config_from(const Config& cfg, const std::string& branches);
TrainConfig train_config_from(const Config& cfg);
WorldGenParams world_params_from(const Config& cfg, std::uint64_t seed);

std::vector<Episode> generate_episodes(const WorldGraph& g, int count, std::uint64_t seed_base,
                                       const Config& cfg);

// Greedy (or oracle) evaluation of an agent on a split.
struct EvalOutput {
  std::vector<MetricsRow> rows;
  MetricsSummary summary;
  std::string trajectories_jsonl;
};
EvalOutput evaluate(const Agent& agent, const WorldGraph& g, const std::vector<Episode>& episodes,
                    RolloutMode mode, bool dump_traj);

std::string results_csv(const std::vector<MetricsRow>& rows);
std::string summary_csv(const MetricsSummary& s);
std::string train_log_csv(const std::vector<EpochLog>& curve);

int cmd_gen_world(const Config& cfg, const std::string& out_dir, std::ostream& log);
int cmd_train(const Config& cfg, const std::string& out_dir, std::ostream& log);
int cmd_eval(const Config& cfg, const std::string& out_dir, std::ostream& log);
int cmd_ablate(const Config& cfg, const std::string& out_dir, std::ostream& log);

}  // namespace mba

#endif
