#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mba/harness.hpp"

namespace {

// CLI options override config-file keys.
mba::Config build_config(const std::string& config_path, const std::vector<std::string>& sets) {
  mba::Config cfg;
  if (!config_path.empty()) cfg = mba::Config::load(config_path);
  for (const auto& kv : sets) {
    auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw mba::ValidationError("--set expects key=value, got: " + kv);
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-branch navigation testbed"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".";
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "key = value config file");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--set", sets, "override a config key (key=value)");

  auto* gen = app.add_subcommand("gen-world", "generate a world and episode set");
  auto* tr = app.add_subcommand("train", "train an agent");
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  auto* ab = app.add_subcommand("ablate", "run the strategy grid");
  for (auto* sub : {gen, tr, ev, ab}) sub->fallthrough();

  std::map<std::string, std::string> direct;  // key -> value captured from options
  auto bind = [&direct](CLI::App* sub, const std::string& flag, const std::string& key,
                        const std::string& help) {
    sub->add_option_function<std::string>(
        flag, [&direct, key](const std::string& v) { direct[key] = v; }, help);
  };

  bind(gen, "--seed", "seed", "world seed");
  bind(gen, "--nodes", "nodes", "node count");
  bind(gen, "--episodes", "episodes", "episode count");

  bind(tr, "--world", "world_file", "world JSON path");
  bind(tr, "--episodes", "episodes_file", "episodes JSONL path");
  bind(tr, "--branches", "branches", "branch configuration, e.g. g:og,l:og");
  bind(tr, "--epochs", "epochs", "training epochs");
  bind(tr, "--lr", "lr", "learning rate");
  bind(tr, "--seed", "seed", "training seed");

  bind(ev, "--world", "world_file", "world JSON path");
  bind(ev, "--episodes", "episodes_file", "episodes JSONL path");
  bind(ev, "--checkpoint", "checkpoint_file", "checkpoint JSON path");
  bind(ev, "--policy", "policy", "greedy | sample | oracle");
  bind(ev, "--dump-traj", "dump_traj", "1 to write trajectories.jsonl");

  bind(ab, "--configs", "ablate.configs", "'|'-separated branch configurations");
  bind(ab, "--gammas", "ablate.gammas", "comma-separated gamma values");
  bind(ab, "--seeds", "ablate.seeds", "comma-separated seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    mba::Config cfg = build_config(config_path, sets);
    for (const auto& [k, v] : direct) cfg.set(k, v);
    if (gen->parsed()) return mba::cmd_gen_world(cfg, out_dir, std::cout);
    if (tr->parsed()) return mba::cmd_train(cfg, out_dir, std::cout);
    if (ev->parsed()) return mba::cmd_eval(cfg, out_dir, std::cout);
    if (ab->parsed()) return mba::cmd_ablate(cfg, out_dir, std::cout);
    std::cerr << "no subcommand\n";
    return 2;
  } catch (const mba::MismatchError& e) {
    std::cerr << "mismatch: " << e.what() << "\n";
    return 4;
  } catch (const mba::TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
