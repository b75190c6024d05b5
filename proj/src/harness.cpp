#include "mba/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "mba/io.hpp"

namespace mba {

namespace {

std::string fmt6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

std::string fmt2(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string trim(const std::string& s) {
  auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void ensure_dir(const std::string& dir) { std::filesystem::create_directories(dir); }

// Fill bare "pv" entries with the grid gamma.
std::string resolve_gamma(const std::string& branches, double gamma) {
  auto items = split(branches, ',');
  std::string out;
  for (auto& item : items) {
    if (!out.empty()) out += ",";
    if (item.size() >= 3 && item.compare(item.size() - 3, 3, ":pv") == 0) {
      char buf[48];
      std::snprintf(buf, sizeof buf, "%s:%g", item.c_str(), gamma);
      out += buf;
    } else {
      out += item;
    }
  }
  return out;
}

}  // namespace

Config Config::load(const std::string& path) {
  Config cfg;
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open config file: " + path);
  std::string line;
  while (std::getline(f, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError("config line without '=': " + line);
    cfg.kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return cfg;
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : it->second;
}

int Config::get_int(const std::string& key, int fallback) const {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : std::stoi(it->second);
}

double Config::get_double(const std::string& key, double fallback) const {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : std::stod(it->second);
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : std::stoull(it->second);
}

AgentConfig agent_config_from(const Config& cfg, const std::string& branches) {
  AgentConfig ac;
  ac.d_f = cfg.get_int("d_f", 64);
  ac.d_w = cfg.get_int("d_w", 32);
  ac.d_o = cfg.get_int("d_o", 16);
  ac.d_h = cfg.get_int("d_h", 64);
  ac.hidden = cfg.get_int("hidden", 128);
  ac.d_depth = cfg.get_int("d_depth", ac.d_f / 4);
  ac.init_seed = cfg.get_u64("init_seed", cfg.get_u64("seed", 0));
  ac.share_params = cfg.get_int("share_params", 0) != 0;
  ac.resample_each_step = cfg.get_int("resample_each_step", 0) != 0;
  ac.branches = BranchConfig::parse(branches);
  return ac;
}

TrainConfig train_config_from(const Config& cfg) {
  TrainConfig tc;
  tc.mu = cfg.get_double("mu", 0.2);
  tc.gamma = cfg.get_double("gamma", 0.5);
  tc.lr = cfg.get_double("lr", 0.01);
  tc.momentum = cfg.get_double("momentum", 0.9);
  tc.epochs = cfg.get_int("epochs", 30);
  tc.batch_size = cfg.get_int("batch", 8);
  tc.il_dagger_mix = cfg.get_double("il_dagger_mix", 0.5);
  tc.seed = cfg.get_u64("seed", 0);
  if (tc.mu < 0.0 || tc.gamma < 0.0 || tc.gamma > 1.0)
    throw ValidationError("invalid mu/gamma");
  return tc;
}

WorldGenParams world_params_from(const Config& cfg, std::uint64_t seed) {
  WorldGenParams wp;
  wp.seed = seed;
  wp.node_count = cfg.get_int("nodes", 30);
  wp.k_views = cfg.get_int("k_views", 12);
  wp.m_max_objects = cfg.get_int("m_max", 3);
  wp.feature_dim = cfg.get_int("d_f", 64);
  wp.object_dim = cfg.get_int("d_o", 16);
  wp.box_size = cfg.get_double("box", 20.0);
  wp.z_jitter = cfg.get_double("z_jitter", 0.5);
  wp.edge_radius = cfg.get_double("edge_radius", 3.0);
  return wp;
}

std::vector<Episode> generate_episodes(const WorldGraph& g, int count, std::uint64_t seed_base,
                                       const Config& cfg) {
  EpisodeParams ep;
  ep.instruction_dim = cfg.get_int("d_w", 32);
  ep.max_steps = cfg.get_int("max_steps", 15);
  ep.min_separation_m = cfg.get_double("min_separation_m", 6.0);
  ep.min_separation_edges = cfg.get_int("min_separation_edges", 3);
  ep.instruction_noise = cfg.get_double("instruction_noise", 0.1);
  std::vector<Episode> out;
  for (int i = 0; i < count; ++i) {
    ep.seed = seed_base + static_cast<std::uint64_t>(i);
    Episode e = make_episode(g, ep);
    e.episode_id = static_cast<int>(out.size());
    out.push_back(std::move(e));
  }
  return out;
}

EvalOutput evaluate(const Agent& agent, const WorldGraph& g, const std::vector<Episode>& episodes,
                    RolloutMode mode, bool dump_traj) {
  EvalOutput out;
  for (const auto& e : episodes) {
    RolloutResult r = agent.rollout(g, e, mode);
    EpisodeResult er;
    er.episode_id = e.episode_id;
    er.trajectory = r.trajectory;
    er.stopped = r.stopped;
    er.predicted_object = r.predicted_object;
    er.goal = e.goal;
    er.goal_object = e.goal_object;
    er.d_gt = e.gt_distance(g);
    er.steps = r.steps;
    out.rows.push_back(evaluate_episode(g, er));
    if (dump_traj) {
      for (std::size_t i = 0; i < r.records.size(); ++i) {
        const auto& rec = r.records[i];
        std::string line = "{\"episode_id\":" + std::to_string(e.episode_id) +
                           ",\"step\":" + std::to_string(i) +
                           ",\"current\":" + std::to_string(rec.decided_at) + ",\"visited\":[";
        for (std::size_t k = 0; k < rec.visited_snapshot.size(); ++k) {
          if (k) line += ",";
          line += std::to_string(rec.visited_snapshot[k]);
        }
        line += "],\"ghosts\":[";
        for (std::size_t k = 0; k < rec.ghost_snapshot.size(); ++k) {
          if (k) line += ",";
          line += std::to_string(rec.ghost_snapshot[k]);
        }
        line += "],\"chosen\":" +
                std::to_string(rec.fused.action_ids[static_cast<std::size_t>(rec.chosen_index)]) + "}\n";
        out.trajectories_jsonl += line;
      }
    }
  }
  out.summary = aggregate(out.rows);
  return out;
}

std::string results_csv(const std::vector<MetricsRow>& rows) {
  std::string csv = "episode_id,TL,NE,SR,SPL,RGS,RGSPL,stopped,steps\n";
  for (const auto& r : rows) {
    csv += std::to_string(r.episode_id) + "," + fmt6(r.tl) + "," + fmt6(r.ne) + "," +
           std::to_string(r.sr) + "," + fmt6(r.spl) + "," + std::to_string(r.rgs) + "," +
           fmt6(r.rgspl) + "," + std::to_string(r.stopped ? 1 : 0) + "," + std::to_string(r.steps) +
           "\n";
  }
  return csv;
}

std::string summary_csv(const MetricsSummary& s) {
  std::string csv = "count,TL,NE,SR_pct,SPL_pct,RGS_pct,RGSPL_pct\n";
  csv += std::to_string(s.count) + "," + fmt6(s.tl) + "," + fmt6(s.ne) + "," + fmt2(s.sr * 100.0) +
         "," + fmt2(s.spl * 100.0) + "," + fmt2(s.rgs * 100.0) + "," + fmt2(s.rgspl * 100.0) + "\n";
  return csv;
}

std::string train_log_csv(const std::vector<EpochLog>& curve) {
  std::string csv = "epoch,mean_loss,term1,term2,term3,train_SR\n";
  for (const auto& e : curve)
    csv += std::to_string(e.epoch) + "," + fmt6(e.mean_loss) + "," + fmt6(e.term1) + "," +
           fmt6(e.term2) + "," + fmt6(e.term3) + "," + fmt6(e.train_sr) + "\n";
  return csv;
}

int cmd_gen_world(const Config& cfg, const std::string& out_dir, std::ostream& log) {
  ensure_dir(out_dir);
  std::uint64_t seed = cfg.get_u64("seed", 0);
  WorldGraph g = generate_world(world_params_from(cfg, seed));
  int n_episodes = cfg.get_int("episodes", 100);
  std::vector<Episode> episodes =
      n_episodes > 0 ? generate_episodes(g, n_episodes, cfg.get_u64("episode_seed_base", 0), cfg)
                     : std::vector<Episode>{};
  write_file(out_dir + "/world.json", world_to_json(g));
  write_file(out_dir + "/episodes.jsonl", episodes_to_jsonl(episodes));
  log << "world: K=" << g.node_count() << " edges=" << g.edges.size()
      << " episodes=" << episodes.size() << "\n";
  return 0;
}

namespace {

std::map<std::string, std::string> agent_meta(const AgentConfig& ac, const WorldGraph& g) {
  std::map<std::string, std::string> meta;
  meta["branches"] = ac.branches.to_string();
  meta["d_f"] = std::to_string(ac.d_f);
  meta["d_w"] = std::to_string(ac.d_w);
  meta["d_o"] = std::to_string(ac.d_o);
  meta["d_h"] = std::to_string(ac.d_h);
  meta["hidden"] = std::to_string(ac.hidden);
  meta["d_depth"] = std::to_string(ac.d_depth);
  meta["init_seed"] = std::to_string(ac.init_seed);
  meta["world_seed"] = std::to_string(g.seed);
  return meta;
}

}  // namespace

int cmd_train(const Config& cfg, const std::string& out_dir, std::ostream& log) {
  ensure_dir(out_dir);
  WorldGraph g = world_from_json(read_file(cfg.get("world_file", "world.json")));
  std::vector<Episode> episodes = episodes_from_jsonl(read_file(cfg.get("episodes_file", "episodes.jsonl")));
  AgentConfig ac = agent_config_from(cfg, cfg.get("branches", "g:og,l:og"));
  Agent agent(ac);
  TrainConfig tc = train_config_from(cfg);
  try {
    auto curve = train(agent, {{&g, episodes}}, tc);
    write_file(out_dir + "/train_log.csv", train_log_csv(curve));
  } catch (const std::runtime_error& e) {
    throw TrainingError(e.what());
  }
  write_file(out_dir + "/checkpoint.json", checkpoint_to_json(agent.params(), agent_meta(ac, g)));
  log << "trained " << tc.epochs << " epochs on " << episodes.size() << " episodes\n";
  return 0;
}

int cmd_eval(const Config& cfg, const std::string& out_dir, std::ostream& log) {
  ensure_dir(out_dir);
  WorldGraph g = world_from_json(read_file(cfg.get("world_file", "world.json")));
  std::vector<Episode> episodes = episodes_from_jsonl(read_file(cfg.get("episodes_file", "episodes.jsonl")));
  std::string policy = cfg.get("policy", "greedy");
  RolloutMode mode;
  if (policy == "greedy") mode = RolloutMode::Greedy;
  else if (policy == "sample") mode = RolloutMode::Sample;
  else if (policy == "oracle") mode = RolloutMode::Oracle;
  else throw ValidationError("unknown policy: " + policy);

  std::string ckpt_path = cfg.get("checkpoint_file", "");
  AgentConfig ac;
  if (!ckpt_path.empty()) {
    // reconstruct the agent from checkpoint meta, then load weights
    std::map<std::string, std::string> meta = checkpoint_meta(read_file(ckpt_path));
    Config mcfg;
    for (const auto& [k, v] : meta) mcfg.set(k, v);
    ac = agent_config_from(mcfg, meta.count("branches") ? meta.at("branches") : cfg.get("branches", "g:og,l:og"));
    ac.init_seed = mcfg.get_u64("init_seed", 0);
    if (meta.count("world_seed") && std::stoull(meta.at("world_seed")) != g.seed)
      throw MismatchError("checkpoint was trained on a different world (seed mismatch)");
    Agent agent(ac);
    std::map<std::string, std::string> meta2;
    try {
      checkpoint_from_json(read_file(ckpt_path), agent.params(), meta2);
    } catch (const std::runtime_error& e) {
      throw MismatchError(e.what());
    }
    EvalOutput out = evaluate(agent, g, episodes, mode, cfg.get_int("dump_traj", 0) != 0);
    write_file(out_dir + "/results.csv", results_csv(out.rows));
    write_file(out_dir + "/summary.csv", summary_csv(out.summary));
    if (cfg.get_int("dump_traj", 0) != 0)
      write_file(out_dir + "/trajectories.jsonl", out.trajectories_jsonl);
    log << summary_csv(out.summary);
    return 0;
  }
  if (mode != RolloutMode::Oracle)
    throw ValidationError("a checkpoint is required unless policy=oracle");
  ac = agent_config_from(cfg, cfg.get("branches", "g:og,l:og"));
  Agent agent(ac);
  EvalOutput out = evaluate(agent, g, episodes, mode, cfg.get_int("dump_traj", 0) != 0);
  write_file(out_dir + "/results.csv", results_csv(out.rows));
  write_file(out_dir + "/summary.csv", summary_csv(out.summary));
  if (cfg.get_int("dump_traj", 0) != 0)
    write_file(out_dir + "/trajectories.jsonl", out.trajectories_jsonl);
  log << summary_csv(out.summary);
  return 0;
}

namespace {

struct CellResult {
  MetricsSummary seen, unseen;
  std::string status = "ok";
};

CellResult run_cell(const Config& cfg, const std::string& branches, double gamma,
                    std::uint64_t seed) {
  CellResult out;
  int train_worlds = cfg.get_int("train_worlds", 2);
  int eval_worlds = cfg.get_int("eval_worlds", 2);
  int train_eps = cfg.get_int("train_episodes", 40);
  int eval_eps = cfg.get_int("eval_episodes", 25);

  std::vector<WorldGraph> worlds;
  std::vector<TrainDataset> data;
  for (int w = 0; w < train_worlds; ++w)
    worlds.push_back(generate_world(world_params_from(cfg, (seed + 1) * 1000 + static_cast<std::uint64_t>(w))));
  for (int w = 0; w < train_worlds; ++w)
    data.push_back({&worlds[static_cast<std::size_t>(w)],
                    generate_episodes(worlds[static_cast<std::size_t>(w)], train_eps, 0, cfg)});

  Config acfg = cfg;
  acfg.set("init_seed", std::to_string(seed));
  AgentConfig ac = agent_config_from(acfg, resolve_gamma(branches, gamma));
  Agent agent(ac);
  TrainConfig tc = train_config_from(cfg);
  tc.seed = seed;
  tc.gamma = gamma;
  train(agent, data, tc);

  std::vector<MetricsRow> seen_rows, unseen_rows;
  for (int w = 0; w < train_worlds; ++w) {
    auto eps = generate_episodes(worlds[static_cast<std::size_t>(w)], eval_eps, 100000, cfg);
    auto ev = evaluate(agent, worlds[static_cast<std::size_t>(w)], eps, RolloutMode::Greedy, false);
    seen_rows.insert(seen_rows.end(), ev.rows.begin(), ev.rows.end());
  }
  for (int w = 0; w < eval_worlds; ++w) {
    WorldGraph ug = generate_world(world_params_from(cfg, 500000 + (seed + 1) * 1000 + static_cast<std::uint64_t>(w)));
    auto eps = generate_episodes(ug, eval_eps, 200000, cfg);
    auto ev = evaluate(agent, ug, eps, RolloutMode::Greedy, false);
    unseen_rows.insert(unseen_rows.end(), ev.rows.begin(), ev.rows.end());
  }
  out.seen = aggregate(seen_rows);
  out.unseen = aggregate(unseen_rows);
  return out;
}

std::pair<std::string, std::string> pivot_keys(const std::string& branches) {
  BranchConfig bc = BranchConfig::parse(branches);
  std::string gkey, lkey;
  for (int s : {kBaseGlobal, kAncGlobal}) {
    const auto& spec = bc.slots[static_cast<std::size_t>(s)];
    if (spec) gkey += (gkey.empty() ? "" : "+") + spec->to_string();
  }
  for (int s : {kBaseLocal, kAncLocal}) {
    const auto& spec = bc.slots[static_cast<std::size_t>(s)];
    if (spec) lkey += (lkey.empty() ? "" : "+") + spec->to_string();
  }
  if (gkey.empty()) gkey = "-";
  if (lkey.empty()) lkey = "-";
  return {gkey, lkey};
}

}  // namespace

int cmd_ablate(const Config& cfg, const std::string& out_dir, std::ostream& log) {
  ensure_dir(out_dir);
  auto configs = split(cfg.get("ablate.configs", "g:og,l:og|g:og|g:og,l:rn|g:og,l:og,g:pv,l:pv"), '|');
  auto gamma_strs = split(cfg.get("ablate.gammas", "0.5"), ',');
  auto seed_strs = split(cfg.get("ablate.seeds", "0,1,2,3,4"), ',');
  if (configs.empty() || gamma_strs.empty() || seed_strs.empty())
    throw ValidationError("ablate needs nonempty configs, gammas and seeds");

  std::string grid = "config,gamma,seed,split,SR,SPL,RGS,RGSPL,status\n";
  // (gkey, lkey) -> unseen SPL samples
  std::map<std::pair<std::string, std::string>, std::vector<double>> pivot;
  std::vector<std::string> lkeys, gkeys;

  for (const auto& conf : configs) {
    for (const auto& gs : gamma_strs) {
      double gamma = std::stod(gs);
      for (const auto& ss : seed_strs) {
        std::uint64_t seed = std::stoull(ss);
        std::string resolved = resolve_gamma(conf, gamma);
        CellResult cell;
        try {
          cell = run_cell(cfg, conf, gamma, seed);
        } catch (const std::exception& e) {
          cell.status = std::string("failed: ") + e.what();
        }
        for (const char* splitname : {"seen", "unseen"}) {
          const MetricsSummary& s = std::string(splitname) == "seen" ? cell.seen : cell.unseen;
          grid += "\"" + conf + "\"," + fmt6(gamma) + "," + ss + "," + splitname + "," + fmt6(s.sr) + "," +
                  fmt6(s.spl) + "," + fmt6(s.rgs) + "," + fmt6(s.rgspl) + "," + cell.status + "\n";
        }
        if (cell.status == "ok") {
          auto keys = pivot_keys(resolved);
          pivot[keys].push_back(cell.unseen.spl);
          if (std::find(gkeys.begin(), gkeys.end(), keys.first) == gkeys.end()) gkeys.push_back(keys.first);
          if (std::find(lkeys.begin(), lkeys.end(), keys.second) == lkeys.end()) lkeys.push_back(keys.second);
        }
        log << "cell " << conf << " gamma=" << gs << " seed=" << ss << " " << cell.status << "\n";
      }
    }
  }
  write_file(out_dir + "/grid.csv", grid);

  // pivoted mean unseen SPL: rows = global-slot specs, cols = local-slot specs
  std::string pcsv = "global\\local";
  for (const auto& l : lkeys) pcsv += "," + l;
  pcsv += "\n";
  for (const auto& gk : gkeys) {
    pcsv += gk;
    for (const auto& lk : lkeys) {
      auto it = pivot.find({gk, lk});
      pcsv += ",";
      if (it != pivot.end()) {
        double m = 0.0;
        for (double x : it->second) m += x;
        pcsv += fmt6(m / static_cast<double>(it->second.size()));
      }
    }
    pcsv += "\n";
  }
  write_file(out_dir + "/pivot.csv", pcsv);
  return 0;
}

}  // namespace mba
