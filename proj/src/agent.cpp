#include "mba/agent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <sstream>
#include <stdexcept>

#include "mba/rng.hpp"

namespace mba {

namespace {

const char* kSlotNames[4] = {"la", "ga", "lb", "gb"};

Vec mean_of(const std::vector<Vec>& vs, std::size_t dim) {
  Vec m(dim, 0.0);
  if (vs.empty()) return m;
  for (const Vec& v : vs)
    for (std::size_t j = 0; j < dim; ++j) m[j] += v[j];
  for (double& x : m) x /= static_cast<double>(vs.size());
  return m;
}

std::array<double, 4> relative_position(const WorldGraph& g, NodeId from, NodeId to) {
  const auto& a = g.node(from).position;
  const auto& b = g.node(to).position;
  double dx = b[0] - a[0], dy = b[1] - a[1], dz = b[2] - a[2];
  double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
  double theta = std::atan2(dy, dx);
  return {std::sin(theta), std::cos(theta), std::tanh(dist / 10.0), dz};
}

std::vector<double> distances_from(const WorldGraph& g, NodeId src) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(static_cast<std::size_t>(g.node_count()), inf);
  dist[static_cast<std::size_t>(src)] = 0.0;
  using E = std::pair<double, NodeId>;
  std::priority_queue<E, std::vector<E>, std::greater<>> pq;
  pq.push({0.0, src});
  while (!pq.empty()) {
    auto [d, n] = pq.top();
    pq.pop();
    if (d > dist[static_cast<std::size_t>(n)]) continue;
    for (NodeId w : g.neighbors(n)) {
      double nd = d + g.edge_weight(n, w);
      if (nd < dist[static_cast<std::size_t>(w)]) {
        dist[static_cast<std::size_t>(w)] = nd;
        pq.push({nd, w});
      }
    }
  }
  return dist;
}

}  // namespace

BranchConfig BranchConfig::parse(const std::string& text) {
  BranchConfig c;
  std::stringstream ss(text);
  std::string item;
  int locals = 0, globals = 0;
  while (std::getline(ss, item, ',')) {
    if (item.empty() || item == "-") continue;
    auto colon = item.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("branch entry needs scope:spec, got " + item);
    std::string scope = item.substr(0, colon);
    PerturbationSpec spec = PerturbationSpec::parse(item.substr(colon + 1));
    if (spec.kind == PerturbationKind::None) continue;
    int slot;
    if (scope == "l") {
      if (locals >= 2) throw std::invalid_argument("more than two local branches");
      slot = locals == 0 ? kBaseLocal : kAncLocal;
      ++locals;
    } else if (scope == "g") {
      if (globals >= 2) throw std::invalid_argument("more than two global branches");
      slot = globals == 0 ? kBaseGlobal : kAncGlobal;
      ++globals;
    } else {
      throw std::invalid_argument("branch scope must be l or g, got " + scope);
    }
    c.slots[static_cast<std::size_t>(slot)] = spec;
  }
  if (c.branch_count() == 0) throw std::invalid_argument("branch config has no branches");
  return c;
}

std::string BranchConfig::to_string() const {
  std::string out;
  for (int s : {kBaseGlobal, kBaseLocal, kAncGlobal, kAncLocal}) {
    const auto& spec = slots[static_cast<std::size_t>(s)];
    if (!spec) continue;
    if (!out.empty()) out += ",";
    out += (is_local_slot(s) ? "l:" : "g:") + spec->to_string();
  }
  return out;
}

int BranchConfig::branch_count() const {
  int n = 0;
  for (const auto& s : slots)
    if (s) ++n;
  return n;
}

std::string BranchConfig::signature() const {
  std::string sig;
  for (int s = 0; s < 4; ++s) {
    if (!slots[static_cast<std::size_t>(s)]) continue;
    if (!sig.empty()) sig += "-";
    sig += kSlotNames[s];
  }
  return sig;
}

std::string Agent::slot_prefix(int s) const {
  if (cfg_.share_params && s >= 2) {
    int base = s == kAncLocal ? kBaseLocal : kBaseGlobal;
    if (cfg_.branches.slots[static_cast<std::size_t>(base)]) s = base;
  }
  return std::string("b.") + kSlotNames[s];
}

Agent::Agent(const AgentConfig& cfg) : cfg_(cfg) {
  const auto d_f = static_cast<std::size_t>(cfg_.d_f);
  const auto d_w = static_cast<std::size_t>(cfg_.d_w);
  const auto d_o = static_cast<std::size_t>(cfg_.d_o);
  const auto d_h = static_cast<std::size_t>(cfg_.d_h);
  const auto hid = static_cast<std::size_t>(cfg_.hidden);
  const std::uint64_t seed = cfg_.init_seed;
  arity_ = cfg_.branches.branch_count();
  if (arity_ < 1) throw std::invalid_argument("agent needs at least one branch");

  for (int s = 0; s < 4; ++s) {
    const auto& spec = cfg_.branches.slots[static_cast<std::size_t>(s)];
    if (!spec) continue;
    std::string p = slot_prefix(s);
    SlotNets nets{
        nn::Dense::create(params_, p + ".proj_instr", d_w, d_h, seed),
        nn::Dense::create(params_, p + ".proj_vis", d_f, d_h, seed),
        nn::Ffn::create(params_, p + ".enc", d_f + 4 + d_h, hid, d_h, seed),
        nn::Ffn::create(params_, p + ".score", d_h, hid, 1, seed),
        std::nullopt,
    };
    if (spec->kind == PerturbationKind::Depth)
      nets.depth_proj = nn::Dense::create(params_, p + ".depth_proj",
                                          static_cast<std::size_t>(cfg_.d_depth), d_f, seed);
    nets_[static_cast<std::size_t>(s)] = nets;
  }

  lambda_ffn_ = nn::Ffn::create(params_, "agg." + cfg_.branches.signature(),
                                static_cast<std::size_t>(arity_) * d_h, hid,
                                static_cast<std::size_t>(arity_), seed);
  if (cfg_.branches.has_local() && cfg_.branches.has_global())
    gate_ffn_ = nn::Ffn::create(params_, "fuse.gate", 2 * d_h, hid, 1, seed);
  obj_proj_instr_ = nn::Dense::create(params_, "obj.proj_instr", d_w, d_h, seed);
  obj_proj_feat_ = nn::Dense::create(params_, "obj.proj_feat", d_o, d_h, seed);
  obj_head_ = nn::Ffn::create(params_, "obj.head", d_o + 2 * d_h, hid, 1, seed);
}

Vec Agent::slot_visual(int slot, const Vec& raw, BranchCache* cache, std::size_t token) const {
  const auto& nets = *nets_[static_cast<std::size_t>(slot)];
  if (!nets.depth_proj) {
    if (static_cast<int>(raw.size()) != cfg_.d_f)
      throw std::invalid_argument("visual feature dimension mismatch");
    return raw;
  }
  if (static_cast<int>(raw.size()) != cfg_.d_depth)
    throw std::invalid_argument("depth feature dimension mismatch");
  if (cache) {
    if (cache->raw_vis.size() <= token) cache->raw_vis.resize(token + 1);
    cache->raw_vis[token] = raw;
  }
  return nets.depth_proj->forward(raw);
}

BranchOutput Agent::encode_tokens(int slot, const Vec& instr, const std::vector<NodeId>& ids,
                                  const std::vector<Vec>& raw_vis,
                                  const std::vector<std::array<double, 4>>& dirs,
                                  BranchCache* cache) const {
  const auto& nets = *nets_[static_cast<std::size_t>(slot)];
  const std::size_t n = ids.size();
  Vec iw = nets.proj_instr.forward(instr);
  BranchOutput out;
  out.action_ids = ids;
  out.hidden.resize(n);
  if (cache) {
    cache->iw = iw;
    cache->instr = instr;
    cache->vis.resize(n);
    cache->pv.resize(n);
    cache->enc_caches.resize(n);
  }
  for (std::size_t t = 0; t < n; ++t) {
    Vec v = slot_visual(slot, raw_vis[t], cache, t);
    Vec pv = nets.proj_vis.forward(v);
    Vec x;
    x.reserve(v.size() + 4 + pv.size());
    x.insert(x.end(), v.begin(), v.end());
    x.insert(x.end(), dirs[t].begin(), dirs[t].end());
    for (std::size_t i = 0; i < pv.size(); ++i) x.push_back(iw[i] * pv[i]);
    out.hidden[t] = nets.enc.forward(x, cache ? &cache->enc_caches[t] : nullptr);
    if (cache) {
      cache->vis[t] = std::move(v);
      cache->pv[t] = std::move(pv);
    }
  }
  if (cache) cache->out = out;
  return out;
}

BranchOutput Agent::local_branch(int slot, const Vec& instr, const PanoramaFeatures& pano,
                                 BranchCache* cache) const {
  if (!nets_[static_cast<std::size_t>(slot)]) throw std::invalid_argument("inactive branch slot");
  std::map<NodeId, int> view_of;
  for (const auto& [view_idx, nbr] : pano.view_to_neighbor) view_of[nbr] = view_idx;

  std::vector<NodeId> ids{-1};
  std::vector<Vec> raw_vis;
  std::vector<std::array<double, 4>> dirs;
  raw_vis.push_back(mean_of(pano.views, pano.views.front().size()));
  dirs.push_back({0.0, 0.0, 0.0, 0.0});
  for (const auto& [nbr, view_idx] : view_of) {
    ids.push_back(nbr);
    raw_vis.push_back(pano.views[static_cast<std::size_t>(view_idx)]);
    dirs.push_back(pano.directions[static_cast<std::size_t>(view_idx)]);
  }
  return encode_tokens(slot, instr, ids, raw_vis, dirs, cache);
}

BranchOutput Agent::global_branch(int slot, const Vec& instr, const TopoMap& map,
                                  const WorldGraph& g, BranchCache* cache) const {
  if (!nets_[static_cast<std::size_t>(slot)]) throw std::invalid_argument("inactive branch slot");
  if (map.empty()) throw std::runtime_error("global branch requires a nonempty map");
  std::vector<NodeId> actions = map.global_actions();

  std::vector<NodeId> ids{-1};
  std::vector<Vec> embs;
  std::vector<std::array<double, 4>> dirs;
  for (NodeId n : actions) {
    ids.push_back(n);
    embs.push_back(map.is_ghost(n) ? ghost_embedding(map, n) : visited_embedding(map, n));
    dirs.push_back(relative_position(g, map.current, n));
  }
  std::size_t raw_dim = embs.empty()
                            ? map.visited_views.begin()->second.front().size()
                            : embs.front().size();
  std::vector<Vec> raw_vis;
  raw_vis.push_back(mean_of(embs, raw_dim));
  std::vector<std::array<double, 4>> all_dirs;
  all_dirs.push_back({0.0, 0.0, 0.0, 0.0});
  for (std::size_t i = 0; i < embs.size(); ++i) {
    raw_vis.push_back(std::move(embs[i]));
    all_dirs.push_back(dirs[i]);
  }
  return encode_tokens(slot, instr, ids, raw_vis, all_dirs, cache);
}

Vec Agent::branch_scores(int slot, const BranchOutput& b, BranchCache* cache) const {
  const auto& nets = *nets_[static_cast<std::size_t>(slot)];
  const std::size_t n = b.hidden.size();
  Vec logits(n);
  if (cache) cache->score_caches.resize(n);
  for (std::size_t t = 0; t < n; ++t)
    logits[t] = nets.score.forward(b.hidden[t], cache ? &cache->score_caches[t] : nullptr)[0];
  Vec probs = nn::softmax(logits);
  if (cache) {
    cache->logits = logits;
    cache->probs = probs;
  }
  return probs;
}

Vec Agent::branch_weights(const std::vector<Vec>& state_tokens, StepCache* cache) const {
  if (state_tokens.empty()) throw std::invalid_argument("branch_weights needs >= 1 state token");
  if (static_cast<int>(state_tokens.size()) != arity_)
    throw std::invalid_argument("state token count does not match branch arity");
  Vec concat;
  for (const Vec& t : state_tokens) concat.insert(concat.end(), t.begin(), t.end());
  nn::FfnCache local_cache;
  Vec z = lambda_ffn_->forward(concat, cache ? &cache->lambda_ffn : &local_cache);
  Vec sig(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) sig[i] = nn::sigmoid(z[i]);
  Vec lambda = nn::softmax(sig);
  if (cache) {
    cache->lambda_in = std::move(concat);
    cache->lambda_sig = sig;
    cache->lambda = lambda;
  }
  return lambda;
}

StepCache Agent::step(const Vec& instr, const std::array<const PanoramaFeatures*, 4>& panos,
                      const std::array<const TopoMap*, 4>& maps, NodeId current,
                      const WorldGraph& g, const std::vector<ObjectSpec>* objects) const {
  StepCache c;
  std::vector<Vec> state_tokens;
  std::vector<int> active;
  for (int s = 0; s < 4; ++s) {
    if (!nets_[static_cast<std::size_t>(s)]) continue;
    active.push_back(s);
    c.branches[static_cast<std::size_t>(s)].emplace();
    BranchCache& bc = *c.branches[static_cast<std::size_t>(s)];
    BranchOutput out;
    if (cfg_.branches.is_local_slot(s)) {
      if (!panos[static_cast<std::size_t>(s)]) throw std::invalid_argument("missing panorama for local slot");
      out = local_branch(s, instr, *panos[static_cast<std::size_t>(s)], &bc);
      std::vector<NodeId> ids(out.action_ids.begin() + 1, out.action_ids.end());
      if (c.local_ids.empty()) c.local_ids = ids;
      else if (c.local_ids != ids) throw std::runtime_error("local branches disagree on the action space");
    } else {
      if (!maps[static_cast<std::size_t>(s)]) throw std::invalid_argument("missing map for global slot");
      out = global_branch(s, instr, *maps[static_cast<std::size_t>(s)], g, &bc);
      std::vector<NodeId> ids(out.action_ids.begin() + 1, out.action_ids.end());
      if (c.global_ids.empty()) c.global_ids = ids;
      else if (c.global_ids != ids) throw std::runtime_error("global branches disagree on the action space");
    }
    branch_scores(s, out, &bc);
    state_tokens.push_back(out.hidden[0]);
  }

  branch_weights(state_tokens, &c);

  // weighted aggregation within each scope, then renormalization
  const auto d_h = static_cast<std::size_t>(cfg_.d_h);
  c.stop_l.assign(d_h, 0.0);
  c.stop_g.assign(d_h, 0.0);
  for (std::size_t k = 0; k < active.size(); ++k) {
    int s = active[k];
    double lam = c.lambda[k];
    const BranchCache& bc = *c.branches[static_cast<std::size_t>(s)];
    bool local = cfg_.branches.is_local_slot(s);
    Vec& p = local ? c.pl : c.pg;
    double& mass = local ? c.lam_l : c.lam_g;
    Vec& stop = local ? c.stop_l : c.stop_g;
    if (p.empty()) p.assign(bc.probs.size(), 0.0);
    for (std::size_t i = 0; i < bc.probs.size(); ++i) p[i] += lam * bc.probs[i];
    for (std::size_t i = 0; i < d_h; ++i) stop[i] += lam * bc.out.hidden[0][i];
    mass += lam;
  }
  if (!c.pl.empty())
    for (double& x : c.pl) x /= c.lam_l;
  if (!c.pg.empty())
    for (double& x : c.pg) x /= c.lam_g;
  if (c.lam_l > 0.0)
    for (double& x : c.stop_l) x /= c.lam_l;
  if (c.lam_g > 0.0)
    for (double& x : c.stop_g) x /= c.lam_g;

  // dynamic fusion
  bool has_l = !c.pl.empty(), has_g = !c.pg.empty();
  if (has_l && has_g) {
    c.embed.resize(c.local_ids.size() + 1);
    c.embed[0] = 0;
    for (std::size_t i = 0; i < c.local_ids.size(); ++i) {
      auto it = std::find(c.global_ids.begin(), c.global_ids.end(), c.local_ids[i]);
      if (it == c.global_ids.end())
        throw std::runtime_error("adjacent node missing from global action space");
      c.embed[i + 1] = static_cast<std::size_t>(it - c.global_ids.begin()) + 1;
    }
    Vec gate_in;
    gate_in.insert(gate_in.end(), c.stop_g.begin(), c.stop_g.end());
    gate_in.insert(gate_in.end(), c.stop_l.begin(), c.stop_l.end());
    double z = gate_ffn_->forward(gate_in, &c.gate_ffn)[0];
    c.sigma = nn::sigmoid(z);
    c.gated = true;
    c.pa_raw.assign(c.pg.size(), 0.0);
    for (std::size_t j = 0; j < c.pg.size(); ++j) c.pa_raw[j] = c.sigma * c.pg[j];
    for (std::size_t i = 0; i < c.pl.size(); ++i) c.pa_raw[c.embed[i]] += (1.0 - c.sigma) * c.pl[i];
    c.fused.action_ids.assign(1, -1);
    c.fused.action_ids.insert(c.fused.action_ids.end(), c.global_ids.begin(), c.global_ids.end());
  } else if (has_g) {
    c.sigma = 1.0;
    c.pa_raw = c.pg;
    c.fused.action_ids.assign(1, -1);
    c.fused.action_ids.insert(c.fused.action_ids.end(), c.global_ids.begin(), c.global_ids.end());
  } else {
    c.sigma = 0.0;
    c.pa_raw = c.pl;
    c.fused.action_ids.assign(1, -1);
    c.fused.action_ids.insert(c.fused.action_ids.end(), c.local_ids.begin(), c.local_ids.end());
  }
  double sum = 0.0;
  for (double x : c.pa_raw) sum += x;
  c.fused.probs.resize(c.pa_raw.size());
  for (std::size_t i = 0; i < c.pa_raw.size(); ++i) c.fused.probs[i] = c.pa_raw[i] / sum;
  c.fused.lambda = c.lambda;
  c.fused.sigma = c.sigma;

  // object head
  if (objects && !objects->empty()) {
    c.has_objects = true;
    c.state_pool.assign(d_h, 0.0);
    for (std::size_t k = 0; k < active.size(); ++k) {
      const Vec& b0 = c.branches[static_cast<std::size_t>(active[k])]->out.hidden[0];
      for (std::size_t i = 0; i < d_h; ++i) c.state_pool[i] += c.lambda[k] * b0[i];
    }
    c.obj_iw = obj_proj_instr_.forward(instr);
    c.obj_logits.resize(objects->size());
    c.obj_caches.resize(objects->size());
    c.obj_feats.resize(objects->size());
    c.obj_pf.resize(objects->size());
    for (std::size_t i = 0; i < objects->size(); ++i) {
      const Vec& f = (*objects)[i].feature;
      Vec pf = obj_proj_feat_.forward(f);
      Vec x;
      x.reserve(f.size() + 2 * d_h);
      x.insert(x.end(), f.begin(), f.end());
      for (std::size_t j = 0; j < d_h; ++j) x.push_back(c.obj_iw[j] * pf[j]);
      x.insert(x.end(), c.state_pool.begin(), c.state_pool.end());
      c.obj_logits[i] = obj_head_.forward(x, &c.obj_caches[i])[0];
      c.obj_feats[i] = f;
      c.obj_pf[i] = std::move(pf);
    }
    c.po = nn::softmax(c.obj_logits);
  }
  return c;
}

void Agent::step_backward(StepCache& c, const Vec& d_pa, const Vec& d_po) const {
  const auto d_h = static_cast<std::size_t>(cfg_.d_h);
  std::vector<int> active;
  for (int s = 0; s < 4; ++s)
    if (c.branches[static_cast<std::size_t>(s)]) active.push_back(s);

  Vec d_lambda(active.size(), 0.0);
  std::vector<Vec> d_state(active.size(), Vec(d_h, 0.0));

  // object head
  if (!d_po.empty()) {
    if (!c.has_objects) throw std::invalid_argument("object gradient without object head");
    Vec dlog = nn::softmax_backward(c.po, d_po);
    Vec d_obj_iw(d_h, 0.0);
    Vec d_pool(d_h, 0.0);
    for (std::size_t i = 0; i < dlog.size(); ++i) {
      Vec dx = obj_head_.backward(c.obj_caches[i], {dlog[i]});
      std::size_t d_o = c.obj_feats[i].size();
      Vec d_inter(dx.begin() + static_cast<long>(d_o), dx.begin() + static_cast<long>(d_o + d_h));
      for (std::size_t j = 0; j < d_h; ++j) {
        d_obj_iw[j] += c.obj_pf[i][j] * d_inter[j];
        d_pool[j] += dx[d_o + d_h + j];
      }
      Vec d_pf(d_h);
      for (std::size_t j = 0; j < d_h; ++j) d_pf[j] = c.obj_iw[j] * d_inter[j];
      obj_proj_feat_.backward(c.obj_feats[i], d_pf);
    }
    obj_proj_instr_.backward(c.branches[static_cast<std::size_t>(active[0])]->instr, d_obj_iw);
    for (std::size_t k = 0; k < active.size(); ++k) {
      const Vec& b0 = c.branches[static_cast<std::size_t>(active[k])]->out.hidden[0];
      double dot = 0.0;
      for (std::size_t j = 0; j < d_h; ++j) {
        d_state[k][j] += c.lambda[k] * d_pool[j];
        dot += b0[j] * d_pool[j];
      }
      d_lambda[k] += dot;
    }
  }

  // fused distribution -> per-scope aggregates
  Vec d_pl, d_pg;
  if (!d_pa.empty()) {
    double sum = 0.0, dot = 0.0;
    for (std::size_t i = 0; i < c.pa_raw.size(); ++i) sum += c.pa_raw[i];
    for (std::size_t i = 0; i < d_pa.size(); ++i) dot += d_pa[i] * c.fused.probs[i];
    Vec d_raw(d_pa.size());
    for (std::size_t i = 0; i < d_pa.size(); ++i) d_raw[i] = (d_pa[i] - dot) / sum;

    if (c.gated) {
      // d sigma
      Vec pl_embedded(c.pg.size(), 0.0);
      for (std::size_t i = 0; i < c.pl.size(); ++i) pl_embedded[c.embed[i]] += c.pl[i];
      double d_sigma = 0.0;
      for (std::size_t j = 0; j < c.pg.size(); ++j) d_sigma += d_raw[j] * (c.pg[j] - pl_embedded[j]);
      d_pg.assign(c.pg.size(), 0.0);
      for (std::size_t j = 0; j < c.pg.size(); ++j) d_pg[j] = c.sigma * d_raw[j];
      d_pl.assign(c.pl.size(), 0.0);
      for (std::size_t i = 0; i < c.pl.size(); ++i) d_pl[i] = (1.0 - c.sigma) * d_raw[c.embed[i]];

      double dz = d_sigma * c.sigma * (1.0 - c.sigma);
      Vec d_gate_in = gate_ffn_->backward(c.gate_ffn, {dz});
      Vec d_stop_g(d_gate_in.begin(), d_gate_in.begin() + static_cast<long>(d_h));
      Vec d_stop_l(d_gate_in.begin() + static_cast<long>(d_h), d_gate_in.end());
      for (std::size_t k = 0; k < active.size(); ++k) {
        int s = active[k];
        bool local = cfg_.branches.is_local_slot(s);
        const Vec& d_stop = local ? d_stop_l : d_stop_g;
        const Vec& stop = local ? c.stop_l : c.stop_g;
        double mass = local ? c.lam_l : c.lam_g;
        const Vec& b0 = c.branches[static_cast<std::size_t>(s)]->out.hidden[0];
        double dot2 = 0.0;
        for (std::size_t j = 0; j < d_h; ++j) {
          d_state[k][j] += c.lambda[k] / mass * d_stop[j];
          dot2 += d_stop[j] * (b0[j] - stop[j]);
        }
        d_lambda[k] += dot2 / mass;
      }
    } else if (!c.pg.empty()) {
      d_pg = d_raw;
    } else {
      d_pl = d_raw;
    }
  }

  // aggregates -> per-branch distributions, then branch backward (token 0
  // is deferred until the lambda-FFN input gradient is known)
  std::vector<Vec> d_iw_acc(active.size(), Vec(d_h, 0.0));
  for (std::size_t k = 0; k < active.size(); ++k) {
    int s = active[k];
    BranchCache& bc = *c.branches[static_cast<std::size_t>(s)];
    bool local = cfg_.branches.is_local_slot(s);
    const Vec& d_p = local ? d_pl : d_pg;
    const Vec& p = local ? c.pl : c.pg;
    double mass = local ? c.lam_l : c.lam_g;
    Vec d_probs(bc.probs.size(), 0.0);
    if (!d_p.empty()) {
      double dot = 0.0;
      for (std::size_t i = 0; i < d_p.size(); ++i) {
        d_probs[i] = c.lambda[k] / mass * d_p[i];
        dot += d_p[i] * (bc.probs[i] - p[i]);
      }
      d_lambda[k] += dot / mass;
    }
    Vec d_logits = nn::softmax_backward(bc.probs, d_probs);
    const auto& nets = *nets_[static_cast<std::size_t>(s)];
    std::vector<Vec> d_hidden(bc.out.hidden.size(), Vec(d_h, 0.0));
    for (std::size_t t = 0; t < d_hidden.size(); ++t)
      d_hidden[t] = nets.score.backward(bc.score_caches[t], {d_logits[t]});
    for (std::size_t j = 0; j < d_h; ++j) d_hidden[0][j] += d_state[k][j];
    d_state[k] = d_hidden[0];
    for (std::size_t t = 1; t < d_hidden.size(); ++t) {
      Vec dx = nets.enc.backward(bc.enc_caches[t], d_hidden[t]);
      Vec dv(dx.begin(), dx.begin() + cfg_.d_f);
      Vec d_pv(d_h);
      for (std::size_t j = 0; j < d_h; ++j) {
        double d_inter = dx[static_cast<std::size_t>(cfg_.d_f) + 4 + j];
        d_iw_acc[k][j] += bc.pv[t][j] * d_inter;
        d_pv[j] = bc.iw[j] * d_inter;
      }
      Vec dv2 = nets.proj_vis.backward(bc.vis[t], d_pv);
      for (std::size_t j = 0; j < dv.size(); ++j) dv[j] += dv2[j];
      if (nets.depth_proj) nets.depth_proj->backward(bc.raw_vis[t], dv);
    }
  }

  // lambda backward (receives contributions from aggregation, pools, objects)
  Vec d_sig = nn::softmax_backward(c.lambda, d_lambda);
  Vec dz(d_sig.size());
  for (std::size_t i = 0; i < d_sig.size(); ++i)
    dz[i] = d_sig[i] * c.lambda_sig[i] * (1.0 - c.lambda_sig[i]);
  Vec d_concat = lambda_ffn_->backward(c.lambda_ffn, dz);

  // finish token 0 per branch with the lambda-FFN input gradient added
  for (std::size_t k = 0; k < active.size(); ++k) {
    int s = active[k];
    BranchCache& bc = *c.branches[static_cast<std::size_t>(s)];
    const auto& nets = *nets_[static_cast<std::size_t>(s)];
    Vec d_h0 = d_state[k];
    for (std::size_t j = 0; j < d_h; ++j) d_h0[j] += d_concat[k * d_h + j];
    Vec dx = nets.enc.backward(bc.enc_caches[0], d_h0);
    Vec dv(dx.begin(), dx.begin() + cfg_.d_f);
    Vec d_iw = d_iw_acc[k];
    Vec d_pv(d_h);
    for (std::size_t j = 0; j < d_h; ++j) {
      double d_inter = dx[static_cast<std::size_t>(cfg_.d_f) + 4 + j];
      d_iw[j] += bc.pv[0][j] * d_inter;
      d_pv[j] = bc.iw[j] * d_inter;
    }
    Vec dv2 = nets.proj_vis.backward(bc.vis[0], d_pv);
    for (std::size_t j = 0; j < dv.size(); ++j) dv[j] += dv2[j];
    if (nets.depth_proj) nets.depth_proj->backward(bc.raw_vis[0], dv);
    nets.proj_instr.backward(bc.instr, d_iw);
  }
}

int dagger_target(const WorldGraph& g, NodeId current, const std::vector<NodeId>& action_ids,
                  NodeId goal) {
  if (action_ids.empty() || action_ids[0] != -1)
    throw std::runtime_error("action space must start with the stop action");
  if (current == goal) return 0;
  auto dist = distances_from(g, goal);
  int best = -1;
  double best_cost = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < action_ids.size(); ++i) {
    NodeId n = action_ids[i];
    if (!g.has_edge(current, n)) continue;
    double cost = g.edge_weight(current, n) + dist[static_cast<std::size_t>(n)];
    if (cost < best_cost ||
        (best >= 0 && cost == best_cost && n < action_ids[static_cast<std::size_t>(best)])) {
      best_cost = cost;
      best = static_cast<int>(i);
    }
  }
  if (best < 0) throw std::runtime_error("no adjacent action available for the DAgger target");
  return best;
}

Vec predict_objects_probs(const StepCache& c) {
  if (!c.has_objects) throw std::runtime_error("object distribution undefined without objects");
  return c.po;
}

RolloutResult Agent::rollout(const WorldGraph& g, const Episode& episode, RolloutMode mode,
                             std::uint64_t sample_seed, std::vector<StepCache>* caches) const {
  RolloutResult r;
  NodeId current = episode.start;
  r.trajectory.push_back(current);

  std::array<std::optional<TopoMap>, 4> maps;
  for (int s = 0; s < 4; ++s)
    if (nets_[static_cast<std::size_t>(s)] && !cfg_.branches.is_local_slot(s)) maps[static_cast<std::size_t>(s)].emplace();
  TopoMap topo;  // strategy-independent topology for path traversal

  int decision = 0;
  auto pano_seed = [&](int) {
    return cfg_.resample_each_step
               ? hash_mix(episode.seed, static_cast<std::uint64_t>(decision) + 1)
               : episode.seed;
  };
  auto visit = [&](NodeId n) {
    PanoramaFeatures og = original_features(g, n, 0);
    topo.update(n, og, g);
    for (int s = 0; s < 4; ++s) {
      if (!maps[static_cast<std::size_t>(s)]) continue;
      const auto& spec = *cfg_.branches.slots[static_cast<std::size_t>(s)];
      PanoramaFeatures p = spec.kind == PerturbationKind::Original
                               ? og
                               : strategy_features(g, n, spec, pano_seed(decision), cfg_.d_depth);
      maps[static_cast<std::size_t>(s)]->update(n, p, g);
    }
  };
  visit(current);

  Rng sampler(hash_mix(sample_seed, hash_mix(episode.seed, hash_str("rollout-sample"))));

  for (; decision < episode.max_steps; ++decision) {
    std::array<const PanoramaFeatures*, 4> panos{nullptr, nullptr, nullptr, nullptr};
    std::array<PanoramaFeatures, 4> pano_storage;
    std::array<const TopoMap*, 4> map_ptrs{nullptr, nullptr, nullptr, nullptr};
    for (int s = 0; s < 4; ++s) {
      if (!nets_[static_cast<std::size_t>(s)]) continue;
      if (cfg_.branches.is_local_slot(s)) {
        pano_storage[static_cast<std::size_t>(s)] = strategy_features(
            g, current, *cfg_.branches.slots[static_cast<std::size_t>(s)], pano_seed(decision), cfg_.d_depth);
        panos[static_cast<std::size_t>(s)] = &pano_storage[static_cast<std::size_t>(s)];
      } else {
        map_ptrs[static_cast<std::size_t>(s)] = &*maps[static_cast<std::size_t>(s)];
      }
    }
    const auto& objects = g.node(current).objects;
    StepCache sc = step(episode.instruction, panos, map_ptrs, current, g, &objects);

    StepRecord rec;
    rec.decided_at = current;
    rec.fused = sc.fused;
    rec.visited_snapshot.assign(topo.visited.begin(), topo.visited.end());
    for (const auto& [n, obs] : topo.ghost_obs) rec.ghost_snapshot.push_back(n);
    rec.a_star_index = dagger_target(g, current, sc.fused.action_ids, episode.goal);
    if (mode == RolloutMode::TeacherForced) {
      std::size_t pos = static_cast<std::size_t>(decision);
      if (pos + 1 < episode.gt_path.size()) {
        NodeId next = episode.gt_path[pos + 1];
        auto it = std::find(sc.fused.action_ids.begin(), sc.fused.action_ids.end(), next);
        if (it == sc.fused.action_ids.end())
          throw std::runtime_error("ground-truth action missing from action space");
        rec.a_gt_index = static_cast<int>(it - sc.fused.action_ids.begin());
      } else {
        rec.a_gt_index = 0;  // at the goal: stop
      }
      rec.teacher_forced = true;
    }

    int chosen = 0;
    switch (mode) {
      case RolloutMode::Greedy: {
        for (std::size_t i = 1; i < sc.fused.probs.size(); ++i)
          if (sc.fused.probs[i] > sc.fused.probs[static_cast<std::size_t>(chosen)]) chosen = static_cast<int>(i);
        break;
      }
      case RolloutMode::Sample: {
        double u = sampler.next_double();
        double acc = 0.0;
        chosen = static_cast<int>(sc.fused.probs.size()) - 1;
        for (std::size_t i = 0; i < sc.fused.probs.size(); ++i) {
          acc += sc.fused.probs[i];
          if (u < acc) {
            chosen = static_cast<int>(i);
            break;
          }
        }
        break;
      }
      case RolloutMode::TeacherForced:
        chosen = rec.a_gt_index;
        break;
      case RolloutMode::Oracle:
        chosen = rec.a_star_index;
        break;
    }
    rec.chosen_index = chosen;
    r.records.push_back(rec);
    if (caches) caches->push_back(std::move(sc));
    ++r.steps;

    if (chosen == 0) {
      r.stopped = true;
      const StepCache& last = caches ? caches->back() : sc;
      if (last.has_objects) {
        r.object_probs = last.po;
        int best = 0;
        for (std::size_t i = 1; i < last.po.size(); ++i)
          if (last.po[i] > last.po[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
        r.predicted_object = best;
      }
      break;
    }
    NodeId target = r.records.back().fused.action_ids[static_cast<std::size_t>(chosen)];
    if (g.has_edge(current, target)) {
      current = target;
      r.trajectory.push_back(current);
      visit(current);
    } else {
      auto path = topo.map_path(g, target);
      for (std::size_t i = 1; i < path.size(); ++i) {
        current = path[i];
        r.trajectory.push_back(current);
        visit(current);
      }
    }
  }
  return r;
}

}  // namespace mba
