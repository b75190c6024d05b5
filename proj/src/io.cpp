#include "mba/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace mba {

using nlohmann::json;

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace {

void append_vec(std::string& out, const Vec& v) {
  out += "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += format_double(v[i]);
  }
  out += "]";
}

Vec vec_from_json(const json& j) {
  Vec v;
  v.reserve(j.size());
  for (const auto& x : j) v.push_back(x.get<double>());
  return v;
}

}  // namespace

std::string world_to_json(const WorldGraph& g) {
  std::string out = "{\"seed\":" + std::to_string(g.seed) + ",\"k_views\":" + std::to_string(g.k_views);
  out += ",\"nodes\":[";
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const auto& n = g.nodes[i];
    if (i) out += ",";
    out += "{\"id\":" + std::to_string(n.id) + ",\"position\":[" + format_double(n.position[0]) +
           "," + format_double(n.position[1]) + "," + format_double(n.position[2]) +
           "],\"appearance\":";
    append_vec(out, n.appearance);
    out += ",\"objects\":[";
    for (std::size_t k = 0; k < n.objects.size(); ++k) {
      const auto& o = n.objects[k];
      if (k) out += ",";
      out += "{\"object_id\":" + std::to_string(o.object_id) +
             ",\"host_node\":" + std::to_string(o.host_node) + ",\"feature\":";
      append_vec(out, o.feature);
      out += "}";
    }
    out += "]}";
  }
  out += "],\"edges\":[";
  bool first = true;
  for (const auto& [a, b] : g.edges) {
    if (!first) out += ",";
    first = false;
    out += "[" + std::to_string(a) + "," + std::to_string(b) + "]";
  }
  out += "]}\n";
  return out;
}

WorldGraph world_from_json(const std::string& text) {
  json j = json::parse(text);
  WorldGraph g;
  g.seed = j.at("seed").get<std::uint64_t>();
  g.k_views = j.at("k_views").get<int>();
  for (const auto& nj : j.at("nodes")) {
    WorldNode n;
    n.id = nj.at("id").get<int>();
    auto pos = nj.at("position");
    n.position = {pos[0].get<double>(), pos[1].get<double>(), pos[2].get<double>()};
    n.appearance = vec_from_json(nj.at("appearance"));
    for (const auto& oj : nj.at("objects")) {
      ObjectSpec o;
      o.object_id = oj.at("object_id").get<int>();
      o.host_node = oj.at("host_node").get<int>();
      o.feature = vec_from_json(oj.at("feature"));
      n.objects.push_back(std::move(o));
    }
    g.nodes.push_back(std::move(n));
  }
  for (const auto& ej : j.at("edges")) g.edges.insert({ej[0].get<int>(), ej[1].get<int>()});
  return g;
}

std::string episode_to_json_line(const Episode& e) {
  std::string out = "{\"episode_id\":" + std::to_string(e.episode_id) +
                    ",\"start\":" + std::to_string(e.start) + ",\"goal\":" + std::to_string(e.goal) +
                    ",\"goal_object\":" + std::to_string(e.goal_object) + ",\"gt_path\":[";
  for (std::size_t i = 0; i < e.gt_path.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(e.gt_path[i]);
  }
  out += "],\"instruction\":";
  append_vec(out, e.instruction);
  out += ",\"seed\":" + std::to_string(e.seed) + ",\"max_steps\":" + std::to_string(e.max_steps) + "}";
  return out;
}

Episode episode_from_json_line(const std::string& line) {
  json j = json::parse(line);
  Episode e;
  e.episode_id = j.at("episode_id").get<int>();
  e.start = j.at("start").get<int>();
  e.goal = j.at("goal").get<int>();
  e.goal_object = j.at("goal_object").get<int>();
  for (const auto& n : j.at("gt_path")) e.gt_path.push_back(n.get<int>());
  e.instruction = vec_from_json(j.at("instruction"));
  e.seed = j.at("seed").get<std::uint64_t>();
  e.max_steps = j.at("max_steps").get<int>();
  return e;
}

std::string episodes_to_jsonl(const std::vector<Episode>& episodes) {
  std::string out;
  for (const auto& e : episodes) out += episode_to_json_line(e) + "\n";
  return out;
}

std::vector<Episode> episodes_from_jsonl(const std::string& text) {
  std::vector<Episode> out;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    out.push_back(episode_from_json_line(line));
  }
  return out;
}

std::string checkpoint_to_json(const nn::ParamStore& ps,
                               const std::map<std::string, std::string>& meta) {
  std::string out = "{\"_meta\":{";
  bool first = true;
  for (const auto& [k, v] : meta) {
    if (!first) out += ",";
    first = false;
    out += json(k).dump() + ":" + json(v).dump();
  }
  out += "}";
  for (const auto& [name, t] : ps.params) {
    out += "," + json(name).dump() + ":{\"shape\":[";
    for (std::size_t i = 0; i < t.shape.size(); ++i) {
      if (i) out += ",";
      out += std::to_string(t.shape[i]);
    }
    out += "],\"data\":";
    append_vec(out, t.data);
    out += "}";
  }
  out += "}\n";
  return out;
}

void checkpoint_from_json(const std::string& text, nn::ParamStore& ps,
                          std::map<std::string, std::string>& meta) {
  json j = json::parse(text);
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "_meta") {
      for (auto mit = it.value().begin(); mit != it.value().end(); ++mit)
        meta[mit.key()] = mit.value().get<std::string>();
      continue;
    }
    auto pit = ps.params.find(it.key());
    if (pit == ps.params.end())
      throw std::runtime_error("checkpoint parameter not in model: " + it.key());
    Vec data = vec_from_json(it.value().at("data"));
    if (data.size() != pit->second.data.size())
      throw std::runtime_error("checkpoint shape mismatch for " + it.key());
    pit->second.data = std::move(data);
  }
}

std::map<std::string, std::string> checkpoint_meta(const std::string& text) {
  json j = json::parse(text);
  std::map<std::string, std::string> meta;
  if (j.contains("_meta"))
    for (auto it = j["_meta"].begin(); it != j["_meta"].end(); ++it)
      meta[it.key()] = it.value().get<std::string>();
  return meta;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << content;
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for reading: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace mba
