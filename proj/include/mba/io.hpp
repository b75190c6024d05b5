#ifndef MBA_IO_HPP
#define MBA_IO_HPP

#include <string>

#include "mba/neural.hpp"
#include "mba/world.hpp"

namespace mba {

// Floats are written with 17 significant digits so round-trips are exact
// and files are byte-stable.
std::string format_double(double x);

std::string world_to_json(const WorldGraph& g);
WorldGraph world_from_json(const std::string& text);

std::string episode_to_json_line(const Episode& e);
Episode episode_from_json_line(const std::string& line);

std::string episodes_to_jsonl(const std::vector<Episode>& episodes);
std::vector<Episode> episodes_from_jsonl(const std::string& text);

// Checkpoint: JSON map name -> shape + row-major data, plus a _meta block
// describing the agent configuration.
std::string checkpoint_to_json(const nn::ParamStore& ps,
                               const std::map<std::string, std::string>& meta);
void checkpoint_from_json(const std::string& text, nn::ParamStore& ps,
                          std::map<std::string, std::string>& meta);
std::map<std::string, std::string> checkpoint_meta(const std::string& text);

void write_file(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace mba

#endif
