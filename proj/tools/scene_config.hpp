#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "alprobe/fit.hpp"
#include "alprobe/metrics.hpp"

namespace alp::cli {

using nlohmann::json;

// Fully resolved defaults for every command. Relative paths in a config file
// are taken relative to that file; paths given as flags relative to the
// working directory.
json default_config();

// Flag overrides collected from the command line, applied after the file.
struct Overrides {
    std::optional<std::string> config;
    std::optional<std::string> output_dir;
    std::optional<uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> mesh;
    std::optional<std::string> env;
    std::optional<std::string> reference;
    std::optional<std::string> mask;
    std::vector<std::string> set; // "dotted.path=json-or-string"
};

// defaults <- file <- flags. Throws ConfigError naming the offending field.
json effective_config(const Overrides &o);

// Typed views; each throws ConfigError("<dotted field>", ...) on bad input.
TriMesh load_mesh(const json &cfg);
AlpModel load_model(const json &cfg);
PinholeCamera parse_camera(const json &camera, const std::string &field);
PoseScale parse_pose(const json &pose, const std::string &field);
json pose_to_json(const PoseScale &p);
RenderSettings parse_render(const json &cfg);
FitConfig parse_fit(const json &cfg);
ReconstructConfig parse_reconstruct(const json &cfg);
std::vector<ProbeMaterial> parse_materials(const json &cfg);

// Checks presence and existence of the inputs a command reads.
void require_inputs(const json &cfg, const std::string &command);

// Entry point used by the executable and tests. Exit codes: 0 success, 1 any
// module error, 2 configuration error.
int run(int argc, char **argv, std::ostream &out, std::ostream &err);

} // namespace alp::cli
