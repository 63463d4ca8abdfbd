#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace voxelmem {

// Every tunable in one place, defaults as the modules specify them.
// Precedence: defaults < config file < command-line flags.
struct RunConfig {
    double voxel_size = 0.05;
    int feature_dim = 512;
    double epsilon = 0.05;
    double max_depth = 2.0;

    double similarity_threshold = 0.6;
    int k = 3;
    int max_context_images = 60;
    double dbscan_eps = 0.15;
    int dbscan_min_points = 5;

    double z_threshold = 0.2;
    double resolution = 0.1;
    double beta_t = -1.0 / 60.0;
    double mu_t = 120.0;
    double beta_s = -10.0;
    double mu_s = 0.5;
    double lambda = 0.5;
    int max_waypoints = 7;
    double goal_tolerance = 0.3;
    double explore_penalty = 2.0;
    int max_steps = 400;
    double scan_range = 1.3;

    uint64_t seed = 7;
    double stub_noise_sigma = 0.0;
    int min_visible_pixels = 20;

    std::string mllm_endpoint;
    std::string mllm_model;
    int mllm_retries = 3;
    int mllm_timeout_s = 30;
};

struct ConfigKey {
    std::string name;
    std::string description;
    std::string default_value;  // rendered exactly like current()
    std::function<void(RunConfig&, const std::string&)> apply;  // throws DataError on bad value
    std::function<std::string(const RunConfig&)> current;
};

const std::vector<ConfigKey>& config_schema();

// JSON object of key -> value; unknown keys are rejected.
RunConfig apply_config_file(const std::filesystem::path& path, RunConfig base);

void apply_config_value(RunConfig& config, const std::string& key, const std::string& value);

// One line per key, printed at the start of every run.
std::string effective_config_text(const RunConfig& config);

}  // namespace voxelmem
