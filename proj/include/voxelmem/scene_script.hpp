#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "voxelmem/dataset.hpp"
#include "voxelmem/simulator.hpp"

namespace voxelmem {

struct QueryPlanEntry {
    std::string text;          // what the pipeline is asked
    std::string label;         // scene label it refers to (defaults to text)
    int round = 0;
    bool positive = true;
    double offset = 1.0;       // seconds after the round's last frame
};

// Defaults for the camera the exploration runner carries.
struct ExploreDefaults {
    std::optional<Eigen::Vector2d> start;  // floor center when absent
    double camera_height = 0.4;
    double pitch_deg = -45.0;
    int scan_yaws = 6;
};

struct SceneScript {
    Scene scene;
    CameraIntrinsics intrinsics;
    TrajectorySpec trajectory;
    std::vector<QueryPlanEntry> queries;
    double inter_round_gap = 60.0;
    double epsilon_slack = 0.01;  // added to the annotated radius (depth quantization cushion)
    ExploreDefaults explore;
};

// Human-editable JSON scene scripts with a versioned header; schema in
// docs/formats.md. Parse errors carry 1-based line numbers.
SceneScript parse_scene_script(const std::filesystem::path& path);
SceneScript parse_scene_script_text(const std::string& text, const std::string& origin);

struct GenerateOptions {
    uint64_t seed_override = 0;
    bool has_seed_override = false;
    int min_visible_pixels = 20;  // positive-query observability bar
};

struct DatasetSummary {
    size_t frames = 0;
    size_t queries = 0;
    int rounds = 0;
    size_t positives = 0;
    size_t negatives_never_seen = 0;   // kind (a)
    size_t negatives_removed = 0;      // kind (b)
};

// Renders the scripted trajectory, annotates the query plan (positives get
// center + radius, negatives the must-abstain marker), verifies that every
// positive target was actually rendered close enough to ingest, and writes
// the dataset directory. Byte-reproducible for a fixed script.
DatasetSummary generate_dataset(const SceneScript& script, const std::filesystem::path& out_dir,
                                const GenerateOptions& options = {});

}  // namespace voxelmem
