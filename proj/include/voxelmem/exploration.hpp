#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "voxelmem/navigation.hpp"
#include "voxelmem/scene_script.hpp"
#include "voxelmem/semantics.hpp"
#include "voxelmem/simulator.hpp"
#include "voxelmem/voxel_memory.hpp"

namespace voxelmem {

enum class ValueMode { Time, Similarity, Mixed };

struct ExploreConfig {
    ValueMode value_mode = ValueMode::Time;
    std::string query;  // similarity/mixed target
    ExplorationParams params;
    double resolution = 0.1;
    double z_threshold = 0.2;
    int max_waypoints = 7;
    double goal_tolerance = 0.3;
    double explore_penalty = 2.0;
    int max_steps = 400;  // planning iterations per round

    CameraIntrinsics intrinsics{50.0, 50.0, 80.0, 60.0, 120, 160};
    double camera_height = 0.4;
    double pitch_deg = -45.0;
    int scan_yaws = 6;
    double scan_dt = 0.25;
    double move_dt = 0.5;

    // When a round has no frontier left (everything was seen in an earlier
    // round), time-valued runs fall back to revisiting stale navigable cells
    // until none scores above this floor.
    bool allow_revisit = true;
    double revisit_value_floor = 0.5;

    int feature_dim = 32;
    uint64_t stub_seed = 7;
    double voxel_size = 0.05;
    double ingest_epsilon = 0.05;
    // Ingest/removal range for scans. Bounded so the floor sampling density
    // at the far edge stays at or below one pixel per grid cell
    // (footprint ~ range^2 / (camera_height * fy)); past that, grazing-angle
    // aliasing lets the frustum removal eat floor cells faster than the
    // frame's own rays re-add them.
    double scan_range = 1.3;
};

struct ExploreStep {
    int step = 0;
    Eigen::Vector2d robot = {0.0, 0.0};
    CellCoord target;
    double target_value = 0.0;
    double max_candidate_value = 0.0;
    bool revisit_target = false;  // chosen from the stale-navigable fallback
    size_t prefix_length = 0;
    size_t frontier_count = 0;
    double coverage = 0.0;
};

struct ExploreTrace {
    std::vector<ExploreStep> steps;
    bool complete = false;  // no candidate target remained
    bool budget_exhausted = false;
    double final_coverage = 0.0;
    size_t scans = 0;
};

// Scan -> map -> value -> target -> A* -> first <=7 waypoints -> repeat.
// Owns the memory and the stub embedder; the scene provides ground truth.
class ExplorationRunner {
public:
    ExplorationRunner(Scene scene, ExploreConfig config);

    // Scene dynamics and sim clock.
    void set_round(int round);
    int round() const { return round_; }
    void advance_clock(double seconds) { clock_ += seconds; }
    double clock() const { return clock_; }
    Eigen::Vector2d robot() const { return robot_; }
    void set_robot(const Eigen::Vector2d& xy) { robot_ = xy; }

    // Renders and ingests scan_yaws frames around the current position.
    void scan();

    ExploreTrace explore_round(int round);

    struct NavigateResult {
        bool reached = false;
        int iterations = 0;
        std::vector<size_t> prefix_lengths;
    };
    // Closed-loop goal seeking: plan, walk the prefix, rescan, replan, until
    // within goal_tolerance. The scene may change between iterations.
    NavigateResult navigate_to(const Eigen::Vector2d& goal, int max_iterations);

    ObstacleMap2D obstacle_map() const;
    ValueMap2D value_map(const GridGeometry& geom) const;

    // Fraction of ground-truth reachable navigable cells currently observed
    // as navigable.
    double coverage() const;
    // The oracle itself; free = inside the floor and clear of every box
    // footprint (with a small margin), reachable 8-connected from the start.
    std::vector<Eigen::Vector2d> reachable_navigable_oracle() const;

    VoxelMemory& memory() { return memory_; }
    const ExploreConfig& config() const { return config_; }

private:
    GridGeometry planning_geometry() const;

    Scene scene_;
    ExploreConfig config_;
    StubLabelEmbedder embedder_;
    VoxelMemory memory_;
    Eigen::Vector2d robot_;
    Eigen::Vector2d start_;
    int round_ = 0;
    double clock_ = 0.0;
    int64_t next_frame_id_ = 0;
};

}  // namespace voxelmem
