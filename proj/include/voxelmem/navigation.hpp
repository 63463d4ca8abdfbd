#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "voxelmem/voxel_memory.hpp"

namespace voxelmem {

struct CellCoord {
    int row = 0, col = 0;
    auto operator<=>(const CellCoord&) const = default;
};

struct GridGeometry {
    double resolution = 0.1;                       // meters per cell
    Eigen::Vector2d origin = {0.0, 0.0};           // world (x, y) of cell (0, 0)'s min corner
    int rows = 1, cols = 1;

    bool operator==(const GridGeometry& o) const {
        return resolution == o.resolution && origin == o.origin && rows == o.rows && cols == o.cols;
    }
    CellCoord cell_of(double x, double y) const {
        return {static_cast<int>(std::floor((y - origin.y()) / resolution)),
                static_cast<int>(std::floor((x - origin.x()) / resolution))};
    }
    Eigen::Vector2d center_of(CellCoord cell) const {
        return {origin.x() + (cell.col + 0.5) * resolution, origin.y() + (cell.row + 0.5) * resolution};
    }
    bool contains(CellCoord cell) const {
        return cell.row >= 0 && cell.row < rows && cell.col >= 0 && cell.col < cols;
    }
    size_t index(CellCoord cell) const { return static_cast<size_t>(cell.row) * cols + cell.col; }
};

enum class CellState : uint8_t { Obstacle = 0, Navigable = 1, Explorable = 2 };

struct ObstacleMap2D {
    GridGeometry geom;
    std::vector<CellState> cells;

    CellState at(CellCoord cell) const { return cells[geom.index(cell)]; }
};

struct ValueMap2D {
    GridGeometry geom;
    std::vector<double> values;  // strictly inside (0, 1)

    double at(CellCoord cell) const { return values[geom.index(cell)]; }
};

struct ExplorationParams {
    double beta_t = -1.0 / 60.0;  // negative: older cells score higher
    double mu_t = 120.0;          // seconds
    double beta_s = -10.0;        // negative: more similar cells score higher
    double mu_s = 0.5;
    double mix_lambda = 0.5;      // temporal weight in the mixed map
};

// Sigmoid with the argument clamped so results stay strictly inside (0, 1)
// in double precision.
double value_sigmoid(double x);

// Grid covering the XY bounding box of the snapshot centroids plus any extra
// points the caller needs inside (e.g. the robot).
GridGeometry derive_grid_geometry(const MapSnapshot& snapshot, double resolution,
                                  const std::vector<Eigen::Vector2d>& extra_points = {});

// Column state: Obstacle if any voxel sits above z_threshold, else Navigable
// if anything was observed, else Explorable.
ObstacleMap2D build_obstacle_map(const MapSnapshot& snapshot, double z_threshold, double resolution,
                                 const std::optional<GridGeometry>& geometry = std::nullopt);

// V_T = sigmoid(-beta_t * (T* - mu_t)), T* = max over column of (now - last_seen).
// Never-seen columns take the T* -> +inf limit for the configured beta sign.
ValueMap2D temporal_value_map(const MapSnapshot& snapshot, double now,
                              const ExplorationParams& params, double resolution,
                              const std::optional<GridGeometry>& geometry = std::nullopt);

// V_S = sigmoid(-beta_s * (S* - mu_s)), S* = max over column of feature dots;
// empty columns take S* = 0.
ValueMap2D similarity_value_map(const MapSnapshot& snapshot, const Eigen::VectorXf& query_feature,
                                const ExplorationParams& params, double resolution,
                                const std::optional<GridGeometry>& geometry = std::nullopt);

// lambda * a + (1 - lambda) * b, cell-wise. Geometry mismatch -> StructuralError.
ValueMap2D combine_value_maps(const ValueMap2D& a, const ValueMap2D& b, double lambda);

// Highest-valued Explorable cell with a Navigable 8-neighbor; lexicographic
// tie-break. nullopt = exploration complete.
std::optional<CellCoord> select_frontier(const ObstacleMap2D& map, const ValueMap2D& value);

std::vector<CellCoord> list_frontiers(const ObstacleMap2D& map);
bool is_frontier_cell(const ObstacleMap2D& map, CellCoord cell);

struct Path {
    std::vector<CellCoord> cells;  // start .. goal inclusive
    double cost = 0.0;
};

// 8-connected A* over Navigable and Explorable cells; diagonal steps cost
// sqrt(2), Explorable cells multiply the step cost by explore_penalty.
// Start must be Navigable, goal any non-Obstacle cell. nullopt = unreachable.
std::optional<Path> plan_astar(const ObstacleMap2D& map, CellCoord start, CellCoord goal,
                               double explore_penalty = 2.0);

struct ClosedLoopStep {
    std::vector<CellCoord> prefix;  // at most max_waypoints cells
    bool reached_goal = false;
};

// First min(max_waypoints, |plan|) waypoints; the caller re-observes and
// replans until within its distance threshold of the target.
ClosedLoopStep closed_loop_step(const Path& plan, int max_waypoints = 7);

// Inspection exports: 8-bit PGM plus a JSON sidecar with resolution/origin.
void export_obstacle_map(const ObstacleMap2D& map, const std::filesystem::path& pgm_path);
void export_value_map(const ValueMap2D& map, const std::filesystem::path& pgm_path);

}  // namespace voxelmem
