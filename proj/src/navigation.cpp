#include "voxelmem/navigation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>

#include <json.hpp>
#include <omp.h>

#include "voxelmem/errors.hpp"
#include "voxelmem/image_io.hpp"

namespace voxelmem {

double value_sigmoid(double x) {
    // |x| capped at 30 keeps the result strictly inside (0, 1) in double.
    const double clamped = std::clamp(x, -30.0, 30.0);
    return 1.0 / (1.0 + std::exp(-clamped));
}

GridGeometry derive_grid_geometry(const MapSnapshot& snapshot, double resolution,
                                  const std::vector<Eigen::Vector2d>& extra_points) {
    if (!(resolution > 0.0)) throw StructuralError("grid resolution must be positive");
    double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
    double max_x = -min_x, max_y = -min_y;
    bool any = false;
    snapshot.for_each([&](const VoxelEntry& entry) {
        min_x = std::min(min_x, entry.record.centroid.x());
        max_x = std::max(max_x, entry.record.centroid.x());
        min_y = std::min(min_y, entry.record.centroid.y());
        max_y = std::max(max_y, entry.record.centroid.y());
        any = true;
    });
    for (const auto& p : extra_points) {
        min_x = std::min(min_x, p.x());
        max_x = std::max(max_x, p.x());
        min_y = std::min(min_y, p.y());
        max_y = std::max(max_y, p.y());
        any = true;
    }
    GridGeometry geom;
    geom.resolution = resolution;
    if (!any) return geom;  // single explorable cell at the origin
    // Snap to the resolution lattice so cell boundaries stay stable as the map grows.
    geom.origin = {std::floor(min_x / resolution) * resolution,
                   std::floor(min_y / resolution) * resolution};
    geom.cols = static_cast<int>(std::floor((max_x - geom.origin.x()) / resolution)) + 1;
    geom.rows = static_cast<int>(std::floor((max_y - geom.origin.y()) / resolution)) + 1;
    return geom;
}

namespace {

// Parallel per-column reduction over the snapshot blocks. `update` folds one
// entry into a thread-local grid; `merge` is commutative and associative.
template <typename T, typename Update, typename Merge>
std::vector<T> reduce_columns(const MapSnapshot& snapshot, const GridGeometry& geom, T init,
                              Update&& update, Merge&& merge) {
    const size_t n_cells = static_cast<size_t>(geom.rows) * geom.cols;
    std::vector<std::vector<T>> partials;
#pragma omp parallel
    {
#pragma omp single
        partials.assign(static_cast<size_t>(omp_get_num_threads()), {});
        std::vector<T>& local = partials[static_cast<size_t>(omp_get_thread_num())];
        local.assign(n_cells, init);
#pragma omp for schedule(dynamic)
        for (long b = 0; b < static_cast<long>(snapshot.blocks.size()); ++b) {
            for (const VoxelEntry& entry : snapshot.blocks[b]->entries) {
                const CellCoord cell =
                    geom.cell_of(entry.record.centroid.x(), entry.record.centroid.y());
                if (geom.contains(cell)) update(local[geom.index(cell)], entry);
            }
        }
    }
    std::vector<T> out(n_cells, init);
    for (const auto& local : partials)
        if (!local.empty())
            for (size_t n = 0; n < n_cells; ++n) merge(out[n], local[n]);
    return out;
}

}  // namespace

ObstacleMap2D build_obstacle_map(const MapSnapshot& snapshot, double z_threshold, double resolution,
                                 const std::optional<GridGeometry>& geometry) {
    const GridGeometry geom = geometry ? *geometry : derive_grid_geometry(snapshot, resolution);
    // bit 0: any voxel above the threshold; bit 1: any voxel at all.
    std::vector<uint8_t> flags = reduce_columns<uint8_t>(
        snapshot, geom, 0,
        [z_threshold](uint8_t& cell, const VoxelEntry& entry) {
            cell |= entry.record.centroid.z() > z_threshold ? 3 : 2;
        },
        [](uint8_t& a, uint8_t b) { a |= b; });
    ObstacleMap2D map;
    map.geom = geom;
    map.cells.resize(flags.size());
    for (size_t n = 0; n < flags.size(); ++n)
        map.cells[n] = (flags[n] & 1) ? CellState::Obstacle
                                      : ((flags[n] & 2) ? CellState::Navigable : CellState::Explorable);
    return map;
}

ValueMap2D temporal_value_map(const MapSnapshot& snapshot, double now,
                              const ExplorationParams& params, double resolution,
                              const std::optional<GridGeometry>& geometry) {
    const GridGeometry geom = geometry ? *geometry : derive_grid_geometry(snapshot, resolution);
    // T* = max over the column of (now - t)  ==  now - min over the column of t.
    std::vector<double> min_seen = reduce_columns<double>(
        snapshot, geom, std::numeric_limits<double>::infinity(),
        [](double& cell, const VoxelEntry& entry) { cell = std::min(cell, entry.record.last_seen); },
        [](double& a, double b) { a = std::min(a, b); });
    ValueMap2D map;
    map.geom = geom;
    map.values.resize(min_seen.size());
    for (size_t n = 0; n < min_seen.size(); ++n) {
        const double t_star =
            std::isinf(min_seen[n]) ? std::numeric_limits<double>::infinity() : now - min_seen[n];
        double arg;
        if (std::isinf(t_star)) {
            // Never-seen columns take the T* -> +inf limit for this beta sign.
            arg = params.beta_t < 0 ? 30.0 : (params.beta_t > 0 ? -30.0 : 0.0);
        } else {
            arg = -params.beta_t * (t_star - params.mu_t);
        }
        map.values[n] = value_sigmoid(arg);
    }
    return map;
}

ValueMap2D similarity_value_map(const MapSnapshot& snapshot, const Eigen::VectorXf& query_feature,
                                const ExplorationParams& params, double resolution,
                                const std::optional<GridGeometry>& geometry) {
    if (snapshot.cell_count != 0 && query_feature.size() != snapshot.feature_dim)
        throw StructuralError("similarity_value_map: query feature dimension mismatch");
    const GridGeometry geom = geometry ? *geometry : derive_grid_geometry(snapshot, resolution);
    std::vector<double> s_star = reduce_columns<double>(
        snapshot, geom, -std::numeric_limits<double>::infinity(),
        [&query_feature](double& cell, const VoxelEntry& entry) {
            cell = std::max(cell, static_cast<double>(entry.record.feature.dot(query_feature)));
        },
        [](double& a, double b) { a = std::max(a, b); });
    ValueMap2D map;
    map.geom = geom;
    map.values.resize(s_star.size());
    for (size_t n = 0; n < s_star.size(); ++n) {
        const double s = std::isinf(s_star[n]) ? 0.0 : s_star[n];  // empty columns
        map.values[n] = value_sigmoid(-params.beta_s * (s - params.mu_s));
    }
    return map;
}

ValueMap2D combine_value_maps(const ValueMap2D& a, const ValueMap2D& b, double lambda) {
    if (!(a.geom == b.geom)) throw StructuralError("combine_value_maps: grid geometry mismatch");
    ValueMap2D out;
    out.geom = a.geom;
    out.values.resize(a.values.size());
    for (size_t n = 0; n < a.values.size(); ++n)
        out.values[n] = lambda * a.values[n] + (1.0 - lambda) * b.values[n];
    return out;
}

namespace {

bool is_frontier(const ObstacleMap2D& map, CellCoord cell) {
    if (map.at(cell) != CellState::Explorable) return false;
    for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
            if (dr == 0 && dc == 0) continue;
            const CellCoord n{cell.row + dr, cell.col + dc};
            if (map.geom.contains(n) && map.at(n) == CellState::Navigable) return true;
        }
    return false;
}

}  // namespace

std::vector<CellCoord> list_frontiers(const ObstacleMap2D& map) {
    std::vector<CellCoord> out;
    for (int r = 0; r < map.geom.rows; ++r)
        for (int c = 0; c < map.geom.cols; ++c)
            if (is_frontier(map, {r, c})) out.push_back({r, c});
    return out;
}

bool is_frontier_cell(const ObstacleMap2D& map, CellCoord cell) { return is_frontier(map, cell); }

std::optional<CellCoord> select_frontier(const ObstacleMap2D& map, const ValueMap2D& value) {
    if (!(map.geom == value.geom)) throw StructuralError("select_frontier: grid geometry mismatch");
    std::optional<CellCoord> best;
    double best_value = 0.0;
    for (int r = 0; r < map.geom.rows; ++r)
        for (int c = 0; c < map.geom.cols; ++c) {
            const CellCoord cell{r, c};
            if (!is_frontier(map, cell)) continue;
            const double v = value.at(cell);
            if (!best || v > best_value) {  // scan order is lexicographic, so ties keep the first
                best = cell;
                best_value = v;
            }
        }
    return best;
}

std::optional<Path> plan_astar(const ObstacleMap2D& map, CellCoord start, CellCoord goal,
                               double explore_penalty) {
    if (!map.geom.contains(start) || !map.geom.contains(goal)) return std::nullopt;
    if (map.at(start) == CellState::Obstacle || map.at(goal) == CellState::Obstacle)
        return std::nullopt;
    const int rows = map.geom.rows, cols = map.geom.cols;
    const double kSqrt2 = std::sqrt(2.0);
    const double kInf = std::numeric_limits<double>::infinity();
    auto heuristic = [&](CellCoord c) {
        const int dr = std::abs(c.row - goal.row), dc = std::abs(c.col - goal.col);
        return (std::max(dr, dc) - std::min(dr, dc)) + std::min(dr, dc) * kSqrt2;
    };

    std::vector<double> g(static_cast<size_t>(rows) * cols, kInf);
    std::vector<int32_t> parent(static_cast<size_t>(rows) * cols, -1);
    using Item = std::pair<double, size_t>;  // (f, cell index)
    std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
    const size_t start_idx = map.geom.index(start);
    g[start_idx] = 0.0;
    open.push({heuristic(start), start_idx});

    while (!open.empty()) {
        const auto [f, at] = open.top();
        open.pop();
        const CellCoord cell{static_cast<int>(at / cols), static_cast<int>(at % cols)};
        if (f > g[at] + heuristic(cell) + 1e-12) continue;  // stale entry
        if (cell == goal) break;
        for (int dr = -1; dr <= 1; ++dr)
            for (int dc = -1; dc <= 1; ++dc) {
                if (dr == 0 && dc == 0) continue;
                const CellCoord next{cell.row + dr, cell.col + dc};
                if (!map.geom.contains(next)) continue;
                const CellState state = map.at(next);
                if (state == CellState::Obstacle) continue;
                const double base = (dr != 0 && dc != 0) ? kSqrt2 : 1.0;
                const double step = base * (state == CellState::Explorable ? explore_penalty : 1.0);
                const size_t next_idx = map.geom.index(next);
                if (g[at] + step < g[next_idx]) {
                    g[next_idx] = g[at] + step;
                    parent[next_idx] = static_cast<int32_t>(at);
                    open.push({g[next_idx] + heuristic(next), next_idx});
                }
            }
    }

    const size_t goal_idx = map.geom.index(goal);
    if (g[goal_idx] == kInf) return std::nullopt;
    Path path;
    path.cost = g[goal_idx];
    for (int32_t at = static_cast<int32_t>(goal_idx); at != -1; at = parent[static_cast<size_t>(at)])
        path.cells.push_back({static_cast<int>(at / cols), static_cast<int>(at % cols)});
    std::reverse(path.cells.begin(), path.cells.end());
    return path;
}

ClosedLoopStep closed_loop_step(const Path& plan, int max_waypoints) {
    if (plan.cells.empty()) throw StructuralError("closed_loop_step: empty plan");
    ClosedLoopStep step;
    const size_t n = std::min(plan.cells.size(), static_cast<size_t>(max_waypoints));
    step.prefix.assign(plan.cells.begin(), plan.cells.begin() + static_cast<long>(n));
    step.reached_goal = n == plan.cells.size();
    return step;
}

namespace {

void write_sidecar(const std::filesystem::path& pgm_path, const GridGeometry& geom,
                   const char* kind) {
    nlohmann::ordered_json meta;
    meta["kind"] = kind;
    meta["resolution"] = geom.resolution;
    meta["origin"] = {geom.origin.x(), geom.origin.y()};
    meta["rows"] = geom.rows;
    meta["cols"] = geom.cols;
    std::ofstream out(pgm_path.string() + ".json");
    out << meta.dump(2) << "\n";
}

}  // namespace

void export_obstacle_map(const ObstacleMap2D& map, const std::filesystem::path& pgm_path) {
    std::vector<uint8_t> pixels(map.cells.size());
    for (size_t n = 0; n < map.cells.size(); ++n)
        pixels[n] = map.cells[n] == CellState::Obstacle
                        ? 0
                        : (map.cells[n] == CellState::Navigable ? 255 : 128);
    write_pgm8(pgm_path, map.geom.cols, map.geom.rows, pixels);
    write_sidecar(pgm_path, map.geom, "obstacle");
}

void export_value_map(const ValueMap2D& map, const std::filesystem::path& pgm_path) {
    std::vector<uint8_t> pixels(map.values.size());
    for (size_t n = 0; n < map.values.size(); ++n)
        pixels[n] = static_cast<uint8_t>(std::lround(map.values[n] * 255.0));
    write_pgm8(pgm_path, map.geom.cols, map.geom.rows, pixels);
    write_sidecar(pgm_path, map.geom, "value");
}

}  // namespace voxelmem
