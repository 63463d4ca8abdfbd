#include "voxelmem/exploration.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "voxelmem/errors.hpp"

namespace voxelmem {

namespace {
constexpr double kDeg = M_PI / 180.0;
}

ExplorationRunner::ExplorationRunner(Scene scene, ExploreConfig config)
    : scene_(std::move(scene)),
      config_(config),
      embedder_(config.feature_dim, config.stub_seed, 0.0, {}, config.scan_range),
      memory_(config.voxel_size, config.feature_dim),
      robot_(scene_.floor_x / 2.0, scene_.floor_y / 2.0) {
    scene_.validate();
    start_ = robot_;
}

void ExplorationRunner::set_round(int round) {
    if (round < 0 || round >= scene_.rounds) throw StructuralError("exploration round out of range");
    round_ = round;
}

void ExplorationRunner::scan() {
    for (int n = 0; n < config_.scan_yaws; ++n) {
        const double yaw = 2.0 * M_PI * n / config_.scan_yaws;
        const Pose pose = Pose::from_yaw_pitch({robot_.x(), robot_.y(), config_.camera_height}, yaw,
                                               config_.pitch_deg * kDeg);
        const PosedFrame frame =
            render_frame(scene_, round_, pose, config_.intrinsics, next_frame_id_++, clock_);
        IngestOptions options;
        options.epsilon = config_.ingest_epsilon;
        options.max_depth = config_.scan_range;
        memory_.ingest_frame(frame, embedder_.embed_frame(frame), options);
        clock_ += config_.scan_dt;
    }
}

GridGeometry ExplorationRunner::planning_geometry() const {
    return derive_grid_geometry(*memory_.snapshot(), config_.resolution, {robot_});
}

namespace {

// The cell under the robot can flip to Obstacle when a nearby surface's
// voxels fall just across a cell boundary. Planning then starts from the
// nearest non-obstacle cell instead of giving up.
CellCoord planning_start(const ObstacleMap2D& map, const Eigen::Vector2d& robot) {
    const CellCoord at = map.geom.cell_of(robot.x(), robot.y());
    if (map.geom.contains(at) && map.at(at) != CellState::Obstacle) return at;
    CellCoord best = at;
    long best_d2 = std::numeric_limits<long>::max();
    for (int dr = -4; dr <= 4; ++dr)
        for (int dc = -4; dc <= 4; ++dc) {
            const CellCoord cell{at.row + dr, at.col + dc};
            if (!map.geom.contains(cell) || map.at(cell) == CellState::Obstacle) continue;
            const long d2 = static_cast<long>(dr) * dr + static_cast<long>(dc) * dc;
            if (d2 < best_d2 || (d2 == best_d2 && cell < best)) {
                best = cell;
                best_d2 = d2;
            }
        }
    return best;
}

}  // namespace

ObstacleMap2D ExplorationRunner::obstacle_map() const {
    return build_obstacle_map(*memory_.snapshot(), config_.z_threshold, config_.resolution,
                              planning_geometry());
}

ValueMap2D ExplorationRunner::value_map(const GridGeometry& geom) const {
    const auto snapshot = memory_.snapshot();
    switch (config_.value_mode) {
        case ValueMode::Time:
            return temporal_value_map(*snapshot, clock_, config_.params, config_.resolution, geom);
        case ValueMode::Similarity:
            return similarity_value_map(*snapshot, embedder_.embed_text(config_.query),
                                        config_.params, config_.resolution, geom);
        case ValueMode::Mixed: {
            const ValueMap2D vt =
                temporal_value_map(*snapshot, clock_, config_.params, config_.resolution, geom);
            const ValueMap2D vs = similarity_value_map(
                *snapshot, embedder_.embed_text(config_.query), config_.params, config_.resolution,
                geom);
            return combine_value_maps(vt, vs, config_.params.mix_lambda);
        }
    }
    throw InternalError("unreachable value mode");
}

ExploreTrace ExplorationRunner::explore_round(int round) {
    set_round(round);
    ExploreTrace trace;
    scan();
    ++trace.scans;

    // World position of the committed target. Kept across regrids (cell
    // coordinates shift as the map's bounding box grows) until the target is
    // reached, observed, or no longer plannable; otherwise tie-heavy value
    // maps make the argmax thrash between distant frontiers.
    std::optional<Eigen::Vector2d> committed;

    for (int step = 0; step < config_.max_steps; ++step) {
        const ObstacleMap2D map = obstacle_map();
        const ValueMap2D value = value_map(map.geom);
        const bool time_valued =
            config_.value_mode == ValueMode::Time || config_.value_mode == ValueMode::Mixed;

        auto is_revisit_candidate = [&](CellCoord cell) {
            return config_.allow_revisit && time_valued &&
                   map.at(cell) == CellState::Navigable &&
                   value.at(cell) >= config_.revisit_value_floor;
        };
        const std::vector<CellCoord> frontiers = list_frontiers(map);

        struct Candidate {
            CellCoord cell;
            double value;
            bool revisit;
        };
        std::vector<Candidate> candidates;
        for (const CellCoord& cell : frontiers) candidates.push_back({cell, value.at(cell), false});
        if (candidates.empty()) {
            for (int r = 0; r < map.geom.rows; ++r)
                for (int c = 0; c < map.geom.cols; ++c)
                    if (is_revisit_candidate({r, c}))
                        candidates.push_back({{r, c}, value.at({r, c}), true});
        }
        if (candidates.empty()) {
            trace.complete = true;
            break;
        }
        std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
            if (a.value != b.value) return a.value > b.value;
            return a.cell < b.cell;
        });

        const CellCoord robot_cell = planning_start(map, robot_);
        std::optional<Path> path;
        std::optional<Candidate> chosen;

        if (committed) {
            const CellCoord cell = map.geom.cell_of(committed->x(), committed->y());
            const bool still_wanted =
                map.geom.contains(cell) && !(cell == robot_cell) &&
                ((map.at(cell) == CellState::Explorable && is_frontier_cell(map, cell)) ||
                 is_revisit_candidate(cell));
            if (still_wanted) {
                path = plan_astar(map, robot_cell, cell, config_.explore_penalty);
                if (path) chosen = Candidate{cell, value.at(cell), map.at(cell) == CellState::Navigable};
            }
            if (!chosen) committed.reset();
        }
        if (!chosen) {
            for (const Candidate& candidate : candidates) {
                if (candidate.cell == robot_cell) continue;
                path = plan_astar(map, robot_cell, candidate.cell, config_.explore_penalty);
                if (path) {
                    chosen = candidate;
                    committed = map.geom.center_of(candidate.cell);
                    break;
                }
            }
        }
        if (!chosen) {
            // Nothing plannable (seen-through-a-gap areas); exploration is done.
            trace.complete = true;
            break;
        }

        const ClosedLoopStep prefix = closed_loop_step(*path, config_.max_waypoints);
        for (size_t n = 0; n < prefix.prefix.size(); ++n) {
            robot_ = map.geom.center_of(prefix.prefix[n]);
            if (n > 0) clock_ += config_.move_dt;
        }
        if (committed && (robot_ - *committed).norm() <= config_.goal_tolerance) committed.reset();

        ExploreStep entry;
        entry.step = step;
        entry.robot = robot_;
        entry.target = chosen->cell;
        entry.target_value = chosen->value;
        entry.max_candidate_value = candidates.front().value;
        entry.revisit_target = chosen->revisit;
        entry.prefix_length = prefix.prefix.size();
        entry.frontier_count = frontiers.size();

        scan();
        ++trace.scans;
        entry.coverage = coverage();
        trace.steps.push_back(entry);
        if (step + 1 == config_.max_steps) trace.budget_exhausted = true;
    }
    trace.final_coverage = coverage();
    return trace;
}

ExplorationRunner::NavigateResult ExplorationRunner::navigate_to(const Eigen::Vector2d& goal,
                                                                 int max_iterations) {
    NavigateResult result;
    for (int iter = 1; iter <= max_iterations; ++iter) {
        result.iterations = iter;
        scan();
        if ((robot_ - goal).norm() <= config_.goal_tolerance) {
            result.reached = true;
            return result;
        }
        const GridGeometry geom =
            derive_grid_geometry(*memory_.snapshot(), config_.resolution, {robot_, goal});
        const ObstacleMap2D map = build_obstacle_map(*memory_.snapshot(), config_.z_threshold,
                                                     config_.resolution, geom);
        const CellCoord robot_cell = planning_start(map, robot_);
        const CellCoord goal_cell = geom.cell_of(goal.x(), goal.y());
        const auto path = plan_astar(map, robot_cell, goal_cell, config_.explore_penalty);
        if (!path) return result;  // unreachable as currently mapped
        const ClosedLoopStep prefix = closed_loop_step(*path, config_.max_waypoints);
        result.prefix_lengths.push_back(prefix.prefix.size());
        for (size_t n = 0; n < prefix.prefix.size(); ++n) {
            robot_ = geom.center_of(prefix.prefix[n]);
            if (n > 0) clock_ += config_.move_dt;
        }
        if ((robot_ - goal).norm() <= config_.goal_tolerance) {
            result.reached = true;
            return result;
        }
    }
    return result;
}

std::vector<Eigen::Vector2d> ExplorationRunner::reachable_navigable_oracle() const {
    const double res = config_.resolution;
    const double margin = 0.02;
    const int cols = static_cast<int>(std::floor(scene_.floor_x / res)) + 1;
    const int rows = static_cast<int>(std::floor(scene_.floor_y / res)) + 1;

    std::vector<AABox> boxes = scene_.obstacles;
    for (const SceneObject& obj : scene_.objects)
        if (obj.placement[static_cast<size_t>(round_)])
            boxes.push_back(*obj.placement[static_cast<size_t>(round_)]);

    auto free_cell = [&](int r, int c) {
        const double x0 = c * res, x1 = x0 + res;
        const double y0 = r * res, y1 = y0 + res;
        if (x0 < 0.0 || y0 < 0.0 || x1 > scene_.floor_x || y1 > scene_.floor_y) return false;
        for (const AABox& box : boxes) {
            if (x1 <= box.min.x() - margin || box.max.x() + margin <= x0) continue;
            if (y1 <= box.min.y() - margin || box.max.y() + margin <= y0) continue;
            return false;
        }
        return true;
    };

    const int start_r = static_cast<int>(std::floor(start_.y() / res));
    const int start_c = static_cast<int>(std::floor(start_.x() / res));
    std::vector<uint8_t> seen(static_cast<size_t>(rows) * cols, 0);
    std::vector<Eigen::Vector2d> out;
    if (start_r < 0 || start_r >= rows || start_c < 0 || start_c >= cols ||
        !free_cell(start_r, start_c))
        return out;
    std::queue<std::pair<int, int>> frontier;
    frontier.push({start_r, start_c});
    seen[static_cast<size_t>(start_r) * cols + start_c] = 1;
    while (!frontier.empty()) {
        const auto [r, c] = frontier.front();
        frontier.pop();
        out.push_back({(c + 0.5) * res, (r + 0.5) * res});
        for (int dr = -1; dr <= 1; ++dr)
            for (int dc = -1; dc <= 1; ++dc) {
                if (dr == 0 && dc == 0) continue;
                const int nr = r + dr, nc = c + dc;
                if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) continue;
                if (seen[static_cast<size_t>(nr) * cols + nc] || !free_cell(nr, nc)) continue;
                seen[static_cast<size_t>(nr) * cols + nc] = 1;
                frontier.push({nr, nc});
            }
    }
    return out;
}

double ExplorationRunner::coverage() const {
    const std::vector<Eigen::Vector2d> oracle = reachable_navigable_oracle();
    if (oracle.empty()) return 1.0;
    const ObstacleMap2D map = obstacle_map();
    size_t observed = 0;
    for (const Eigen::Vector2d& p : oracle) {
        const CellCoord cell = map.geom.cell_of(p.x(), p.y());
        if (map.geom.contains(cell) && map.at(cell) == CellState::Navigable) ++observed;
    }
    return static_cast<double>(observed) / static_cast<double>(oracle.size());
}

}  // namespace voxelmem
