#include "voxelmem/serial_reference.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace voxelmem::serial {

void project_point(const Camera& cam, const double world[3], double* row, double* col,
                   double* depth) {
    const double dx = world[0] - cam.translation[0];
    const double dy = world[1] - cam.translation[1];
    const double dz = world[2] - cam.translation[2];
    // R^T * (p - t); rotation stored row-major, so columns index the transpose.
    const double px = cam.rotation[0] * dx + cam.rotation[3] * dy + cam.rotation[6] * dz;
    const double py = cam.rotation[1] * dx + cam.rotation[4] * dy + cam.rotation[7] * dz;
    const double pz = cam.rotation[2] * dx + cam.rotation[5] * dy + cam.rotation[8] * dz;
    *row = cam.fy * py / pz + cam.cy;
    *col = cam.fx * px / pz + cam.cx;
    *depth = pz;
}

void backproject_pixel(const Camera& cam, int row, int col, double depth, double world[3]) {
    const double px = (col - cam.cx) * depth / cam.fx;
    const double py = (row - cam.cy) * depth / cam.fy;
    const double pz = depth;
    world[0] = cam.rotation[0] * px + cam.rotation[1] * py + cam.rotation[2] * pz + cam.translation[0];
    world[1] = cam.rotation[3] * px + cam.rotation[4] * py + cam.rotation[5] * pz + cam.translation[1];
    world[2] = cam.rotation[6] * px + cam.rotation[7] * py + cam.rotation[8] * pz + cam.translation[2];
}

std::vector<size_t> frustum_removal(const Camera& cam, const std::vector<float>& depth,
                                    const std::vector<FlatVoxel>& voxels, double epsilon,
                                    double max_depth) {
    std::vector<size_t> removed;
    for (size_t n = 0; n < voxels.size(); ++n) {
        const double world[3] = {voxels[n].x, voxels[n].y, voxels[n].z};
        double row, col, d;
        project_point(cam, world, &row, &col, &d);
        if (!(d > 0.0)) continue;
        if (!std::isfinite(row) || !std::isfinite(col)) continue;
        const long r = std::lround(row);
        const long c = std::lround(col);
        if (r < 0 || r >= cam.height || c < 0 || c >= cam.width) continue;
        const double observed = depth[static_cast<size_t>(r) * cam.width + c];
        if (observed <= 0.0) continue;
        if (d < std::min(max_depth, observed + epsilon)) removed.push_back(n);
    }
    return removed;
}

WeightedMean weighted_mean(const std::vector<std::vector<float>>& features,
                           const std::vector<double>& weights) {
    WeightedMean out;
    if (features.empty()) return out;
    out.mean.assign(features[0].size(), 0.0);
    for (size_t n = 0; n < features.size(); ++n) {
        out.total_weight += weights[n];
        for (size_t d = 0; d < out.mean.size(); ++d)
            out.mean[d] += weights[n] * static_cast<double>(features[n][d]);
    }
    for (double& v : out.mean) v /= out.total_weight;
    return out;
}

std::optional<size_t> argmax_dot(const std::vector<std::vector<float>>& features,
                                 const std::vector<float>& query) {
    std::optional<size_t> best;
    float best_score = 0.0f;
    for (size_t n = 0; n < features.size(); ++n) {
        float score = 0.0f;
        for (size_t d = 0; d < query.size(); ++d) score += features[n][d] * query[d];
        if (!best || score > best_score) {
            best = n;
            best_score = score;
        }
    }
    return best;
}

std::optional<double> dijkstra_grid(const std::vector<uint8_t>& cells, int rows, int cols,
                                    int start_row, int start_col, int goal_row, int goal_col,
                                    double explore_penalty) {
    const double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(static_cast<size_t>(rows) * cols, kInf);
    auto idx = [cols](int r, int c) { return static_cast<size_t>(r) * cols + c; };
    if (cells[idx(start_row, start_col)] == 0) return std::nullopt;

    using Item = std::pair<double, size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    dist[idx(start_row, start_col)] = 0.0;
    queue.push({0.0, idx(start_row, start_col)});
    const double kSqrt2 = std::sqrt(2.0);
    while (!queue.empty()) {
        const auto [d, at] = queue.top();
        queue.pop();
        if (d > dist[at]) continue;
        const int r = static_cast<int>(at / cols), c = static_cast<int>(at % cols);
        if (r == goal_row && c == goal_col) return d;
        for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
                if (dr == 0 && dc == 0) continue;
                const int nr = r + dr, nc = c + dc;
                if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) continue;
                const uint8_t state = cells[idx(nr, nc)];
                if (state == 0) continue;
                const double base = (dr != 0 && dc != 0) ? kSqrt2 : 1.0;
                const double step = base * (state == 2 ? explore_penalty : 1.0);
                if (dist[at] + step < dist[idx(nr, nc)]) {
                    dist[idx(nr, nc)] = dist[at] + step;
                    queue.push({dist[idx(nr, nc)], idx(nr, nc)});
                }
            }
        }
    }
    return std::nullopt;
}

}  // namespace voxelmem::serial
