#include "voxelmem/dbscan.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <queue>
#include <tuple>

namespace voxelmem {

namespace {

constexpr int kUnvisited = -1;
constexpr int kNoise = -2;

using CellIndex = std::tuple<int32_t, int32_t, int32_t>;

CellIndex cell_of(const Eigen::Vector3d& p, double eps) {
    return {static_cast<int32_t>(std::floor(p.x() / eps)),
            static_cast<int32_t>(std::floor(p.y() / eps)),
            static_cast<int32_t>(std::floor(p.z() / eps))};
}

// Grid with cell size eps; neighbors of a point live in the 27 surrounding cells.
struct GridIndex {
    std::map<CellIndex, std::vector<uint32_t>> cells;
    const std::vector<Eigen::Vector3d>& points;
    double eps;

    GridIndex(const std::vector<Eigen::Vector3d>& pts, double eps_) : points(pts), eps(eps_) {
        for (uint32_t n = 0; n < pts.size(); ++n) cells[cell_of(pts[n], eps)].push_back(n);
    }

    std::vector<uint32_t> neighbors(uint32_t at) const {
        std::vector<uint32_t> out;
        const auto [ci, cj, ck] = cell_of(points[at], eps);
        const double eps2 = eps * eps;
        for (int di = -1; di <= 1; ++di)
            for (int dj = -1; dj <= 1; ++dj)
                for (int dk = -1; dk <= 1; ++dk) {
                    auto it = cells.find({ci + di, cj + dj, ck + dk});
                    if (it == cells.end()) continue;
                    for (uint32_t n : it->second)
                        if ((points[n] - points[at]).squaredNorm() <= eps2) out.push_back(n);
                }
        return out;
    }
};

}  // namespace

std::vector<int> dbscan_cluster(const std::vector<Eigen::Vector3d>& points, double eps,
                                int min_points) {
    std::vector<int> labels(points.size(), kUnvisited);
    if (points.empty()) return labels;
    const GridIndex index(points, eps);

    int next_cluster = 0;
    for (uint32_t seed = 0; seed < points.size(); ++seed) {
        if (labels[seed] != kUnvisited) continue;
        std::vector<uint32_t> seed_neighbors = index.neighbors(seed);
        if (static_cast<int>(seed_neighbors.size()) < min_points) {
            labels[seed] = kNoise;
            continue;
        }
        const int cluster = next_cluster++;
        labels[seed] = cluster;
        std::queue<uint32_t> frontier;
        for (uint32_t n : seed_neighbors) frontier.push(n);
        while (!frontier.empty()) {
            const uint32_t at = frontier.front();
            frontier.pop();
            if (labels[at] == kNoise) labels[at] = cluster;  // border point
            if (labels[at] != kUnvisited) continue;
            labels[at] = cluster;
            std::vector<uint32_t> reach = index.neighbors(at);
            if (static_cast<int>(reach.size()) >= min_points)
                for (uint32_t n : reach) frontier.push(n);
        }
    }
    // Noise points become singleton clusters, in index order.
    for (auto& label : labels)
        if (label == kNoise) label = next_cluster++;
    return labels;
}

}  // namespace voxelmem
