#pragma once

// Plain serial implementations of the hot kernels, written against flat
// scalar data with their own arithmetic. Tests compare the OpenMP library
// paths against these, and the kernel benchmark times both sides. Nothing
// here may call into the parallel implementations.

#include <cstdint>
#include <optional>
#include <vector>

namespace voxelmem::serial {

struct Camera {
    double fx, fy, cx, cy;
    int height, width;
    double rotation[9];     // row-major, world-from-camera
    double translation[3];
};

struct FlatVoxel {
    int32_t i, j, k;
    double x, y, z;  // centroid
};

// world -> (row, col, depth) through the inverse rigid transform.
void project_point(const Camera& cam, const double world[3], double* row, double* col, double* depth);

// pixel (row, col, depth) -> world point.
void backproject_pixel(const Camera& cam, int row, int col, double depth, double world[3]);

// Brute-force frustum-removal scan: for every voxel, test image membership
// after rounding and 0 < d < min(max_depth, D[row, col] + epsilon); invalid
// observed depth (0) never removes. Returns indices into `voxels`.
std::vector<size_t> frustum_removal(const Camera& cam, const std::vector<float>& depth,
                                    const std::vector<FlatVoxel>& voxels, double epsilon,
                                    double max_depth);

// Weighted mean recomputed from the raw contribution list, input order.
struct WeightedMean {
    std::vector<double> mean;
    double total_weight = 0.0;
};
WeightedMean weighted_mean(const std::vector<std::vector<float>>& features,
                           const std::vector<double>& weights);

// Linear argmax of dot(feature, query); ties broken by smallest index.
std::optional<size_t> argmax_dot(const std::vector<std::vector<float>>& features,
                                 const std::vector<float>& query);

// Uniform-cost search over an 8-connected grid. Cell codes: 0 obstacle,
// 1 navigable, 2 explorable. Step cost = (1 or sqrt 2) * multiplier(dest),
// multiplier = explore_penalty on explorable cells, 1 otherwise.
// Returns the minimal cost to goal, or nullopt if unreachable.
std::optional<double> dijkstra_grid(const std::vector<uint8_t>& cells, int rows, int cols,
                                    int start_row, int start_col, int goal_row, int goal_col,
                                    double explore_penalty);

}  // namespace voxelmem::serial
