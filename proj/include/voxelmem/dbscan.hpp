#pragma once

#include <Eigen/Core>
#include <vector>

namespace voxelmem {

// Density clustering over 3D points. Returns one cluster id per point.
// Points that classic DBSCAN would mark as noise become singleton clusters
// so that downstream ranking never drops the single best-scoring voxel
// (the k = 1 retrieval path must degenerate to the plain argmax).
// Deterministic: cluster ids are assigned in point-index order.
std::vector<int> dbscan_cluster(const std::vector<Eigen::Vector3d>& points, double eps,
                                int min_points);

}  // namespace voxelmem
