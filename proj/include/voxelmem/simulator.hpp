#pragma once

#include <Eigen/Core>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "voxelmem/geometry.hpp"

namespace voxelmem {

struct AABox {
    Eigen::Vector3d min = Eigen::Vector3d::Zero();
    Eigen::Vector3d max = Eigen::Vector3d::Zero();

    Eigen::Vector3d center() const { return 0.5 * (min + max); }
    double half_diagonal() const { return 0.5 * (max - min).norm(); }
    bool valid() const { return (max.array() > min.array()).all(); }
};

struct SceneObject {
    std::string label;
    std::vector<std::optional<AABox>> placement;  // one slot per round; nullopt = absent
};

// Axis-aligned labeled boxes over a rectangular floor at z = 0, changing in
// scripted rounds. The ground-truth engine behind every derived oracle.
struct Scene {
    double floor_x = 6.0, floor_y = 4.0;  // floor spans [0, floor_x] x [0, floor_y]
    std::vector<AABox> obstacles;         // walls and static furniture, labeled "obstacle"
    std::vector<SceneObject> objects;
    int rounds = 3;
    uint64_t seed = 0;
    double depth_noise_sigma = 0.0;

    std::shared_ptr<const std::vector<std::string>> label_table() const;
    void validate() const;  // throws StructuralError
};

struct PoseStamped {
    double timestamp = 0.0;
    Pose pose;
};

struct TrajectorySpec {
    CameraIntrinsics intrinsics;
    std::vector<std::vector<PoseStamped>> per_round;  // timestamps strictly increasing globally

    void validate(int rounds) const;
};

// Nearest ray-box / ray-floor hit per pixel, depth stored as camera-frame z so
// that backproject(render(...)) lands exactly on scene surfaces. Misses get
// invalid depth 0 and the empty label.
PosedFrame render_frame(const Scene& scene, int round, const Pose& pose,
                        const CameraIntrinsics& intrinsics, int64_t frame_id, double timestamp);

// Box center and half-diagonal of the labeled object in that round; nullopt
// when it is not placed. Duplicate placements of one label -> StructuralError.
std::optional<std::pair<Eigen::Vector3d, double>> ground_truth_location(const Scene& scene,
                                                                        int round,
                                                                        const std::string& label);

}  // namespace voxelmem
