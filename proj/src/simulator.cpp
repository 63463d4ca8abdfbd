#include "voxelmem/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "voxelmem/errors.hpp"
#include "voxelmem/rng.hpp"

namespace voxelmem {

std::shared_ptr<const std::vector<std::string>> Scene::label_table() const {
    auto table = std::make_shared<std::vector<std::string>>();
    table->push_back("");
    table->push_back("floor");
    table->push_back("obstacle");
    for (const SceneObject& obj : objects)
        if (std::find(table->begin(), table->end(), obj.label) == table->end())
            table->push_back(obj.label);
    return table;
}

void Scene::validate() const {
    if (rounds < 1) throw StructuralError("scene: rounds must be >= 1");
    if (!(floor_x > 0.0 && floor_y > 0.0)) throw StructuralError("scene: floor extent must be positive");
    for (const AABox& box : obstacles)
        if (!box.valid()) throw StructuralError("scene: degenerate obstacle box");
    for (const SceneObject& obj : objects) {
        if (obj.label.empty() || obj.label == "floor" || obj.label == "obstacle")
            throw StructuralError("scene: object label '" + obj.label + "' is reserved or empty");
        if (static_cast<int>(obj.placement.size()) != rounds)
            throw StructuralError("scene: object '" + obj.label + "' placement list must cover every round");
        for (const auto& box : obj.placement) {
            if (!box) continue;
            if (!box->valid()) throw StructuralError("scene: degenerate box for '" + obj.label + "'");
            if (box->min.x() < 0.0 || box->min.y() < 0.0 || box->max.x() > floor_x ||
                box->max.y() > floor_y)
                throw StructuralError("scene: '" + obj.label + "' leaves the floor extent");
            for (const AABox& ob : obstacles) {
                const bool disjoint = box->max.x() <= ob.min.x() || ob.max.x() <= box->min.x() ||
                                      box->max.y() <= ob.min.y() || ob.max.y() <= box->min.y() ||
                                      box->max.z() <= ob.min.z() || ob.max.z() <= box->min.z();
                if (!disjoint)
                    throw StructuralError("scene: '" + obj.label + "' intersects a static obstacle");
            }
        }
    }
}

void TrajectorySpec::validate(int rounds) const {
    intrinsics.validate();
    if (static_cast<int>(per_round.size()) != rounds)
        throw StructuralError("trajectory: one pose list per round required");
    double last = -std::numeric_limits<double>::infinity();
    for (const auto& round_poses : per_round)
        for (const PoseStamped& ps : round_poses) {
            if (ps.timestamp <= last)
                throw StructuralError("trajectory: timestamps must be strictly increasing");
            last = ps.timestamp;
            ps.pose.validate();
        }
}

namespace {

// Entry parameter of a ray against an axis-aligned box; nullopt if the ray
// starts inside or misses. Direction need not be normalized: the returned
// parameter is in units of the direction vector, i.e. camera-frame z when the
// direction has unit z in camera coordinates.
std::optional<double> ray_box_entry(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                                    const AABox& box) {
    double t_near = -std::numeric_limits<double>::infinity();
    double t_far = std::numeric_limits<double>::infinity();
    for (int axis = 0; axis < 3; ++axis) {
        if (std::abs(dir[axis]) < 1e-15) {
            if (origin[axis] < box.min[axis] || origin[axis] > box.max[axis]) return std::nullopt;
            continue;
        }
        double t0 = (box.min[axis] - origin[axis]) / dir[axis];
        double t1 = (box.max[axis] - origin[axis]) / dir[axis];
        if (t0 > t1) std::swap(t0, t1);
        t_near = std::max(t_near, t0);
        t_far = std::min(t_far, t1);
        if (t_near > t_far) return std::nullopt;
    }
    if (t_near <= 1e-9) return std::nullopt;
    return t_near;
}

}  // namespace

PosedFrame render_frame(const Scene& scene, int round, const Pose& pose,
                        const CameraIntrinsics& intrinsics, int64_t frame_id, double timestamp) {
    if (round < 0 || round >= scene.rounds) throw StructuralError("render_frame: round out of range");
    intrinsics.validate();
    pose.validate();

    struct Hittable {
        AABox box;
        uint16_t label_index;
    };
    auto table = scene.label_table();
    std::vector<Hittable> boxes;
    for (const AABox& ob : scene.obstacles) boxes.push_back({ob, 2});
    for (const SceneObject& obj : scene.objects) {
        if (!obj.placement[static_cast<size_t>(round)]) continue;
        const auto it = std::find(table->begin(), table->end(), obj.label);
        boxes.push_back({*obj.placement[static_cast<size_t>(round)],
                         static_cast<uint16_t>(it - table->begin())});
    }

    PosedFrame frame;
    frame.frame_id = frame_id;
    frame.timestamp = timestamp;
    frame.round = round;
    frame.intrinsics = intrinsics;
    frame.pose = pose;
    frame.depth = DepthImage::zeros(intrinsics.height, intrinsics.width);
    frame.appearance = LabelImage::empty(intrinsics.height, intrinsics.width, table);

    const Eigen::Matrix3d& rot = pose.rotation;
    const Eigen::Vector3d& origin = pose.translation;
    const bool noisy = scene.depth_noise_sigma > 0.0;

#pragma omp parallel for schedule(static)
    for (int r = 0; r < intrinsics.height; ++r) {
        for (int c = 0; c < intrinsics.width; ++c) {
            const Eigen::Vector3d dir_cam((c - intrinsics.cx) / intrinsics.fx,
                                          (r - intrinsics.cy) / intrinsics.fy, 1.0);
            const Eigen::Vector3d dir = rot * dir_cam;
            double best_t = std::numeric_limits<double>::infinity();
            uint16_t best_label = 0;
            // Floor plane z = 0 inside the extent.
            if (std::abs(dir.z()) > 1e-15) {
                const double t = -origin.z() / dir.z();
                if (t > 1e-9) {
                    const double x = origin.x() + t * dir.x();
                    const double y = origin.y() + t * dir.y();
                    if (x >= 0.0 && x <= scene.floor_x && y >= 0.0 && y <= scene.floor_y) {
                        best_t = t;
                        best_label = 1;
                    }
                }
            }
            for (const Hittable& h : boxes) {
                const auto t = ray_box_entry(origin, dir, h.box);
                if (t && *t < best_t) {
                    best_t = *t;
                    best_label = h.label_index;
                }
            }
            if (std::isinf(best_t)) continue;
            double depth = best_t;  // camera-frame z, since dir_cam.z == 1
            if (noisy) {
                uint64_t state = scene.seed ^ (static_cast<uint64_t>(frame_id) * 0x9e3779b97f4a7c15ull) ^
                                 (static_cast<uint64_t>(r) << 32) ^ static_cast<uint64_t>(c);
                Rng rng(splitmix64(state));
                depth = std::max(1e-4, depth + scene.depth_noise_sigma * rng.gaussian());
            }
            frame.depth.at(r, c) = static_cast<float>(depth);
            frame.appearance.indices[static_cast<size_t>(r) * intrinsics.width + c] = best_label;
        }
    }
    return frame;
}

std::optional<std::pair<Eigen::Vector3d, double>> ground_truth_location(const Scene& scene,
                                                                        int round,
                                                                        const std::string& label) {
    if (round < 0 || round >= scene.rounds) throw StructuralError("ground_truth: round out of range");
    std::optional<std::pair<Eigen::Vector3d, double>> found;
    for (const SceneObject& obj : scene.objects) {
        if (obj.label != label || !obj.placement[static_cast<size_t>(round)]) continue;
        if (found)
            throw StructuralError("ground_truth: label '" + label +
                                  "' placed more than once in round " + std::to_string(round));
        const AABox& box = *obj.placement[static_cast<size_t>(round)];
        found = {box.center(), box.half_diagonal()};
    }
    return found;
}

}  // namespace voxelmem
