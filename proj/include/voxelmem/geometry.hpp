#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace voxelmem {

struct CameraIntrinsics {
    double fx = 0.0, fy = 0.0;  // focal lengths, pixels
    double cx = 0.0, cy = 0.0;  // principal point, pixels
    int height = 0, width = 0;

    void validate() const;  // throws StructuralError
};

// Rigid transform, world-from-camera convention.
struct Pose {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    Eigen::Vector3d transform(const Eigen::Vector3d& p_cam) const { return rotation * p_cam + translation; }
    Eigen::Vector3d inverse_transform(const Eigen::Vector3d& p_world) const {
        return rotation.transpose() * (p_world - translation);
    }
    Pose inverse() const { return {rotation.transpose(), -(rotation.transpose() * translation)}; }

    // Orthonormality with det +1, checked to 1e-6. Throws StructuralError.
    void validate() const;

    static Pose from_yaw_pitch(const Eigen::Vector3d& position, double yaw_rad, double pitch_rad);
};

// Depth in meters, row-major; invalid pixels are encoded as 0.
struct DepthImage {
    int height = 0, width = 0;
    std::vector<float> values;

    float at(int row, int col) const { return values[static_cast<size_t>(row) * width + col]; }
    float& at(int row, int col) { return values[static_cast<size_t>(row) * width + col]; }
    static DepthImage zeros(int height, int width) {
        return {height, width, std::vector<float>(static_cast<size_t>(height) * width, 0.0f)};
    }
};

// Per-pixel patch labels; index 0 is reserved for "no label" (sky / unknown).
// The table is shared across the frames of a stream.
struct LabelImage {
    int height = 0, width = 0;
    std::vector<uint16_t> indices;
    std::shared_ptr<const std::vector<std::string>> table;

    uint16_t index_at(int row, int col) const { return indices[static_cast<size_t>(row) * width + col]; }
    const std::string& label_at(int row, int col) const { return (*table)[index_at(row, col)]; }
    static LabelImage empty(int height, int width,
                            std::shared_ptr<const std::vector<std::string>> table) {
        return {height, width, std::vector<uint16_t>(static_cast<size_t>(height) * width, 0), std::move(table)};
    }
};

// The sole ingestion unit: a timestamped, posed depth + label pair.
struct PosedFrame {
    int64_t frame_id = 0;
    double timestamp = 0.0;
    int round = 0;
    CameraIntrinsics intrinsics;
    Pose pose;
    DepthImage depth;
    LabelImage appearance;

    void validate() const;  // id/dimension consistency; throws StructuralError
};

struct BackprojectedPoint {
    Eigen::Vector3d world;
    int row = 0, col = 0;
    double depth = 0.0;
};

struct PixelProjection {
    double row = 0.0, col = 0.0;
    double depth = 0.0;  // signed camera-frame depth; negative behind the camera
};

// One output per pixel with 0 < depth <= max_depth, in row-major pixel order.
// Parallel inside; output order is deterministic.
std::vector<BackprojectedPoint> backproject(const PosedFrame& frame, double max_depth = 2.0);

// Continuous pixel coordinates plus signed camera depth. Total function: no
// clamping, no bounds checks; image-membership tests are the caller's job.
PixelProjection project(const Eigen::Vector3d& world_point, const CameraIntrinsics& intrinsics,
                        const Pose& pose);

// Shared in-image convention: (row, col) rounded to the nearest integer pixel,
// then required to fall in [0, H) x [0, W).
bool pixel_in_image(double row, double col, const CameraIntrinsics& intrinsics, int* out_row = nullptr,
                    int* out_col = nullptr);

}  // namespace voxelmem
