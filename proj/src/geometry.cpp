#include "voxelmem/geometry.hpp"

#include <cmath>
#include <numeric>

#include "voxelmem/errors.hpp"

namespace voxelmem {

void CameraIntrinsics::validate() const {
    if (height <= 0 || width <= 0) throw StructuralError("intrinsics: non-positive image dimensions");
    if (!(fx > 0.0) || !(fy > 0.0)) throw StructuralError("intrinsics: non-positive focal length");
    if (!(cx >= 0.0 && cx < width)) throw StructuralError("intrinsics: principal point cx out of range");
    if (!(cy >= 0.0 && cy < height)) throw StructuralError("intrinsics: principal point cy out of range");
}

void Pose::validate() const {
    const Eigen::Matrix3d gram = rotation.transpose() * rotation;
    if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6)
        throw StructuralError("pose: rotation is not orthonormal");
    if (std::abs(rotation.determinant() - 1.0) > 1e-6)
        throw StructuralError("pose: rotation determinant is not +1");
}

Pose Pose::from_yaw_pitch(const Eigen::Vector3d& position, double yaw_rad, double pitch_rad) {
    // Camera frame: +z optical axis, +x right, +y down. Yaw 0 looks along
    // world +x, positive yaw turns toward +y; positive pitch tilts up.
    const Eigen::Matrix3d level = (Eigen::Matrix3d() << 0, 0, 1, -1, 0, 0, 0, -1, 0).finished();
    Eigen::Matrix3d r = Eigen::AngleAxisd(yaw_rad, Eigen::Vector3d::UnitZ()).toRotationMatrix() *
                        Eigen::AngleAxisd(-pitch_rad, Eigen::Vector3d::UnitY()).toRotationMatrix() * level;
    return {r, position};
}

void PosedFrame::validate() const {
    intrinsics.validate();
    pose.validate();
    if (depth.height != intrinsics.height || depth.width != intrinsics.width)
        throw StructuralError("frame: depth dimensions do not match intrinsics");
    if (appearance.height != 0 &&
        (appearance.height != intrinsics.height || appearance.width != intrinsics.width))
        throw StructuralError("frame: appearance dimensions do not match intrinsics");
    for (float d : depth.values)
        if (!std::isfinite(d) || d < 0.0f) throw StructuralError("frame: depth must be finite and >= 0");
}

std::vector<BackprojectedPoint> backproject(const PosedFrame& frame, double max_depth) {
    if (frame.depth.height != frame.intrinsics.height || frame.depth.width != frame.intrinsics.width)
        throw StructuralError("backproject: depth dimensions do not match intrinsics");
    const int h = frame.depth.height, w = frame.depth.width;
    const double fx = frame.intrinsics.fx, fy = frame.intrinsics.fy;
    const double cx = frame.intrinsics.cx, cy = frame.intrinsics.cy;
    const Eigen::Matrix3d& rot = frame.pose.rotation;
    const Eigen::Vector3d& trans = frame.pose.translation;

    // Two passes so rows can be filled in parallel into one row-major output.
    std::vector<size_t> row_offsets(static_cast<size_t>(h) + 1, 0);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < h; ++r) {
        size_t n = 0;
        for (int c = 0; c < w; ++c) {
            const float d = frame.depth.at(r, c);
            if (d > 0.0f && d <= max_depth) ++n;
        }
        row_offsets[static_cast<size_t>(r) + 1] = n;
    }
    for (int r = 0; r < h; ++r) row_offsets[static_cast<size_t>(r) + 1] += row_offsets[r];

    std::vector<BackprojectedPoint> out(row_offsets[h]);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < h; ++r) {
        size_t at = row_offsets[r];
        for (int c = 0; c < w; ++c) {
            const double d = frame.depth.at(r, c);
            if (!(d > 0.0 && d <= max_depth)) continue;
            const Eigen::Vector3d cam((c - cx) * d / fx, (r - cy) * d / fy, d);
            out[at++] = BackprojectedPoint{rot * cam + trans, r, c, d};
        }
    }
    return out;
}

PixelProjection project(const Eigen::Vector3d& world_point, const CameraIntrinsics& intrinsics,
                        const Pose& pose) {
    const Eigen::Vector3d cam = pose.rotation.transpose() * (world_point - pose.translation);
    const double d = cam.z();
    return {intrinsics.fy * cam.y() / d + intrinsics.cy, intrinsics.fx * cam.x() / d + intrinsics.cx, d};
}

bool pixel_in_image(double row, double col, const CameraIntrinsics& intrinsics, int* out_row,
                    int* out_col) {
    if (!std::isfinite(row) || !std::isfinite(col)) return false;
    const long r = std::lround(row);
    const long c = std::lround(col);
    if (r < 0 || r >= intrinsics.height || c < 0 || c >= intrinsics.width) return false;
    if (out_row) *out_row = static_cast<int>(r);
    if (out_col) *out_col = static_cast<int>(c);
    return true;
}

}  // namespace voxelmem
