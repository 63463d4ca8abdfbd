#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "voxelmem/geometry.hpp"

namespace voxelmem {

struct FrameRecord {
    int64_t frame_id = 0;
    double timestamp = 0.0;
    int round = 0;
    std::string depth_path;   // relative to the dataset directory
    std::string labels_path;
    Pose pose;
};

// A benchmark query: positives carry a ground-truth location and radius,
// negatives must be answered with not-found.
struct QueryAnnotation {
    std::string text;
    double time = 0.0;
    int round = 0;
    bool positive = false;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();  // positives only
    double epsilon = 0.0;                                // positives only, > 0
    std::string negative_kind;  // "a" never observed, "b" observed then removed
};

struct DatasetManifest {
    int version = 1;
    int rounds = 1;
    CameraIntrinsics intrinsics;
    std::vector<std::string> labels;
    std::vector<FrameRecord> frames;    // timestamps non-decreasing
    std::vector<QueryAnnotation> queries;
};

// On-disk layout: <dir>/manifest.json plus frames/ holding 16-bit PGMs
// (depth in millimeters, labels as table indices). Documented in
// docs/formats.md.
class Dataset {
public:
    static Dataset load(const std::filesystem::path& dir);  // throws DataError

    const DatasetManifest& manifest() const { return manifest_; }
    const std::filesystem::path& dir() const { return dir_; }
    size_t frame_count() const { return manifest_.frames.size(); }

    // Lazy: reads the two PGMs on demand.
    std::shared_ptr<const PosedFrame> load_frame(size_t index) const;

private:
    std::filesystem::path dir_;
    DatasetManifest manifest_;
    std::shared_ptr<const std::vector<std::string>> table_;
};

void write_dataset(const std::filesystem::path& dir, const DatasetManifest& manifest,
                   const std::vector<PosedFrame>& frames);

}  // namespace voxelmem
