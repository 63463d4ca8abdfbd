#pragma once

#include <Eigen/Core>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <span>
#include <vector>

#include "voxelmem/geometry.hpp"

namespace voxelmem {

struct VoxelKey {
    int32_t i = 0, j = 0, k = 0;
    auto operator<=>(const VoxelKey&) const = default;
};

inline VoxelKey voxel_key_of(const Eigen::Vector3d& p, double voxel_size) {
    return {static_cast<int32_t>(std::floor(p.x() / voxel_size)),
            static_cast<int32_t>(std::floor(p.y() / voxel_size)),
            static_cast<int32_t>(std::floor(p.z() / voxel_size))};
}

inline Eigen::Vector3d voxel_center(VoxelKey key, double voxel_size) {
    return {(key.i + 0.5) * voxel_size, (key.j + 0.5) * voxel_size, (key.k + 0.5) * voxel_size};
}

// Blocks of 8x8x8 voxels; the copy-on-write and parallelism granularity.
struct BlockKey {
    int32_t i = 0, j = 0, k = 0;
    auto operator<=>(const BlockKey&) const = default;
};

inline constexpr int kBlockShift = 3;

inline BlockKey block_key_of(VoxelKey key) {
    // Arithmetic shift floors toward -inf for negative indices.
    return {key.i >> kBlockShift, key.j >> kBlockShift, key.k >> kBlockShift};
}

struct VoxelRecord {
    double count = 0.0;               // accumulated observation weight
    Eigen::VectorXf feature;          // weighted mean of contributing features
    double last_seen = 0.0;           // seconds; most recent contributing frame
    int64_t image_id = 0;             // frame id of that contribution
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();  // weighted mean position
};

struct PointObservation {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Eigen::VectorXf feature;
    double weight = 1.0;
    double time = 0.0;
    int64_t image_id = 0;
};

// Column-major feature matrix (D x N), one column per point. The batched form
// every hot path uses; PointObservation is converted to it on entry.
struct ObservationBatch {
    std::vector<Eigen::Vector3d> positions;
    Eigen::MatrixXf features;
    std::vector<double> weights;
    std::vector<double> times;
    std::vector<int64_t> image_ids;

    size_t size() const { return positions.size(); }
};

struct VoxelEntry {
    VoxelKey key;
    VoxelRecord record;
};

struct VoxelBlock {
    std::vector<VoxelEntry> entries;  // sorted by key
};

// Immutable view of the map. Ingestion publishes a fresh snapshot; queries and
// planners hold theirs for as long as they like and never see a half-applied
// frame. Untouched blocks are shared between consecutive snapshots.
struct MapSnapshot {
    double voxel_size = 0.05;
    int feature_dim = 0;
    std::vector<BlockKey> block_keys;                       // sorted
    std::vector<std::shared_ptr<const VoxelBlock>> blocks;  // parallel to block_keys
    std::map<int64_t, int64_t> image_refcounts;             // live image id -> #cells
    size_t cell_count = 0;

    const VoxelRecord* find(VoxelKey key) const;
    std::set<int64_t> live_images() const;

    // Deterministic iteration: blocks in key order, entries in key order.
    template <typename F>
    void for_each(F&& fn) const {
        for (const auto& block : blocks)
            for (const auto& entry : block->entries) fn(entry);
    }
};

struct IngestOptions {
    double epsilon = 0.05;     // depth tolerance in the removal test, meters
    double max_depth = 2.0;    // frustum depth cap, meters
    bool enable_removal = true;  // off = "only adding points"
};

struct RemovalResult {
    std::vector<VoxelKey> removed;  // sorted (block order, then key order)
};

// The dynamic sparse voxel map. Single writer; snapshot() is O(1) and safe to
// call concurrently with the writer from any thread.
class VoxelMemory {
public:
    VoxelMemory(double voxel_size, int feature_dim);
    VoxelMemory(VoxelMemory&& other) noexcept : current_(other.snapshot()) {}
    VoxelMemory& operator=(VoxelMemory&& other) noexcept {
        publish(other.snapshot());
        return *this;
    }

    std::shared_ptr<const MapSnapshot> snapshot() const;

    double voxel_size() const { return current_->voxel_size; }
    int feature_dim() const { return current_->feature_dim; }
    size_t cell_count() const { return snapshot()->cell_count; }

    // Metadata aggregation per target voxel: counts add, features and
    // centroids update as count-weighted means, time/image follow the latest
    // contribution. Empty voxels start from C = 0, f = 0.
    void insert_points(std::span<const PointObservation> observations);
    void insert_batch(const ObservationBatch& batch);

    // A voxel (tested at its centroid) is dropped iff it projects into the
    // image and its camera depth d satisfies 0 < d < min(max_depth, D[h,w] + epsilon).
    // Pixels with invalid depth (0) never remove anything.
    RemovalResult remove_stale(const PosedFrame& frame, double epsilon, double max_depth = 2.0);

    // remove_stale followed by insertion of the frame's back-projected points
    // (weight 1 per valid pixel). `features` columns align with backproject()
    // output at the same max_depth.
    void ingest_frame(const PosedFrame& frame, const Eigen::MatrixXf& features,
                      const IngestOptions& options = {});

    // Exactly the set of frame ids some voxel still points to.
    std::set<int64_t> prune_dead_images() const { return snapshot()->live_images(); }

    void save(const std::filesystem::path& path) const;
    static VoxelMemory load(const std::filesystem::path& path);

    // Test hook: recomputes image refcounts from the cells and compares.
    bool check_live_images_consistent() const;

private:
    explicit VoxelMemory(std::shared_ptr<const MapSnapshot> snap);
    void publish(std::shared_ptr<const MapSnapshot> next);

    mutable std::mutex mutex_;
    std::shared_ptr<const MapSnapshot> current_;
};

}  // namespace voxelmem
