#pragma once

#include <Eigen/Core>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "voxelmem/frame_store.hpp"
#include "voxelmem/mllm_client.hpp"
#include "voxelmem/semantics.hpp"
#include "voxelmem/voxel_memory.hpp"

namespace voxelmem {

struct QueryConfig {
    double similarity_threshold = 0.6;
    int k = 1;                    // hybrid candidate image count
    int max_context_images = 60;  // prompt image cap
    double dbscan_eps = 0.15;     // 3 x default voxel size
    int dbscan_min_points = 5;

    // Ablation gates. All on by default.
    bool use_similarity_threshold = true;
    bool use_detector_check = true;  // feature path only; mLLM localization always detects
    bool use_image_filter = true;    // restrict prompt images to live frames

    void validate() const;  // max_context_images >= k >= 1
};

// A located object with provenance, or an explicit not-found.
struct QueryResult {
    struct Found {
        Eigen::Vector3d position;
        int64_t image_id = 0;
        double score = 0.0;
    };
    std::optional<Found> found;

    bool is_found() const { return found.has_value(); }
    static QueryResult not_found() { return {}; }
    static QueryResult at(const Eigen::Vector3d& position, int64_t image_id, double score) {
        return {Found{position, image_id, score}};
    }
};

struct BestVoxel {
    VoxelKey key;
    double score = 0.0;
};

// Argmax of stored-feature . query dot product; ties resolve to the smallest
// key in lexicographic order. Empty memory -> nullopt.
std::optional<BestVoxel> best_voxel(const MapSnapshot& snapshot,
                                    const Eigen::VectorXf& query_feature);

struct RankedImage {
    int64_t image_id = 0;
    double score = 0.0;  // best voxel score of the originating cluster
    VoxelKey voxel;      // that voxel
};

// DBSCAN over the centroids of voxels scoring above the similarity threshold;
// clusters ranked by their best voxel, one image per cluster, deduplicated.
// May return fewer than k.
std::vector<RankedImage> top_k_candidates(const MapSnapshot& snapshot,
                                          const Eigen::VectorXf& query_feature,
                                          const QueryConfig& config);
std::vector<int64_t> top_k_images(const MapSnapshot& snapshot, const Eigen::VectorXf& query_feature,
                                  const QueryConfig& config);

struct MllmPrompt {
    std::string prompt;
    std::vector<std::shared_ptr<const PosedFrame>> images;  // oldest first
};

// Keeps the most recent max_context_images of `live_frames` (which must be
// oldest-first), and interpolates the fixed, versioned prompt template.
MllmPrompt build_mllm_prompt(const std::vector<std::shared_ptr<const PosedFrame>>& live_frames,
                             const std::string& query, const QueryConfig& config);

extern const char* const kPromptTemplateVersion;

// Recovers the query string from a template-built prompt (used by the label
// oracle client).
std::string extract_query_from_prompt(const std::string& prompt);

// Feature-argmax path: similarity gate, latest image of the best voxel,
// detector cross-check, median-mask-pixel localization.
QueryResult vlm_query(const MapSnapshot& snapshot, const FrameStore& store,
                      const TextEmbedder& embedder, const Detector& detector,
                      const std::string& query, const QueryConfig& config);

// mLLM-QA path over the (optionally live-filtered) recent frames.
QueryResult mllm_query(const MapSnapshot& snapshot, const FrameStore& store, MllmClient& client,
                       const Detector& detector, const std::string& query,
                       const QueryConfig& config);

// Hybrid: top-k retrieval feeds the mLLM; k = 1 degenerates to vlm_query.
QueryResult hybrid_query(const MapSnapshot& snapshot, const FrameStore& store, MllmClient& client,
                         const TextEmbedder& embedder, const Detector& detector,
                         const std::string& query, const QueryConfig& config);

// Median mask pixel (component-wise, snapped to the nearest mask member),
// back-projected through the frame's stored depth; falls back to the nearest
// mask pixel with valid depth, nullopt when none has any.
std::optional<Eigen::Vector3d> localize_detection(const PosedFrame& frame,
                                                  const std::vector<std::pair<int, int>>& mask);

}  // namespace voxelmem
