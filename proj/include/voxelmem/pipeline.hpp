#pragma once

#include <memory>
#include <set>
#include <string>

#include "voxelmem/evaluate.hpp"
#include "voxelmem/frame_store.hpp"
#include "voxelmem/mllm_client.hpp"
#include "voxelmem/query.hpp"
#include "voxelmem/semantics.hpp"
#include "voxelmem/voxel_memory.hpp"

namespace voxelmem {

enum class QueryMethod { Vlm, Mllm, Hybrid };

struct PipelineConfig {
    QueryMethod method = QueryMethod::Vlm;
    double voxel_size = 0.05;
    int feature_dim = 512;
    double epsilon = 0.05;    // removal depth tolerance
    double max_depth = 2.0;   // frustum depth cap
    bool enable_removal = true;  // off = "only adding points"
    QueryConfig query;

    uint64_t stub_seed = 7;
    double stub_noise_sigma = 0.0;
    SynonymTable embedder_synonyms;
    SynonymTable detector_synonyms;
    std::set<std::string> detector_failures;
};

// The full stub stack behind the harness interface: voxel memory + frame
// store + label-bound embedder/detector, with one of the three query paths on
// top. mLLM/hybrid need a client; vlm ignores it.
class StubPipeline : public LocalizationPipeline {
public:
    explicit StubPipeline(PipelineConfig config, std::shared_ptr<MllmClient> client = nullptr);

    void ingest(std::shared_ptr<const PosedFrame> frame) override;
    QueryResult localize(const std::string& query) override;

    VoxelMemory& memory() { return memory_; }
    FrameStore& frame_store() { return store_; }
    const StubLabelEmbedder& embedder() const { return embedder_; }
    const StubDetector& detector() const { return detector_; }
    const PipelineConfig& config() const { return config_; }

private:
    PipelineConfig config_;
    VoxelMemory memory_;
    FrameStore store_;
    StubLabelEmbedder embedder_;
    StubDetector detector_;
    std::shared_ptr<MllmClient> client_;
};

}  // namespace voxelmem
