#include "voxelmem/pipeline.hpp"

#include "voxelmem/errors.hpp"

namespace voxelmem {

StubPipeline::StubPipeline(PipelineConfig config, std::shared_ptr<MllmClient> client)
    : config_(config),
      memory_(config.voxel_size, config.feature_dim),
      embedder_(config.feature_dim, config.stub_seed, config.stub_noise_sigma,
                config.embedder_synonyms, config.max_depth),
      detector_(config.detector_synonyms, config.detector_failures),
      client_(std::move(client)) {
    config_.query.validate();
    if (config_.method != QueryMethod::Vlm && !client_)
        throw StructuralError("mLLM/hybrid pipeline needs a client");
}

void StubPipeline::ingest(std::shared_ptr<const PosedFrame> frame) {
    const Eigen::MatrixXf features = embedder_.embed_frame(*frame);
    IngestOptions options;
    options.epsilon = config_.epsilon;
    options.max_depth = config_.max_depth;
    options.enable_removal = config_.enable_removal;
    memory_.ingest_frame(*frame, features, options);
    store_.add(std::move(frame));
    // Dead frames are only dropped when voxelmap image filtering is on, so the
    // no-filter ablation really does see the full history.
    if (config_.query.use_image_filter) store_.prune(memory_.prune_dead_images());
}

QueryResult StubPipeline::localize(const std::string& query) {
    const auto snapshot = memory_.snapshot();
    switch (config_.method) {
        case QueryMethod::Vlm:
            return vlm_query(*snapshot, store_, embedder_, detector_, query, config_.query);
        case QueryMethod::Mllm:
            return mllm_query(*snapshot, store_, *client_, detector_, query, config_.query);
        case QueryMethod::Hybrid:
            return hybrid_query(*snapshot, store_, *client_, embedder_, detector_, query,
                                config_.query);
    }
    throw InternalError("unreachable query method");
}

}  // namespace voxelmem
