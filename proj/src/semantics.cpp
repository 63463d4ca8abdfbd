#include "voxelmem/semantics.hpp"

#include <mutex>

#include "voxelmem/errors.hpp"
#include "voxelmem/rng.hpp"

namespace voxelmem {

StubLabelEmbedder::StubLabelEmbedder(int feature_dim, uint64_t seed, double noise_sigma,
                                     SynonymTable synonyms, double max_depth)
    : feature_dim_(feature_dim),
      seed_(seed),
      noise_sigma_(noise_sigma),
      synonyms_(std::move(synonyms)),
      max_depth_(max_depth) {
    if (feature_dim_ <= 0) throw StructuralError("embedder feature_dim must be positive");
}

Eigen::VectorXf StubLabelEmbedder::label_vector(const std::string& label) const {
    {
        std::lock_guard lock(cache_mutex_);
        auto it = cache_.find(label);
        if (it != cache_.end()) return it->second;
    }
    Rng rng(fnv1a(label) ^ (seed_ * 0x9e3779b97f4a7c15ull));
    Eigen::VectorXf v(feature_dim_);
    for (int d = 0; d < feature_dim_; ++d) v[d] = static_cast<float>(rng.gaussian());
    v.normalize();
    std::lock_guard lock(cache_mutex_);
    return cache_.emplace(label, std::move(v)).first->second;
}

Eigen::VectorXf StubLabelEmbedder::embed_text(const std::string& query) const {
    Eigen::VectorXf v = label_vector(resolve_synonym(synonyms_, query));
    if (noise_sigma_ > 0.0) {
        // Seed from the query string so repeated embeds agree.
        Rng rng(fnv1a(query, 0x51ed270b9f9f6e1bull) ^ seed_);
        for (int d = 0; d < feature_dim_; ++d)
            v[d] += static_cast<float>(noise_sigma_ * rng.gaussian());
        v.normalize();
    }
    return v;
}

Eigen::MatrixXf StubLabelEmbedder::embed_frame(const PosedFrame& frame) const {
    if (!frame.appearance.table)
        throw StructuralError("stub embedder needs a label image as appearance");
    const std::vector<BackprojectedPoint> points = backproject(frame, max_depth_);
    std::vector<Eigen::VectorXf> by_index;
    by_index.reserve(frame.appearance.table->size());
    for (const std::string& label : *frame.appearance.table) by_index.push_back(label_vector(label));
    Eigen::MatrixXf out(feature_dim_, static_cast<Eigen::Index>(points.size()));
#pragma omp parallel for schedule(static)
    for (long n = 0; n < static_cast<long>(points.size()); ++n) {
        const auto& p = points[n];
        out.col(n) = by_index[frame.appearance.index_at(p.row, p.col)];
    }
    return out;
}

StubDetector::StubDetector(SynonymTable synonyms, std::set<std::string> failure_labels)
    : synonyms_(std::move(synonyms)), failure_labels_(std::move(failure_labels)) {}

std::optional<Detection> StubDetector::detect(const LabelImage& appearance,
                                              const std::string& query) const {
    if (!appearance.table) return std::nullopt;
    const std::string& target = resolve_synonym(synonyms_, query);
    if (failure_labels_.count(target)) return std::nullopt;
    uint16_t target_index = 0;
    bool have_index = false;
    for (size_t n = 0; n < appearance.table->size(); ++n) {
        if ((*appearance.table)[n] == target) {
            target_index = static_cast<uint16_t>(n);
            have_index = true;
            break;
        }
    }
    if (!have_index) return std::nullopt;
    Detection det;
    for (int r = 0; r < appearance.height; ++r)
        for (int c = 0; c < appearance.width; ++c)
            if (appearance.index_at(r, c) == target_index) det.mask.push_back({r, c});
    if (det.mask.empty()) return std::nullopt;
    det.confidence = 1.0;
    return det;
}

}  // namespace voxelmem
