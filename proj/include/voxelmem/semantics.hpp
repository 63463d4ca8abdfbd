#pragma once

#include <Eigen/Core>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "voxelmem/geometry.hpp"

namespace voxelmem {

class TextEmbedder {
public:
    virtual ~TextEmbedder() = default;
    virtual int feature_dim() const = 0;
    // Deterministic per query string.
    virtual Eigen::VectorXf embed_text(const std::string& query) const = 0;
};

class PatchEmbedder {
public:
    virtual ~PatchEmbedder() = default;
    virtual int feature_dim() const = 0;
    // One column per back-projectable pixel of the frame, aligned with
    // backproject() output at the embedder's depth cap.
    virtual Eigen::MatrixXf embed_frame(const PosedFrame& frame) const = 0;
};

struct Detection {
    std::vector<std::pair<int, int>> mask;  // (row, col), non-empty
    double confidence = 1.0;
};

class Detector {
public:
    virtual ~Detector() = default;
    virtual std::optional<Detection> detect(const LabelImage& appearance,
                                            const std::string& query) const = 0;
};

// query string -> scene label; identity when a query is absent from the table.
using SynonymTable = std::map<std::string, std::string>;

inline const std::string& resolve_synonym(const SynonymTable& table, const std::string& query) {
    auto it = table.find(query);
    return it == table.end() ? query : it->second;
}

// Test double for the VLM embedding stack. Every label maps to a fixed
// pseudo-random unit vector keyed by a seeded hash of the label string; text
// embeds through the synonym table to the same vector, optionally perturbed
// by Gaussian noise (seeded per query, so still deterministic) and
// renormalized. With zero noise, embed_text(L) . patch_feature(L) == 1.
class StubLabelEmbedder : public TextEmbedder, public PatchEmbedder {
public:
    StubLabelEmbedder(int feature_dim, uint64_t seed, double noise_sigma = 0.0,
                      SynonymTable synonyms = {}, double max_depth = 2.0);

    int feature_dim() const override { return feature_dim_; }
    Eigen::VectorXf embed_text(const std::string& query) const override;
    Eigen::MatrixXf embed_frame(const PosedFrame& frame) const override;

    // The exact unit vector for a scene label (no synonyms, no noise).
    Eigen::VectorXf label_vector(const std::string& label) const;

private:
    int feature_dim_;
    uint64_t seed_;
    double noise_sigma_;
    SynonymTable synonyms_;
    double max_depth_;
    mutable std::map<std::string, Eigen::VectorXf> cache_;
    mutable std::mutex cache_mutex_;
};

// Test double for the open-vocabulary detector: the mask is the set of pixels
// whose label matches the query through the detector's own synonym table,
// confidence 1. Labels in the failure table always miss.
class StubDetector : public Detector {
public:
    explicit StubDetector(SynonymTable synonyms = {}, std::set<std::string> failure_labels = {});
    std::optional<Detection> detect(const LabelImage& appearance,
                                    const std::string& query) const override;

private:
    SynonymTable synonyms_;
    std::set<std::string> failure_labels_;
};

}  // namespace voxelmem
