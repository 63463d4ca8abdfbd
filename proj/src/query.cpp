#include "voxelmem/query.hpp"

#include <algorithm>
#include <cmath>

#include "voxelmem/dbscan.hpp"
#include "voxelmem/errors.hpp"

namespace voxelmem {

void QueryConfig::validate() const {
    if (k < 1) throw StructuralError("query config: k must be >= 1");
    if (max_context_images < k)
        throw StructuralError("query config: max_context_images must be >= k");
    if (dbscan_min_points < 1) throw StructuralError("query config: dbscan_min_points must be >= 1");
}

std::optional<BestVoxel> best_voxel(const MapSnapshot& snapshot,
                                    const Eigen::VectorXf& query_feature) {
    if (snapshot.cell_count == 0) return std::nullopt;
    if (query_feature.size() != snapshot.feature_dim)
        throw StructuralError("best_voxel: query feature dimension mismatch");

    const long n_blocks = static_cast<long>(snapshot.blocks.size());
    std::vector<std::optional<BestVoxel>> per_block(snapshot.blocks.size());
#pragma omp parallel for schedule(dynamic)
    for (long b = 0; b < n_blocks; ++b) {
        std::optional<BestVoxel> best;
        for (const VoxelEntry& entry : snapshot.blocks[b]->entries) {
            const double score = entry.record.feature.dot(query_feature);
            if (!best || score > best->score || (score == best->score && entry.key < best->key))
                best = BestVoxel{entry.key, score};
        }
        per_block[b] = best;
    }
    std::optional<BestVoxel> best;
    for (const auto& candidate : per_block) {
        if (!candidate) continue;
        if (!best || candidate->score > best->score ||
            (candidate->score == best->score && candidate->key < best->key))
            best = candidate;
    }
    return best;
}

std::vector<RankedImage> top_k_candidates(const MapSnapshot& snapshot,
                                          const Eigen::VectorXf& query_feature,
                                          const QueryConfig& config) {
    config.validate();
    if (query_feature.size() != snapshot.feature_dim)
        throw StructuralError("top_k_candidates: query feature dimension mismatch");

    struct Scored {
        VoxelKey key;
        Eigen::Vector3d centroid;
        double score;
        int64_t image_id;
    };
    std::vector<Scored> scored;
    snapshot.for_each([&](const VoxelEntry& entry) {
        const double score = entry.record.feature.dot(query_feature);
        if (score > config.similarity_threshold)
            scored.push_back({entry.key, entry.record.centroid, score, entry.record.image_id});
    });
    if (scored.empty()) return {};

    std::vector<Eigen::Vector3d> centroids;
    centroids.reserve(scored.size());
    for (const auto& s : scored) centroids.push_back(s.centroid);
    const std::vector<int> labels =
        dbscan_cluster(centroids, config.dbscan_eps, config.dbscan_min_points);

    const int n_clusters = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    std::vector<std::optional<Scored>> cluster_best(static_cast<size_t>(n_clusters));
    for (size_t n = 0; n < scored.size(); ++n) {
        auto& best = cluster_best[static_cast<size_t>(labels[n])];
        if (!best || scored[n].score > best->score ||
            (scored[n].score == best->score && scored[n].key < best->key))
            best = scored[n];
    }
    std::vector<const Scored*> ranked;
    for (const auto& best : cluster_best)
        if (best) ranked.push_back(&*best);
    std::sort(ranked.begin(), ranked.end(), [](const Scored* a, const Scored* b) {
        if (a->score != b->score) return a->score > b->score;
        return a->key < b->key;
    });

    std::vector<RankedImage> out;
    for (const Scored* s : ranked) {
        if (static_cast<int>(out.size()) == config.k) break;
        bool seen = false;
        for (const auto& r : out)
            if (r.image_id == s->image_id) seen = true;
        if (!seen) out.push_back({s->image_id, s->score, s->key});
    }
    return out;
}

std::vector<int64_t> top_k_images(const MapSnapshot& snapshot, const Eigen::VectorXf& query_feature,
                                  const QueryConfig& config) {
    std::vector<int64_t> out;
    for (const RankedImage& r : top_k_candidates(snapshot, query_feature, config))
        out.push_back(r.image_id);
    return out;
}

// ---- prompt -----------------------------------------------------------------

const char* const kPromptTemplateVersion = "v1";

namespace {

std::string render_prompt(size_t image_count, const std::string& query) {
    std::string out;
    out += "You are given " + std::to_string(image_count) +
           " images of an indoor scene, ordered oldest to newest.\n";
    out += "Find the most recent image in which the object \"" + query + "\" is visible.\n";
    out += "Reply with that image's 1-based index. If the object does not appear in any of the "
           "images, reply with the single word None.\n";
    out += "Reply with the index or None only.";
    return out;
}

}  // namespace

MllmPrompt build_mllm_prompt(const std::vector<std::shared_ptr<const PosedFrame>>& live_frames,
                             const std::string& query, const QueryConfig& config) {
    config.validate();
    MllmPrompt out;
    const size_t cap = static_cast<size_t>(config.max_context_images);
    const size_t skip = live_frames.size() > cap ? live_frames.size() - cap : 0;
    out.images.assign(live_frames.begin() + static_cast<long>(skip), live_frames.end());
    out.prompt = render_prompt(out.images.size(), query);
    return out;
}

std::string extract_query_from_prompt(const std::string& prompt) {
    const size_t first = prompt.find('"');
    const size_t last = prompt.rfind('"');
    if (first == std::string::npos || last <= first)
        throw MalformedAnswerError("prompt does not carry a quoted query");
    return prompt.substr(first + 1, last - first - 1);
}

// ---- localization -----------------------------------------------------------

std::optional<Eigen::Vector3d> localize_detection(const PosedFrame& frame,
                                                  const std::vector<std::pair<int, int>>& mask) {
    if (mask.empty()) return std::nullopt;
    std::vector<int> rows, cols;
    rows.reserve(mask.size());
    cols.reserve(mask.size());
    for (const auto& [r, c] : mask) {
        rows.push_back(r);
        cols.push_back(c);
    }
    std::nth_element(rows.begin(), rows.begin() + static_cast<long>((rows.size() - 1) / 2), rows.end());
    std::nth_element(cols.begin(), cols.begin() + static_cast<long>((cols.size() - 1) / 2), cols.end());
    const int med_r = rows[(rows.size() - 1) / 2];
    const int med_c = cols[(cols.size() - 1) / 2];

    // Snap the component-wise median to the nearest mask member; then, if that
    // pixel has no valid depth, to the nearest member that does.
    auto pick = [&](bool need_depth) -> std::optional<std::pair<int, int>> {
        std::optional<std::pair<int, int>> best;
        long best_d2 = 0;
        for (const auto& [r, c] : mask) {
            if (need_depth && !(frame.depth.at(r, c) > 0.0f)) continue;
            const long d2 = static_cast<long>(r - med_r) * (r - med_r) +
                            static_cast<long>(c - med_c) * (c - med_c);
            if (!best || d2 < best_d2 || (d2 == best_d2 && std::make_pair(r, c) < *best)) {
                best = {r, c};
                best_d2 = d2;
            }
        }
        return best;
    };
    auto at = pick(false);
    if (!(frame.depth.at(at->first, at->second) > 0.0f)) at = pick(true);
    if (!at) return std::nullopt;

    const auto [r, c] = *at;
    const double d = frame.depth.at(r, c);
    const Eigen::Vector3d cam((c - frame.intrinsics.cx) * d / frame.intrinsics.fx,
                              (r - frame.intrinsics.cy) * d / frame.intrinsics.fy, d);
    return frame.pose.transform(cam);
}

// ---- query pipelines --------------------------------------------------------

namespace {

std::shared_ptr<const PosedFrame> fetch_frame(const FrameStore& store, int64_t image_id) {
    auto frame = store.get(image_id);
    if (!frame)
        throw InternalError("live image " + std::to_string(image_id) + " missing from frame store");
    return frame;
}

QueryResult confirm_and_localize(const PosedFrame& frame, const Detector& detector,
                                 const std::string& query, double score) {
    const auto detection = detector.detect(frame.appearance, query);
    if (!detection) return QueryResult::not_found();
    const auto position = localize_detection(frame, detection->mask);
    if (!position) return QueryResult::not_found();
    return QueryResult::at(*position, frame.frame_id, score);
}

std::vector<std::shared_ptr<const PosedFrame>> live_chronological(const MapSnapshot& snapshot,
                                                                  const FrameStore& store,
                                                                  bool filter) {
    std::vector<std::shared_ptr<const PosedFrame>> frames = store.chronological();
    if (!filter) return frames;
    std::vector<std::shared_ptr<const PosedFrame>> out;
    out.reserve(frames.size());
    for (auto& frame : frames)
        if (snapshot.image_refcounts.count(frame->frame_id)) out.push_back(std::move(frame));
    return out;
}

QueryResult answer_over_images(const MllmPrompt& built, MllmClient& client,
                               const Detector& detector, const std::string& query,
                               const std::vector<double>* scores) {
    if (built.images.empty()) return QueryResult::not_found();
    const MllmAnswer answer = client.answer(built.prompt, built.images);
    if (!answer.index) return QueryResult::not_found();
    if (*answer.index < 1 || *answer.index > static_cast<int>(built.images.size()))
        throw MalformedAnswerError("mLLM answered index " + std::to_string(*answer.index) + " of " +
                                   std::to_string(built.images.size()) + " images");
    const auto& frame = built.images[static_cast<size_t>(*answer.index - 1)];
    double score = 0.0;
    if (scores) {
        score = (*scores)[static_cast<size_t>(*answer.index - 1)];
    } else {
        const auto detection = detector.detect(frame->appearance, query);
        if (!detection) return QueryResult::not_found();
        score = detection->confidence;
    }
    return confirm_and_localize(*frame, detector, query, score);
}

}  // namespace

QueryResult vlm_query(const MapSnapshot& snapshot, const FrameStore& store,
                      const TextEmbedder& embedder, const Detector& detector,
                      const std::string& query, const QueryConfig& config) {
    config.validate();
    const Eigen::VectorXf feature = embedder.embed_text(query);
    const auto best = best_voxel(snapshot, feature);
    if (!best) return QueryResult::not_found();
    if (config.use_similarity_threshold && best->score < config.similarity_threshold)
        return QueryResult::not_found();
    const VoxelRecord* record = snapshot.find(best->key);
    if (!record) throw InternalError("best voxel vanished from snapshot");
    if (!config.use_detector_check)
        return QueryResult::at(record->centroid, record->image_id, best->score);
    const auto frame = fetch_frame(store, record->image_id);
    return confirm_and_localize(*frame, detector, query, best->score);
}

QueryResult mllm_query(const MapSnapshot& snapshot, const FrameStore& store, MllmClient& client,
                       const Detector& detector, const std::string& query,
                       const QueryConfig& config) {
    config.validate();
    const auto frames = live_chronological(snapshot, store, config.use_image_filter);
    const MllmPrompt built = build_mllm_prompt(frames, query, config);
    return answer_over_images(built, client, detector, query, nullptr);
}

QueryResult hybrid_query(const MapSnapshot& snapshot, const FrameStore& store, MllmClient& client,
                         const TextEmbedder& embedder, const Detector& detector,
                         const std::string& query, const QueryConfig& config) {
    config.validate();
    const Eigen::VectorXf feature = embedder.embed_text(query);
    const std::vector<RankedImage> candidates = top_k_candidates(snapshot, feature, config);
    if (candidates.empty()) return QueryResult::not_found();

    // Chronological order for the prompt; frame ids are monotone in time.
    std::vector<RankedImage> by_time = candidates;
    std::sort(by_time.begin(), by_time.end(),
              [](const RankedImage& a, const RankedImage& b) { return a.image_id < b.image_id; });
    MllmPrompt built;
    std::vector<double> scores;
    for (const RankedImage& r : by_time) {
        built.images.push_back(fetch_frame(store, r.image_id));
        scores.push_back(r.score);
    }
    built.prompt = render_prompt(built.images.size(), query);
    return answer_over_images(built, client, detector, query, &scores);
}

}  // namespace voxelmem
