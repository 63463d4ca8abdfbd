#include "voxelmem/scene_script.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "voxelmem/errors.hpp"

namespace voxelmem {

namespace {

constexpr const char* kFormatName = "voxelmem-scene";
constexpr int kFormatVersion = 1;
constexpr double kDeg = M_PI / 180.0;

[[noreturn]] void fail_at_byte(const std::string& text, size_t byte, const std::string& origin,
                               const std::string& what) {
    size_t line = 1;
    for (size_t n = 0; n < std::min(byte, text.size()); ++n)
        if (text[n] == '\n') ++line;
    throw DataError(origin + ":" + std::to_string(line) + ": " + what);
}

AABox box_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 6)
        throw DataError("box must be [min_x, min_y, min_z, max_x, max_y, max_z]");
    AABox box;
    for (int axis = 0; axis < 3; ++axis) {
        box.min[axis] = j[static_cast<size_t>(axis)].get<double>();
        box.max[axis] = j[static_cast<size_t>(axis) + 3].get<double>();
    }
    return box;
}

std::vector<PoseStamped> expand_scan(const Eigen::Vector3d& pos, int yaws, double pitch_deg,
                                     double& clock, double dt) {
    std::vector<PoseStamped> out;
    for (int n = 0; n < yaws; ++n) {
        const double yaw = 2.0 * M_PI * n / yaws;
        out.push_back({clock, Pose::from_yaw_pitch(pos, yaw, pitch_deg * kDeg)});
        clock += dt;
    }
    return out;
}

}  // namespace

SceneScript parse_scene_script(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open scene script: " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_scene_script_text(buffer.str(), path.string());
}

SceneScript parse_scene_script_text(const std::string& text, const std::string& origin) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        fail_at_byte(text, e.byte, origin, e.what());
    }
    SceneScript script;
    try {
        if (doc.at("format").get<std::string>() != kFormatName)
            throw DataError("not a " + std::string(kFormatName) + " script");
        if (doc.at("version").get<int>() != kFormatVersion)
            throw DataError("unsupported scene script version");

        Scene& scene = script.scene;
        scene.seed = doc.value("seed", 0ull);
        scene.rounds = doc.value("rounds", 3);
        scene.depth_noise_sigma = doc.value("depth_noise_sigma", 0.0);
        const auto& floor = doc.at("floor");
        scene.floor_x = floor.at(0).get<double>();
        scene.floor_y = floor.at(1).get<double>();

        if (doc.contains("walls")) {
            const auto& walls = doc["walls"];
            const double h = walls.value("height", 0.8);
            const double w = walls.value("thickness", 0.15);
            const double o = walls.value("overlap", 0.03);
            const double x1 = scene.floor_x, y1 = scene.floor_y;
            scene.obstacles.push_back({{o - w, o - w, 0.0}, {o, y1 - o + w, h}});            // west
            scene.obstacles.push_back({{x1 - o, o - w, 0.0}, {x1 - o + w, y1 - o + w, h}});  // east
            scene.obstacles.push_back({{o, o - w, 0.0}, {x1 - o, o, h}});                    // south
            scene.obstacles.push_back({{o, y1 - o, 0.0}, {x1 - o, y1 - o + w, h}});          // north
        }
        for (const auto& ob : doc.value("obstacles", nlohmann::json::array()))
            scene.obstacles.push_back(box_from_json(ob.at("box")));

        for (const auto& obj : doc.value("objects", nlohmann::json::array())) {
            SceneObject object;
            object.label = obj.at("label").get<std::string>();
            const auto& placements = obj.at("placements");
            if (static_cast<int>(placements.size()) != scene.rounds)
                throw DataError("object '" + object.label + "' needs one placement per round");
            for (const auto& p : placements)
                object.placement.push_back(p.is_null() ? std::nullopt
                                                       : std::optional<AABox>(box_from_json(p)));
            scene.objects.push_back(std::move(object));
        }
        scene.validate();

        CameraIntrinsics& intr = script.intrinsics;
        intr = {50.0, 50.0, 80.0, 60.0, 120, 160};
        if (doc.contains("intrinsics")) {
            const auto& j = doc["intrinsics"];
            intr.fx = j.value("fx", intr.fx);
            intr.fy = j.value("fy", intr.fy);
            intr.cx = j.value("cx", intr.cx);
            intr.cy = j.value("cy", intr.cy);
            intr.width = j.value("width", intr.width);
            intr.height = j.value("height", intr.height);
        }
        intr.validate();

        script.epsilon_slack = doc.value("epsilon_slack", 0.01);
        const auto& traj = doc.at("trajectory");
        script.inter_round_gap = traj.value("inter_round_gap", 60.0);
        script.trajectory.intrinsics = intr;
        double clock = 0.0;
        for (const auto& round_entries : traj.at("rounds")) {
            std::vector<PoseStamped> poses;
            for (const auto& entry : round_entries) {
                if (entry.contains("pose")) {
                    const auto& p = entry["pose"];
                    const auto& pos = p.at("pos");
                    poses.push_back(
                        {clock, Pose::from_yaw_pitch(
                                    {pos.at(0).get<double>(), pos.at(1).get<double>(),
                                     pos.at(2).get<double>()},
                                    p.value("yaw_deg", 0.0) * kDeg, p.value("pitch_deg", 0.0) * kDeg)});
                    clock += p.value("dt", 0.25);
                } else if (entry.contains("scan")) {
                    const auto& s = entry["scan"];
                    const auto& pos = s.at("pos");
                    auto scan = expand_scan({pos.at(0).get<double>(), pos.at(1).get<double>(),
                                             pos.at(2).get<double>()},
                                            s.value("yaws", 6), s.value("pitch_deg", -45.0), clock,
                                            s.value("dt", 0.25));
                    poses.insert(poses.end(), scan.begin(), scan.end());
                } else if (entry.contains("path")) {
                    const auto& p = entry["path"];
                    const double z = p.value("z", 0.4);
                    for (const auto& pt : p.at("points")) {
                        auto scan = expand_scan({pt.at(0).get<double>(), pt.at(1).get<double>(), z},
                                                p.value("yaws", 6), p.value("pitch_deg", -45.0),
                                                clock, p.value("dt", 0.25));
                        poses.insert(poses.end(), scan.begin(), scan.end());
                    }
                } else {
                    throw DataError("trajectory entry must be one of pose/scan/path");
                }
            }
            if (poses.empty()) throw DataError("every round needs at least one trajectory pose");
            script.trajectory.per_round.push_back(std::move(poses));
            clock += script.inter_round_gap;
        }
        script.trajectory.validate(scene.rounds);

        for (const auto& q : doc.value("queries", nlohmann::json::array())) {
            QueryPlanEntry entry;
            entry.text = q.at("text").get<std::string>();
            entry.label = q.value("label", entry.text);
            entry.round = q.at("round").get<int>();
            const std::string kind = q.at("kind").get<std::string>();
            if (kind != "positive" && kind != "negative")
                throw DataError("query kind must be 'positive' or 'negative'");
            entry.positive = kind == "positive";
            entry.offset = q.value("offset", 1.0);
            if (entry.round < 0 || entry.round >= scene.rounds)
                throw DataError("query '" + entry.text + "' references round " +
                                std::to_string(entry.round) + " outside the script");
            if (!(entry.offset > 0.0) || entry.offset >= script.inter_round_gap)
                throw DataError("query offset must lie inside (0, inter_round_gap)");
            script.queries.push_back(std::move(entry));
        }

        if (doc.contains("explore")) {
            const auto& e = doc["explore"];
            if (e.contains("start"))
                script.explore.start =
                    Eigen::Vector2d(e["start"].at(0).get<double>(), e["start"].at(1).get<double>());
            script.explore.camera_height = e.value("camera_height", 0.4);
            script.explore.pitch_deg = e.value("pitch_deg", -45.0);
            script.explore.scan_yaws = e.value("scan_yaws", 6);
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(origin + ": " + e.what());
    }
    return script;
}

DatasetSummary generate_dataset(const SceneScript& script, const std::filesystem::path& out_dir,
                                const GenerateOptions& options) {
    Scene scene = script.scene;
    if (options.has_seed_override) scene.seed = options.seed_override;
    scene.validate();
    script.trajectory.validate(scene.rounds);

    // Render the whole trajectory; ids and timestamps follow script order.
    std::vector<PosedFrame> frames;
    std::vector<std::pair<double, double>> round_span(static_cast<size_t>(scene.rounds),
                                                      {0.0, 0.0});
    int64_t next_id = 0;
    for (int round = 0; round < scene.rounds; ++round) {
        const auto& poses = script.trajectory.per_round[static_cast<size_t>(round)];
        round_span[static_cast<size_t>(round)] = {poses.front().timestamp, poses.back().timestamp};
        for (const PoseStamped& ps : poses) {
            frames.push_back(
                render_frame(scene, round, ps.pose, script.intrinsics, next_id, ps.timestamp));
            ++next_id;
        }
    }

    auto table = scene.label_table();
    auto label_index = [&](const std::string& label) -> std::optional<uint16_t> {
        const auto it = std::find(table->begin(), table->end(), label);
        if (it == table->end()) return std::nullopt;
        return static_cast<uint16_t>(it - table->begin());
    };
    auto ingestible_pixels = [&](const PosedFrame& frame, uint16_t index) {
        size_t n = 0;
        for (size_t p = 0; p < frame.appearance.indices.size(); ++p)
            if (frame.appearance.indices[p] == index && frame.depth.values[p] > 0.0f &&
                frame.depth.values[p] <= 2.0f)
                ++n;
        return n;
    };
    auto placement_of = [&](const std::string& label, int round) -> const std::optional<AABox>* {
        for (const SceneObject& obj : scene.objects)
            if (obj.label == label) return &obj.placement[static_cast<size_t>(round)];
        return nullptr;
    };

    DatasetSummary summary;
    summary.rounds = scene.rounds;
    summary.frames = frames.size();

    std::vector<QueryAnnotation> annotations;
    for (const QueryPlanEntry& q : script.queries) {
        QueryAnnotation ann;
        ann.text = q.text;
        ann.round = q.round;
        ann.time = round_span[static_cast<size_t>(q.round)].second + q.offset;
        ann.positive = q.positive;
        const auto index = label_index(q.label);

        if (q.positive) {
            const auto gt = ground_truth_location(scene, q.round, q.label);
            if (!gt)
                throw DataError("positive query '" + q.text + "' targets '" + q.label +
                                "', absent in round " + std::to_string(q.round));
            // The object must actually have been rendered within ingest range
            // since its last move, or the query is unanswerable.
            size_t visible = 0;
            const std::optional<AABox>* current = placement_of(q.label, q.round);
            for (int rr = q.round; rr >= 0 && visible < static_cast<size_t>(options.min_visible_pixels);
                 --rr) {
                const std::optional<AABox>* past = placement_of(q.label, rr);
                if (!past || !*past ||
                    ((*past)->min.array() != (*current)->min.array()).any() ||
                    ((*past)->max.array() != (*current)->max.array()).any())
                    break;
                for (const PosedFrame& frame : frames)
                    if (frame.round == rr && frame.timestamp < ann.time)
                        visible += ingestible_pixels(frame, *index);
            }
            if (visible < static_cast<size_t>(options.min_visible_pixels))
                throw DataError("positive query '" + q.text + "' (round " + std::to_string(q.round) +
                                "): object rendered in only " + std::to_string(visible) +
                                " ingestible pixels, below the bar of " +
                                std::to_string(options.min_visible_pixels));
            ann.position = gt->first;
            ann.epsilon = gt->second + script.epsilon_slack;
            ++summary.positives;
        } else {
            const std::optional<AABox>* placed = placement_of(q.label, q.round);
            if (placed && *placed)
                throw DataError("negative query '" + q.text + "' targets '" + q.label +
                                "', which is placed in round " + std::to_string(q.round));
            bool observed_before = false;
            if (index)
                for (const PosedFrame& frame : frames)
                    if (frame.timestamp < ann.time && ingestible_pixels(frame, *index) > 0) {
                        observed_before = true;
                        break;
                    }
            ann.negative_kind = observed_before ? "b" : "a";
            if (observed_before)
                ++summary.negatives_removed;
            else
                ++summary.negatives_never_seen;
        }
        annotations.push_back(std::move(ann));
    }
    summary.queries = annotations.size();

    DatasetManifest manifest;
    manifest.rounds = scene.rounds;
    manifest.intrinsics = script.intrinsics;
    manifest.labels = *table;
    manifest.queries = std::move(annotations);
    for (const PosedFrame& frame : frames) {
        char name[64];
        std::snprintf(name, sizeof(name), "frames/%06lld", static_cast<long long>(frame.frame_id));
        FrameRecord rec;
        rec.frame_id = frame.frame_id;
        rec.timestamp = frame.timestamp;
        rec.round = frame.round;
        rec.depth_path = std::string(name) + "_depth.pgm";
        rec.labels_path = std::string(name) + "_labels.pgm";
        rec.pose = frame.pose;
        manifest.frames.push_back(std::move(rec));
    }
    write_dataset(out_dir, manifest, frames);
    return summary;
}

}  // namespace voxelmem
