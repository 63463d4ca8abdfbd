#include "voxelmem/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "voxelmem/errors.hpp"
#include "voxelmem/image_io.hpp"

namespace voxelmem {

namespace {

constexpr const char* kFormatName = "voxelmem-dataset";
constexpr int kFormatVersion = 1;

nlohmann::ordered_json pose_to_json(const Pose& pose) {
    nlohmann::ordered_json out;
    auto& rot = out["rotation"] = nlohmann::ordered_json::array();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) rot.push_back(pose.rotation(r, c));
    out["translation"] = {pose.translation.x(), pose.translation.y(), pose.translation.z()};
    return out;
}

Pose pose_from_json(const nlohmann::json& j) {
    Pose pose;
    const auto& rot = j.at("rotation");
    if (rot.size() != 9) throw DataError("pose rotation must have 9 entries");
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) pose.rotation(r, c) = rot[static_cast<size_t>(3 * r + c)];
    const auto& t = j.at("translation");
    if (t.size() != 3) throw DataError("pose translation must have 3 entries");
    for (int axis = 0; axis < 3; ++axis) pose.translation[axis] = t[static_cast<size_t>(axis)];
    return pose;
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const DatasetManifest& manifest,
                   const std::vector<PosedFrame>& frames) {
    if (manifest.frames.size() != frames.size())
        throw StructuralError("write_dataset: manifest frame records do not match frames");
    std::filesystem::create_directories(dir / "frames");

    for (size_t n = 0; n < frames.size(); ++n) {
        const PosedFrame& frame = frames[n];
        Pgm16 depth;
        depth.width = frame.depth.width;
        depth.height = frame.depth.height;
        depth.pixels.resize(frame.depth.values.size());
        for (size_t p = 0; p < depth.pixels.size(); ++p) {
            const double mm = std::round(static_cast<double>(frame.depth.values[p]) * 1000.0);
            depth.pixels[p] = static_cast<uint16_t>(std::clamp(mm, 0.0, 65535.0));
        }
        write_pgm16(dir / manifest.frames[n].depth_path, depth);

        Pgm16 labels;
        labels.width = frame.appearance.width;
        labels.height = frame.appearance.height;
        labels.pixels = frame.appearance.indices;
        write_pgm16(dir / manifest.frames[n].labels_path, labels);
    }

    nlohmann::ordered_json doc;
    doc["format"] = kFormatName;
    doc["version"] = kFormatVersion;
    doc["rounds"] = manifest.rounds;
    doc["intrinsics"] = {{"fx", manifest.intrinsics.fx},   {"fy", manifest.intrinsics.fy},
                         {"cx", manifest.intrinsics.cx},   {"cy", manifest.intrinsics.cy},
                         {"width", manifest.intrinsics.width}, {"height", manifest.intrinsics.height}};
    doc["labels"] = manifest.labels;
    doc["frames"] = nlohmann::ordered_json::array();
    for (const FrameRecord& rec : manifest.frames) {
        nlohmann::ordered_json f;
        f["id"] = rec.frame_id;
        f["t"] = rec.timestamp;
        f["round"] = rec.round;
        f["depth"] = rec.depth_path;
        f["labels"] = rec.labels_path;
        f["pose"] = pose_to_json(rec.pose);
        doc["frames"].push_back(std::move(f));
    }
    doc["queries"] = nlohmann::ordered_json::array();
    for (const QueryAnnotation& q : manifest.queries) {
        nlohmann::ordered_json entry;
        entry["text"] = q.text;
        entry["t"] = q.time;
        entry["round"] = q.round;
        entry["kind"] = q.positive ? "positive" : "negative";
        if (q.positive) {
            entry["position"] = {q.position.x(), q.position.y(), q.position.z()};
            entry["epsilon"] = q.epsilon;
        } else if (!q.negative_kind.empty()) {
            entry["negative_kind"] = q.negative_kind;
        }
        doc["queries"].push_back(std::move(entry));
    }
    std::ofstream out(dir / "manifest.json");
    if (!out) throw DataError("cannot write manifest under " + dir.string());
    out << doc.dump(2) << "\n";
}

Dataset Dataset::load(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw DataError("missing manifest: " + manifest_path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("unparseable manifest " + manifest_path.string() + ": " + e.what());
    }
    Dataset ds;
    ds.dir_ = dir;
    try {
        if (doc.at("format").get<std::string>() != kFormatName)
            throw DataError("not a " + std::string(kFormatName) + " manifest: " + manifest_path.string());
        const int version = doc.at("version").get<int>();
        if (version != kFormatVersion)
            throw DataError("unsupported dataset version " + std::to_string(version) + ": " +
                            manifest_path.string());
        ds.manifest_.version = version;
        ds.manifest_.rounds = doc.at("rounds").get<int>();
        const auto& intr = doc.at("intrinsics");
        ds.manifest_.intrinsics.fx = intr.at("fx").get<double>();
        ds.manifest_.intrinsics.fy = intr.at("fy").get<double>();
        ds.manifest_.intrinsics.cx = intr.at("cx").get<double>();
        ds.manifest_.intrinsics.cy = intr.at("cy").get<double>();
        ds.manifest_.intrinsics.height = intr.at("height").get<int>();
        ds.manifest_.intrinsics.width = intr.at("width").get<int>();
        ds.manifest_.intrinsics.validate();
        ds.manifest_.labels = doc.at("labels").get<std::vector<std::string>>();
        for (const auto& f : doc.at("frames")) {
            FrameRecord rec;
            rec.frame_id = f.at("id").get<int64_t>();
            rec.timestamp = f.at("t").get<double>();
            rec.round = f.at("round").get<int>();
            rec.depth_path = f.at("depth").get<std::string>();
            rec.labels_path = f.at("labels").get<std::string>();
            rec.pose = pose_from_json(f.at("pose"));
            rec.pose.validate();
            ds.manifest_.frames.push_back(std::move(rec));
        }
        for (const auto& q : doc.at("queries")) {
            QueryAnnotation ann;
            ann.text = q.at("text").get<std::string>();
            ann.time = q.at("t").get<double>();
            ann.round = q.value("round", 0);
            ann.positive = q.at("kind").get<std::string>() == "positive";
            if (ann.positive) {
                const auto& pos = q.at("position");
                ann.position = {pos.at(0).get<double>(), pos.at(1).get<double>(),
                                pos.at(2).get<double>()};
                ann.epsilon = q.at("epsilon").get<double>();
                if (!(ann.epsilon > 0.0))
                    throw DataError("positive query '" + ann.text + "' needs epsilon > 0");
            } else {
                ann.negative_kind = q.value("negative_kind", "");
            }
            ds.manifest_.queries.push_back(std::move(ann));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
    if (ds.manifest_.frames.empty()) throw DataError("dataset has no frames: " + dir.string());
    for (size_t n = 1; n < ds.manifest_.frames.size(); ++n)
        if (ds.manifest_.frames[n].timestamp < ds.manifest_.frames[n - 1].timestamp ||
            ds.manifest_.frames[n].frame_id <= ds.manifest_.frames[n - 1].frame_id)
            throw DataError("frames out of order at index " + std::to_string(n) + ": " + dir.string());
    const double first_ts = ds.manifest_.frames.front().timestamp;
    for (const QueryAnnotation& q : ds.manifest_.queries)
        if (q.time < first_ts)
            throw DataError("query '" + q.text + "' predates the first frame: " + dir.string());
    ds.table_ = std::make_shared<const std::vector<std::string>>(ds.manifest_.labels);
    return ds;
}

std::shared_ptr<const PosedFrame> Dataset::load_frame(size_t index) const {
    const FrameRecord& rec = manifest_.frames.at(index);
    auto frame = std::make_shared<PosedFrame>();
    frame->frame_id = rec.frame_id;
    frame->timestamp = rec.timestamp;
    frame->round = rec.round;
    frame->intrinsics = manifest_.intrinsics;
    frame->pose = rec.pose;

    const Pgm16 depth = read_pgm16(dir_ / rec.depth_path);
    if (depth.width != manifest_.intrinsics.width || depth.height != manifest_.intrinsics.height)
        throw DataError("depth image does not match intrinsics: " + rec.depth_path);
    frame->depth.width = depth.width;
    frame->depth.height = depth.height;
    frame->depth.values.resize(depth.pixels.size());
    for (size_t p = 0; p < depth.pixels.size(); ++p)
        frame->depth.values[p] = static_cast<float>(depth.pixels[p]) / 1000.0f;

    const Pgm16 labels = read_pgm16(dir_ / rec.labels_path);
    if (labels.width != manifest_.intrinsics.width || labels.height != manifest_.intrinsics.height)
        throw DataError("label image does not match intrinsics: " + rec.labels_path);
    for (uint16_t v : labels.pixels)
        if (v >= table_->size())
            throw DataError("label index out of table range in " + rec.labels_path);
    frame->appearance = LabelImage{labels.height, labels.width, labels.pixels, table_};
    return frame;
}

}  // namespace voxelmem
