#pragma once

#include <map>
#include <memory>
#include <set>
#include <vector>

#include "voxelmem/geometry.hpp"

namespace voxelmem {

// Keeps the frames the voxel map may still point to, keyed by frame id.
// Frame ids are monotone within a stream, so id order is time order.
class FrameStore {
public:
    void add(std::shared_ptr<const PosedFrame> frame) { frames_[frame->frame_id] = std::move(frame); }

    std::shared_ptr<const PosedFrame> get(int64_t frame_id) const {
        auto it = frames_.find(frame_id);
        return it == frames_.end() ? nullptr : it->second;
    }

    // Oldest first.
    std::vector<std::shared_ptr<const PosedFrame>> chronological() const {
        std::vector<std::shared_ptr<const PosedFrame>> out;
        out.reserve(frames_.size());
        for (const auto& [id, frame] : frames_) out.push_back(frame);
        return out;
    }

    // Drops every frame not in `live`; returns how many were dropped.
    size_t prune(const std::set<int64_t>& live) {
        size_t dropped = 0;
        for (auto it = frames_.begin(); it != frames_.end();) {
            if (live.count(it->first) == 0) {
                it = frames_.erase(it);
                ++dropped;
            } else {
                ++it;
            }
        }
        return dropped;
    }

    size_t size() const { return frames_.size(); }

private:
    std::map<int64_t, std::shared_ptr<const PosedFrame>> frames_;
};

}  // namespace voxelmem
