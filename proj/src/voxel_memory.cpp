#include "voxelmem/voxel_memory.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>

#include "voxelmem/errors.hpp"

namespace voxelmem {

namespace {

struct EntryKeyLess {
    bool operator()(const VoxelEntry& e, VoxelKey k) const { return e.key < k; }
};

const VoxelRecord* find_in_block(const VoxelBlock& block, VoxelKey key) {
    auto it = std::lower_bound(block.entries.begin(), block.entries.end(), key, EntryKeyLess{});
    if (it != block.entries.end() && it->key == key) return &it->record;
    return nullptr;
}

}  // namespace

const VoxelRecord* MapSnapshot::find(VoxelKey key) const {
    const BlockKey bk = block_key_of(key);
    auto it = std::lower_bound(block_keys.begin(), block_keys.end(), bk);
    if (it == block_keys.end() || *it != bk) return nullptr;
    return find_in_block(*blocks[static_cast<size_t>(it - block_keys.begin())], key);
}

std::set<int64_t> MapSnapshot::live_images() const {
    std::set<int64_t> out;
    for (const auto& [id, n] : image_refcounts) out.insert(id);
    return out;
}

VoxelMemory::VoxelMemory(double voxel_size, int feature_dim) {
    if (!(voxel_size > 0.0)) throw StructuralError("voxel_size must be positive");
    if (feature_dim <= 0) throw StructuralError("feature_dim must be positive");
    auto snap = std::make_shared<MapSnapshot>();
    snap->voxel_size = voxel_size;
    snap->feature_dim = feature_dim;
    current_ = std::move(snap);
}

VoxelMemory::VoxelMemory(std::shared_ptr<const MapSnapshot> snap) : current_(std::move(snap)) {}

std::shared_ptr<const MapSnapshot> VoxelMemory::snapshot() const {
    std::lock_guard lock(mutex_);
    return current_;
}

void VoxelMemory::publish(std::shared_ptr<const MapSnapshot> next) {
    std::lock_guard lock(mutex_);
    current_ = std::move(next);
}

void VoxelMemory::insert_points(std::span<const PointObservation> observations) {
    const int dim = feature_dim();
    ObservationBatch batch;
    batch.positions.reserve(observations.size());
    batch.features.resize(dim, static_cast<Eigen::Index>(observations.size()));
    for (size_t n = 0; n < observations.size(); ++n) {
        const PointObservation& obs = observations[n];
        if (obs.feature.size() != dim)
            throw StructuralError("insert_points: feature dimension mismatch");
        if (!(obs.weight > 0.0)) throw StructuralError("insert_points: weight must be positive");
        batch.positions.push_back(obs.position);
        batch.features.col(static_cast<Eigen::Index>(n)) = obs.feature;
        batch.weights.push_back(obs.weight);
        batch.times.push_back(obs.time);
        batch.image_ids.push_back(obs.image_id);
    }
    insert_batch(batch);
}

void VoxelMemory::insert_batch(const ObservationBatch& batch) {
    auto cur = snapshot();
    if (batch.size() == 0) return;
    if (batch.features.rows() != cur->feature_dim)
        throw StructuralError("insert_batch: feature dimension mismatch");
    const double vs = cur->voxel_size;
    const size_t n_obs = batch.size();

    // Group observations by (block, voxel); stable so each voxel sees its
    // contributions in input order, which keeps the aggregation deterministic
    // regardless of thread count.
    std::vector<VoxelKey> keys(n_obs);
    std::vector<uint32_t> order(n_obs);
#pragma omp parallel for schedule(static)
    for (long n = 0; n < static_cast<long>(n_obs); ++n) {
        keys[n] = voxel_key_of(batch.positions[n], vs);
        order[n] = static_cast<uint32_t>(n);
    }
    std::stable_sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
        const BlockKey ba = block_key_of(keys[a]), bb = block_key_of(keys[b]);
        if (ba != bb) return ba < bb;
        return keys[a] < keys[b];
    });

    struct VoxelGroup {
        VoxelKey key;
        size_t begin, end;  // range in `order`
    };
    struct BlockGroup {
        BlockKey key;
        std::vector<VoxelGroup> voxels;
    };
    std::vector<BlockGroup> block_groups;
    for (size_t at = 0; at < n_obs;) {
        const VoxelKey vk = keys[order[at]];
        size_t end = at + 1;
        while (end < n_obs && keys[order[end]] == vk) ++end;
        const BlockKey bk = block_key_of(vk);
        if (block_groups.empty() || block_groups.back().key != bk)
            block_groups.push_back({bk, {}});
        block_groups.back().voxels.push_back({vk, at, end});
        at = end;
    }

    auto next = std::make_shared<MapSnapshot>(*cur);
    std::vector<std::shared_ptr<const VoxelBlock>> rebuilt(block_groups.size());
    std::vector<std::vector<std::pair<int64_t, int64_t>>> refcount_deltas(block_groups.size());
    std::vector<long> cell_deltas(block_groups.size(), 0);

#pragma omp parallel for schedule(dynamic)
    for (long g = 0; g < static_cast<long>(block_groups.size()); ++g) {
        const BlockGroup& bg = block_groups[g];
        auto block = std::make_shared<VoxelBlock>();
        auto it = std::lower_bound(cur->block_keys.begin(), cur->block_keys.end(), bg.key);
        if (it != cur->block_keys.end() && *it == bg.key)
            block->entries = cur->blocks[static_cast<size_t>(it - cur->block_keys.begin())]->entries;

        for (const VoxelGroup& vg : bg.voxels) {
            // Batch aggregate in input order, accumulated in double.
            double total_w = 0.0, latest_time = -std::numeric_limits<double>::infinity();
            int64_t latest_image = 0;
            Eigen::VectorXd feat_sum = Eigen::VectorXd::Zero(cur->feature_dim);
            Eigen::Vector3d pos_sum = Eigen::Vector3d::Zero();
            for (size_t at = vg.begin; at < vg.end; ++at) {
                const uint32_t n = order[at];
                const double w = batch.weights[n];
                total_w += w;
                feat_sum += w * batch.features.col(n).cast<double>();
                pos_sum += w * batch.positions[n];
                if (batch.times[n] >= latest_time) {
                    latest_time = batch.times[n];
                    latest_image = batch.image_ids[n];
                }
            }
            auto ins = std::lower_bound(block->entries.begin(), block->entries.end(), vg.key,
                                        EntryKeyLess{});
            if (ins != block->entries.end() && ins->key == vg.key) {
                VoxelRecord& rec = ins->record;
                refcount_deltas[g].push_back({rec.image_id, -1});
                const double c_old = rec.count, c_new = c_old + total_w;
                rec.feature = ((c_old * rec.feature.cast<double>() + feat_sum) / c_new).cast<float>();
                rec.centroid = (c_old * rec.centroid + pos_sum) / c_new;
                rec.count = c_new;
                rec.last_seen = latest_time;
                rec.image_id = latest_image;
                refcount_deltas[g].push_back({latest_image, +1});
            } else {
                VoxelRecord rec;
                rec.count = total_w;
                rec.feature = (feat_sum / total_w).cast<float>();
                rec.centroid = pos_sum / total_w;
                rec.last_seen = latest_time;
                rec.image_id = latest_image;
                block->entries.insert(ins, VoxelEntry{vg.key, std::move(rec)});
                refcount_deltas[g].push_back({latest_image, +1});
                ++cell_deltas[g];
            }
        }
        rebuilt[g] = std::move(block);
    }

    // Merge rebuilt blocks into the sorted block list.
    std::vector<BlockKey> merged_keys;
    std::vector<std::shared_ptr<const VoxelBlock>> merged_blocks;
    merged_keys.reserve(cur->block_keys.size() + block_groups.size());
    merged_blocks.reserve(merged_keys.capacity());
    size_t a = 0, b = 0;
    while (a < cur->block_keys.size() || b < block_groups.size()) {
        if (b == block_groups.size() ||
            (a < cur->block_keys.size() && cur->block_keys[a] < block_groups[b].key)) {
            merged_keys.push_back(cur->block_keys[a]);
            merged_blocks.push_back(cur->blocks[a]);
            ++a;
        } else {
            if (a < cur->block_keys.size() && cur->block_keys[a] == block_groups[b].key) ++a;
            merged_keys.push_back(block_groups[b].key);
            merged_blocks.push_back(rebuilt[b]);
            ++b;
        }
    }
    next->block_keys = std::move(merged_keys);
    next->blocks = std::move(merged_blocks);
    for (size_t g = 0; g < block_groups.size(); ++g) {
        next->cell_count += static_cast<size_t>(cell_deltas[g]);
        for (const auto& [id, delta] : refcount_deltas[g]) {
            auto [it, inserted] = next->image_refcounts.try_emplace(id, 0);
            it->second += delta;
            if (it->second == 0) next->image_refcounts.erase(it);
        }
    }
    publish(std::move(next));
}

RemovalResult VoxelMemory::remove_stale(const PosedFrame& frame, double epsilon, double max_depth) {
    auto cur = snapshot();
    RemovalResult result;
    if (cur->cell_count == 0) return result;
    if (frame.depth.height != frame.intrinsics.height || frame.depth.width != frame.intrinsics.width)
        throw StructuralError("remove_stale: depth dimensions do not match intrinsics");

    const double vs = cur->voxel_size;
    const double block_extent = vs * (1 << kBlockShift);
    const Eigen::Vector3d z_dir = frame.pose.rotation.col(2);  // camera z as a world direction
    const double z_base = -z_dir.dot(frame.pose.translation);

    const size_t n_blocks = cur->blocks.size();
    std::vector<std::vector<uint32_t>> removed_idx(n_blocks);
    std::vector<uint8_t> touched(n_blocks, 0);

#pragma omp parallel for schedule(dynamic)
    for (long bi = 0; bi < static_cast<long>(n_blocks); ++bi) {
        const BlockKey bk = cur->block_keys[bi];
        // Conservative cull: camera-frame z range of the block AABB.
        const Eigen::Vector3d lo(bk.i * block_extent, bk.j * block_extent, bk.k * block_extent);
        double zmin = z_base, zmax = z_base;
        for (int axis = 0; axis < 3; ++axis) {
            const double d = z_dir[axis];
            if (d >= 0.0) {
                zmin += d * lo[axis];
                zmax += d * (lo[axis] + block_extent);
            } else {
                zmin += d * (lo[axis] + block_extent);
                zmax += d * lo[axis];
            }
        }
        if (zmax <= 0.0 || zmin >= max_depth) continue;

        const VoxelBlock& block = *cur->blocks[bi];
        for (uint32_t e = 0; e < block.entries.size(); ++e) {
            const PixelProjection proj =
                project(block.entries[e].record.centroid, frame.intrinsics, frame.pose);
            if (proj.depth <= 0.0 || proj.depth >= max_depth) continue;
            int r = 0, c = 0;
            if (!pixel_in_image(proj.row, proj.col, frame.intrinsics, &r, &c)) continue;
            const double observed = frame.depth.at(r, c);
            if (observed <= 0.0) continue;  // invalid depth never removes
            if (proj.depth < std::min(max_depth, observed + epsilon)) {
                removed_idx[bi].push_back(e);
                touched[bi] = 1;
            }
        }
    }

    auto next = std::make_shared<MapSnapshot>(*cur);
    std::vector<BlockKey> keys_out;
    std::vector<std::shared_ptr<const VoxelBlock>> blocks_out;
    keys_out.reserve(n_blocks);
    blocks_out.reserve(n_blocks);
    for (size_t bi = 0; bi < n_blocks; ++bi) {
        if (!touched[bi]) {
            keys_out.push_back(cur->block_keys[bi]);
            blocks_out.push_back(cur->blocks[bi]);
            continue;
        }
        const VoxelBlock& old_block = *cur->blocks[bi];
        auto block = std::make_shared<VoxelBlock>();
        block->entries.reserve(old_block.entries.size() - removed_idx[bi].size());
        size_t next_removed = 0;
        for (uint32_t e = 0; e < old_block.entries.size(); ++e) {
            if (next_removed < removed_idx[bi].size() && removed_idx[bi][next_removed] == e) {
                const VoxelEntry& entry = old_block.entries[e];
                result.removed.push_back(entry.key);
                auto it = next->image_refcounts.find(entry.record.image_id);
                if (--it->second == 0) next->image_refcounts.erase(it);
                --next->cell_count;
                ++next_removed;
            } else {
                block->entries.push_back(old_block.entries[e]);
            }
        }
        if (!block->entries.empty()) {
            keys_out.push_back(cur->block_keys[bi]);
            blocks_out.push_back(std::move(block));
        }
    }
    next->block_keys = std::move(keys_out);
    next->blocks = std::move(blocks_out);
    publish(std::move(next));
    return result;
}

void VoxelMemory::ingest_frame(const PosedFrame& frame, const Eigen::MatrixXf& features,
                               const IngestOptions& options) {
    if (options.enable_removal) remove_stale(frame, options.epsilon, options.max_depth);
    const std::vector<BackprojectedPoint> points = backproject(frame, options.max_depth);
    if (features.cols() != static_cast<Eigen::Index>(points.size()))
        throw StructuralError("ingest_frame: features not aligned with valid depth pixels");
    if (points.empty()) return;
    ObservationBatch batch;
    batch.positions.reserve(points.size());
    batch.features = features;
    batch.weights.assign(points.size(), 1.0);
    batch.times.assign(points.size(), frame.timestamp);
    batch.image_ids.assign(points.size(), frame.frame_id);
    for (const auto& p : points) batch.positions.push_back(p.world);
    insert_batch(batch);
}

bool VoxelMemory::check_live_images_consistent() const {
    auto cur = snapshot();
    std::map<int64_t, int64_t> recount;
    size_t cells = 0;
    cur->for_each([&](const VoxelEntry& entry) {
        ++recount[entry.record.image_id];
        ++cells;
    });
    return recount == cur->image_refcounts && cells == cur->cell_count;
}

// ---- persistence ------------------------------------------------------------
// Layout (little-endian), documented in docs/formats.md:
//   "VXMM" | u8 version | u8 flags | u16 reserved
//   f64 voxel_size | u32 feature_dim | u32 reserved | u64 cell_count
//   cells sorted by (i, j, k):
//     i32 i, j, k | f64 count | f64 last_seen | i64 image_id | f64 centroid[3] | f32 feature[D]
//   u64 image_count | i64 image ids ascending

namespace {

constexpr char kMagic[4] = {'V', 'X', 'M', 'M'};
constexpr uint8_t kFormatVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("truncated map file: " + path.string());
    return v;
}

}  // namespace

void VoxelMemory::save(const std::filesystem::path& path) const {
    auto cur = snapshot();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    out.write(kMagic, 4);
    put<uint8_t>(out, kFormatVersion);
    put<uint8_t>(out, 0);
    put<uint16_t>(out, 0);
    put<double>(out, cur->voxel_size);
    put<uint32_t>(out, static_cast<uint32_t>(cur->feature_dim));
    put<uint32_t>(out, 0);
    put<uint64_t>(out, cur->cell_count);

    std::vector<const VoxelEntry*> entries;
    entries.reserve(cur->cell_count);
    cur->for_each([&](const VoxelEntry& entry) { entries.push_back(&entry); });
    std::sort(entries.begin(), entries.end(),
              [](const VoxelEntry* a, const VoxelEntry* b) { return a->key < b->key; });
    for (const VoxelEntry* entry : entries) {
        put<int32_t>(out, entry->key.i);
        put<int32_t>(out, entry->key.j);
        put<int32_t>(out, entry->key.k);
        put<double>(out, entry->record.count);
        put<double>(out, entry->record.last_seen);
        put<int64_t>(out, entry->record.image_id);
        for (int axis = 0; axis < 3; ++axis) put<double>(out, entry->record.centroid[axis]);
        out.write(reinterpret_cast<const char*>(entry->record.feature.data()),
                  static_cast<std::streamsize>(sizeof(float) * cur->feature_dim));
    }
    put<uint64_t>(out, static_cast<uint64_t>(cur->image_refcounts.size()));
    for (const auto& [id, n] : cur->image_refcounts) put<int64_t>(out, id);
    if (!out) throw DataError("short write: " + path.string());
}

VoxelMemory VoxelMemory::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path.string());
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("not a voxel map file: " + path.string());
    const auto version = get<uint8_t>(in, path);
    if (version != kFormatVersion)
        throw DataError("unsupported map version " + std::to_string(version) + ": " + path.string());
    get<uint8_t>(in, path);
    get<uint16_t>(in, path);
    auto snap = std::make_shared<MapSnapshot>();
    snap->voxel_size = get<double>(in, path);
    snap->feature_dim = static_cast<int>(get<uint32_t>(in, path));
    get<uint32_t>(in, path);
    const uint64_t cells = get<uint64_t>(in, path);
    if (!(snap->voxel_size > 0.0) || snap->feature_dim <= 0)
        throw DataError("corrupt map header: " + path.string());

    VoxelBlock* open_block = nullptr;
    BlockKey open_key{};
    std::vector<std::shared_ptr<VoxelBlock>> blocks;
    std::vector<BlockKey> block_keys;
    for (uint64_t n = 0; n < cells; ++n) {
        VoxelEntry entry;
        entry.key.i = get<int32_t>(in, path);
        entry.key.j = get<int32_t>(in, path);
        entry.key.k = get<int32_t>(in, path);
        entry.record.count = get<double>(in, path);
        entry.record.last_seen = get<double>(in, path);
        entry.record.image_id = get<int64_t>(in, path);
        for (int axis = 0; axis < 3; ++axis) entry.record.centroid[axis] = get<double>(in, path);
        entry.record.feature.resize(snap->feature_dim);
        in.read(reinterpret_cast<char*>(entry.record.feature.data()),
                static_cast<std::streamsize>(sizeof(float) * snap->feature_dim));
        if (!in) throw DataError("truncated map file: " + path.string());
        ++snap->image_refcounts[entry.record.image_id];
        const BlockKey bk = block_key_of(entry.key);
        if (open_block == nullptr || !(open_key == bk)) {
            auto it = std::lower_bound(block_keys.begin(), block_keys.end(), bk);
            const size_t pos = static_cast<size_t>(it - block_keys.begin());
            if (it != block_keys.end() && *it == bk) {
                open_block = blocks[pos].get();
            } else {
                block_keys.insert(it, bk);
                blocks.insert(blocks.begin() + static_cast<long>(pos), std::make_shared<VoxelBlock>());
                open_block = blocks[pos].get();
            }
            open_key = bk;
        }
        open_block->entries.push_back(std::move(entry));
    }
    for (auto& block : blocks)
        std::sort(block->entries.begin(), block->entries.end(),
                  [](const VoxelEntry& a, const VoxelEntry& b) { return a.key < b.key; });
    const uint64_t n_images = get<uint64_t>(in, path);
    for (uint64_t n = 0; n < n_images; ++n) {
        const int64_t id = get<int64_t>(in, path);
        if (snap->image_refcounts.find(id) == snap->image_refcounts.end())
            throw DataError("map live-image index does not match cells: " + path.string());
    }
    if (n_images != snap->image_refcounts.size())
        throw DataError("map live-image index does not match cells: " + path.string());
    snap->cell_count = cells;
    snap->block_keys = std::move(block_keys);
    snap->blocks.assign(blocks.begin(), blocks.end());
    return VoxelMemory(std::move(snap));
}

}  // namespace voxelmem
