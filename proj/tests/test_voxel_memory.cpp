#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include "test_util.hpp"
#include "voxelmem/errors.hpp"
#include "voxelmem/semantics.hpp"
#include "voxelmem/voxel_memory.hpp"

using namespace voxelmem;

namespace {

Eigen::VectorXf unit(int dim, int axis) {
    Eigen::VectorXf v = Eigen::VectorXf::Zero(dim);
    v[axis] = 1.0f;
    return v;
}

PointObservation obs(const Eigen::Vector3d& pos, const Eigen::VectorXf& f, double weight = 1.0,
                     double time = 1.0, int64_t image = 1) {
    return {pos, f, weight, time, image};
}

std::vector<serial::FlatVoxel> flatten(const MapSnapshot& snap) {
    std::vector<serial::FlatVoxel> out;
    snap.for_each([&](const VoxelEntry& e) {
        out.push_back({e.key.i, e.key.j, e.key.k, e.record.centroid.x(), e.record.centroid.y(),
                       e.record.centroid.z()});
    });
    return out;
}

}  // namespace

TEST_CASE("voxel keys floor toward -inf and centroids stay inside the cell") {
    CHECK(voxel_key_of({0.07, -0.01, 0.0}, 0.05) == VoxelKey{1, -1, 0});
    CHECK(voxel_key_of({-0.05, -0.051, 0.049}, 0.05) == VoxelKey{-1, -2, 0});

    VoxelMemory mem(0.05, 4);
    Rng rng(5);
    std::vector<PointObservation> batch;
    for (int n = 0; n < 200; ++n)
        batch.push_back(obs({rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)},
                            unit(4, n % 4), rng.uniform(0.5, 2.0)));
    mem.insert_points(batch);
    mem.snapshot()->for_each([&](const VoxelEntry& e) {
        const Eigen::Vector3d center = voxel_center(e.key, 0.05);
        CHECK((e.record.centroid - center).cwiseAbs().maxCoeff() <= 0.025 + 1e-9);
    });
}

TEST_CASE("insert into an empty voxel adopts the observation") {
    VoxelMemory mem(0.05, 3);
    const auto v = unit(3, 0);
    mem.insert_points(std::vector<PointObservation>{obs({0.01, 0.01, 0.01}, v, 1.0, 4.5, 42)});
    const auto snap = mem.snapshot();
    REQUIRE(snap->cell_count == 1);
    const VoxelRecord* rec = snap->find({0, 0, 0});
    REQUIRE(rec != nullptr);
    CHECK(rec->count == 1.0);
    CHECK(rec->feature == v);
    CHECK(rec->last_seen == 4.5);
    CHECK(rec->image_id == 42);
}

TEST_CASE("equal-weight insertions average their features") {
    VoxelMemory mem(0.05, 2);
    const auto v1 = unit(2, 0), v2 = unit(2, 1);
    mem.insert_points(std::vector<PointObservation>{obs({0.01, 0.01, 0.01}, v1)});
    mem.insert_points(std::vector<PointObservation>{obs({0.02, 0.02, 0.02}, v2, 1.0, 2.0, 2)});
    const VoxelRecord* rec = mem.snapshot()->find({0, 0, 0});
    REQUIRE(rec != nullptr);
    CHECK(rec->count == 2.0);
    CHECK(rec->feature[0] == doctest::Approx(0.5));
    CHECK(rec->feature[1] == doctest::Approx(0.5));
    CHECK(rec->image_id == 2);
}

TEST_CASE("aggregation matches the recomputed weighted mean") {
    Rng rng(11);
    VoxelMemory mem(0.05, 8);
    std::vector<PointObservation> batch;
    std::vector<std::vector<float>> raw;
    std::vector<double> weights;
    for (int n = 0; n < 10; ++n) {
        Eigen::VectorXf f(8);
        for (int d = 0; d < 8; ++d) f[d] = static_cast<float>(rng.gaussian());
        const double w = rng.uniform(0.1, 3.0);
        batch.push_back(obs({0.012, 0.021, 0.017}, f, w, 1.0 + n, 10 + n));
        raw.push_back({f.data(), f.data() + 8});
        weights.push_back(w);
    }
    mem.insert_points(batch);
    const VoxelRecord* rec = mem.snapshot()->find({0, 0, 0});
    REQUIRE(rec != nullptr);
    const auto expected = serial::weighted_mean(raw, weights);
    CHECK(rec->count == expected.total_weight);  // exact: same summation order
    for (int d = 0; d < 8; ++d)
        CHECK(std::abs(rec->feature[d] - expected.mean[d]) <= 1e-6);
    CHECK(rec->image_id == 19);
    CHECK(rec->last_seen == 10.0);
}

TEST_CASE("batch aggregation is order-insensitive within tolerance") {
    Rng rng(23);
    std::vector<PointObservation> batch;
    for (int n = 0; n < 64; ++n) {
        Eigen::VectorXf f(6);
        for (int d = 0; d < 6; ++d) f[d] = static_cast<float>(rng.gaussian());
        batch.push_back(obs({rng.uniform(0, 0.3), rng.uniform(0, 0.3), rng.uniform(0, 0.3)}, f,
                            rng.uniform(0.1, 2.0), 1.0, 1));
    }
    VoxelMemory forward(0.05, 6), backward(0.05, 6);
    forward.insert_points(batch);
    std::reverse(batch.begin(), batch.end());
    backward.insert_points(batch);
    REQUIRE(forward.cell_count() == backward.cell_count());
    forward.snapshot()->for_each([&](const VoxelEntry& e) {
        const VoxelRecord* other = backward.snapshot()->find(e.key);
        REQUIRE(other != nullptr);
        CHECK(e.record.count == doctest::Approx(other->count).epsilon(1e-12));
        for (int d = 0; d < 6; ++d)
            CHECK(std::abs(e.record.feature[d] - other->feature[d]) <= 1e-6);
    });
}

TEST_CASE("feature dimension mismatch is a structural error") {
    VoxelMemory mem(0.05, 4);
    CHECK_THROWS_AS(mem.insert_points(std::vector<PointObservation>{obs({0, 0, 0}, unit(3, 0))}),
                    StructuralError);
}

namespace {

PosedFrame removal_frame(float surface_depth) {
    PosedFrame frame;
    frame.frame_id = 9;
    frame.timestamp = 5.0;
    frame.intrinsics = {100.0, 100.0, 50.0, 50.0, 100, 100};
    frame.depth.height = 100;
    frame.depth.width = 100;
    frame.depth.values.assign(100 * 100, surface_depth);
    return frame;
}

VoxelMemory memory_with_voxel_at(const Eigen::Vector3d& pos, int dim = 2) {
    VoxelMemory mem(0.05, dim);
    mem.insert_points(std::vector<PointObservation>{obs(pos, unit(dim, 0))});
    return mem;
}

}  // namespace

TEST_CASE("frustum removal on the principal ray") {
    auto mem = memory_with_voxel_at({0.0126, 0.0126, 1.0126});  // centroid ~ (0.0126, ..., 1.0126)
    const auto removed = mem.remove_stale(removal_frame(1.5f), 0.05);
    CHECK(removed.removed.size() == 1);
    CHECK(mem.cell_count() == 0);
}

TEST_CASE("voxels beyond the depth cap survive") {
    auto mem = memory_with_voxel_at({0.01, 0.01, 2.51});
    const auto removed = mem.remove_stale(removal_frame(3.0f), 0.05);
    CHECK(removed.removed.empty());
    CHECK(mem.cell_count() == 1);
}

TEST_CASE("voxels projecting outside the image survive") {
    // Behind-the-principal-point placement lands far off-image.
    auto mem = memory_with_voxel_at({-3.0, 0.01, 1.0});
    CHECK(mem.remove_stale(removal_frame(1.5f), 0.05).removed.empty());
    // Behind the camera as well.
    auto behind = memory_with_voxel_at({0.01, 0.01, -1.0});
    CHECK(behind.remove_stale(removal_frame(1.5f), 0.05).removed.empty());
}

TEST_CASE("invalid observed depth never removes") {
    auto mem = memory_with_voxel_at({0.01, 0.01, 1.0});
    CHECK(mem.remove_stale(removal_frame(0.0f), 0.05).removed.empty());
    CHECK(mem.cell_count() == 1);
}

TEST_CASE("removal matches the brute-force scan on randomized scenes") {
    Rng rng(301);
    for (int trial = 0; trial < 12; ++trial) {
        VoxelMemory mem(0.05, 2);
        std::vector<PointObservation> batch;
        const int n_points = 2000 + static_cast<int>(rng.next_u64() % 2000);
        for (int n = 0; n < n_points; ++n)
            batch.push_back(obs({rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5),
                                 rng.uniform(-2.5, 2.5)},
                                unit(2, n % 2), 1.0, 1.0, 1));
        mem.insert_points(batch);

        const auto intr = test::test_intrinsics();
        for (int f = 0; f < 5; ++f) {
            PosedFrame frame;
            frame.frame_id = 2 + f;
            frame.timestamp = 2.0 + f;
            frame.intrinsics = intr;
            frame.pose = test::random_pose(rng, 2.0);
            frame.depth = DepthImage::zeros(intr.height, intr.width);
            for (auto& d : frame.depth.values)
                if (rng.uniform() < 0.8)
                    d = static_cast<float>(rng.uniform(0.2, 3.0));

            const auto before = mem.snapshot();
            const auto expected =
                serial::frustum_removal(test::to_serial(intr, frame.pose), frame.depth.values,
                                        flatten(*before), 0.05, 2.0);
            const auto result = mem.remove_stale(frame, 0.05);
            REQUIRE(result.removed.size() == expected.size());
            const auto flat = flatten(*before);
            std::set<VoxelKey> expected_keys, got_keys;
            for (size_t idx : expected)
                expected_keys.insert({flat[idx].i, flat[idx].j, flat[idx].k});
            for (const VoxelKey& key : result.removed) got_keys.insert(key);
            CHECK(expected_keys == got_keys);
            CHECK(mem.check_live_images_consistent());
        }
    }
}

TEST_CASE("ingest twice leaves the occupied cell set unchanged") {
    Scene scene = test::small_room();
    scene.objects.push_back(test::static_object("mug", {{1.0, 1.0, 0.0}, {1.2, 1.2, 0.2}}, 1));
    const Pose pose = Pose::from_yaw_pitch({0.6, 1.1, 0.4}, 0.0, -20.0 * M_PI / 180.0);
    const auto intr = test::test_intrinsics(120, 160);
    const PosedFrame frame = render_frame(scene, 0, pose, intr, 1, 1.0);

    StubLabelEmbedder embedder(8, 3);
    VoxelMemory mem(0.05, 8);
    mem.ingest_frame(frame, embedder.embed_frame(frame));
    std::set<VoxelKey> first;
    mem.snapshot()->for_each([&](const VoxelEntry& e) { first.insert(e.key); });
    REQUIRE(!first.empty());

    PosedFrame again = frame;
    again.frame_id = 2;
    again.timestamp = 2.0;
    mem.ingest_frame(again, embedder.embed_frame(again));
    std::set<VoxelKey> second;
    mem.snapshot()->for_each([&](const VoxelEntry& e) {
        second.insert(e.key);
        CHECK(e.record.image_id == 2);  // refreshed by the removal-then-insert order
    });
    CHECK(first == second);
    CHECK(mem.check_live_images_consistent());
}

TEST_CASE("an object removed from the scene vanishes from the map") {
    Scene scene = test::small_room(2);
    SceneObject box;
    box.label = "crate";
    box.placement = {AABox{{1.0, 1.0, 0.0}, {1.3, 1.3, 0.3}}, std::nullopt};
    scene.objects.push_back(box);

    const Pose pose = Pose::from_yaw_pitch({0.5, 1.15, 0.4}, 0.0, -25.0 * M_PI / 180.0);
    const auto intr = test::test_intrinsics(120, 160);
    StubLabelEmbedder embedder(8, 3);
    VoxelMemory mem(0.05, 8);

    const PosedFrame with_box = render_frame(scene, 0, pose, intr, 1, 1.0);
    mem.ingest_frame(with_box, embedder.embed_frame(with_box));
    const auto crate_vec = embedder.label_vector("crate");
    size_t crate_voxels = 0;
    mem.snapshot()->for_each([&](const VoxelEntry& e) {
        if (e.record.feature.dot(crate_vec) > 0.9f) ++crate_voxels;
    });
    REQUIRE(crate_voxels > 0);

    const PosedFrame without_box = render_frame(scene, 1, pose, intr, 2, 2.0);
    mem.ingest_frame(without_box, embedder.embed_frame(without_box));
    size_t survivors = 0;
    mem.snapshot()->for_each([&](const VoxelEntry& e) {
        if (e.record.feature.dot(crate_vec) > 0.9f) ++survivors;
    });
    CHECK(survivors == 0);
}

TEST_CASE("ingesting an all-invalid frame changes nothing") {
    VoxelMemory mem(0.05, 2);
    mem.insert_points(std::vector<PointObservation>{obs({0.3, 0.3, 0.3}, unit(2, 0))});
    PosedFrame frame = removal_frame(0.0f);
    mem.ingest_frame(frame, Eigen::MatrixXf(2, 0));
    CHECK(mem.cell_count() == 1);
}

TEST_CASE("ingest rejects features misaligned with the valid pixels") {
    VoxelMemory mem(0.05, 2);
    PosedFrame frame = removal_frame(1.0f);  // every pixel valid
    CHECK_THROWS_AS(mem.ingest_frame(frame, Eigen::MatrixXf(2, 5)), StructuralError);
}

TEST_CASE("prune_dead_images tracks exactly the referenced frames") {
    CHECK(VoxelMemory(0.05, 2).prune_dead_images().empty());

    // Two frames of disjoint regions: both live.
    VoxelMemory disjoint(0.05, 2);
    disjoint.insert_points(std::vector<PointObservation>{obs({0.0, 0, 0}, unit(2, 0), 1, 1, 1)});
    disjoint.insert_points(std::vector<PointObservation>{obs({1.0, 0, 0}, unit(2, 0), 1, 2, 2)});
    CHECK(disjoint.prune_dead_images() == std::set<int64_t>{1, 2});

    // Second frame overwrites every voxel of the first: only it stays live.
    VoxelMemory overlap(0.05, 2);
    overlap.insert_points(std::vector<PointObservation>{obs({0.0, 0, 0}, unit(2, 0), 1, 1, 1)});
    overlap.insert_points(std::vector<PointObservation>{obs({0.01, 0, 0}, unit(2, 0), 1, 2, 2)});
    CHECK(overlap.prune_dead_images() == std::set<int64_t>{2});
    CHECK(overlap.check_live_images_consistent());
}

TEST_CASE("snapshots are isolated from later ingests") {
    VoxelMemory mem(0.05, 2);
    mem.insert_points(std::vector<PointObservation>{obs({0, 0, 0}, unit(2, 0), 1, 1, 1)});
    const auto before = mem.snapshot();
    mem.insert_points(std::vector<PointObservation>{obs({1, 1, 1}, unit(2, 1), 1, 2, 2)});
    CHECK(before->cell_count == 1);
    CHECK(mem.snapshot()->cell_count == 2);
}

TEST_CASE("snapshots stay coherent under a concurrent writer") {
    VoxelMemory mem(0.05, 4);
    std::atomic<bool> done{false};
    std::atomic<int> violations{0};

    std::thread writer([&] {
        Rng rng(71);
        for (int frame = 0; frame < 60; ++frame) {
            std::vector<PointObservation> batch;
            for (int n = 0; n < 200; ++n)
                batch.push_back(obs({rng.uniform(0, 2), rng.uniform(0, 2), rng.uniform(0, 0.5)},
                                    unit(4, n % 4), 1.0, frame, frame));
            mem.insert_points(batch);
        }
        done = true;
    });
    std::thread reader([&] {
        while (!done) {
            const auto snap = mem.snapshot();
            // A coherent snapshot: refcounts match its own cells exactly.
            std::map<int64_t, int64_t> recount;
            size_t cells = 0;
            snap->for_each([&](const VoxelEntry& e) {
                ++recount[e.record.image_id];
                ++cells;
            });
            if (recount != snap->image_refcounts || cells != snap->cell_count) ++violations;
        }
    });
    writer.join();
    reader.join();
    CHECK(violations == 0);
    CHECK(mem.check_live_images_consistent());
}

TEST_CASE("persistence round trip is byte-identical") {
    namespace fs = std::filesystem;
    Rng rng(400);
    VoxelMemory mem(0.04, 16);
    std::vector<PointObservation> batch;
    for (int n = 0; n < 5000; ++n) {
        Eigen::VectorXf f(16);
        for (int d = 0; d < 16; ++d) f[d] = static_cast<float>(rng.gaussian());
        batch.push_back(obs({rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(0, 1)}, f,
                            rng.uniform(0.2, 2.0), rng.uniform(0, 50), 1 + (n % 7)));
    }
    mem.insert_points(batch);

    const fs::path dir = fs::temp_directory_path() / "voxelmem_persist_test";
    fs::create_directories(dir);
    const fs::path first = dir / "a.vxm", second = dir / "b.vxm";
    mem.save(first);
    VoxelMemory loaded = VoxelMemory::load(first);
    CHECK(loaded.cell_count() == mem.cell_count());
    CHECK(loaded.voxel_size() == mem.voxel_size());
    CHECK(loaded.check_live_images_consistent());
    loaded.save(second);

    std::ifstream a(first, std::ios::binary), b(second, std::ios::binary);
    const std::string bytes_a((std::istreambuf_iterator<char>(a)), {});
    const std::string bytes_b((std::istreambuf_iterator<char>(b)), {});
    REQUIRE(!bytes_a.empty());
    CHECK(bytes_a == bytes_b);

    SUBCASE("corrupt and truncated files are data errors") {
        const fs::path bad = dir / "bad.vxm";
        std::ofstream out(bad, std::ios::binary);
        out << "VXMMgarbage";
        out.close();
        CHECK_THROWS_AS(VoxelMemory::load(bad), DataError);
        const fs::path wrong = dir / "wrong.vxm";
        std::ofstream w(wrong, std::ios::binary);
        w << "NOPE";
        w.close();
        CHECK_THROWS_AS(VoxelMemory::load(wrong), DataError);
    }
}
