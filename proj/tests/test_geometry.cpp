#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_util.hpp"
#include "voxelmem/errors.hpp"
#include "voxelmem/geometry.hpp"

using namespace voxelmem;

namespace {

PosedFrame frame_with_single_pixel(int row, int col, float depth) {
    PosedFrame frame;
    frame.intrinsics = {100.0, 100.0, 50.0, 50.0, 100, 100};
    frame.depth = DepthImage::zeros(100, 100);
    frame.depth.at(row, col) = depth;
    return frame;
}

}  // namespace

TEST_CASE("backproject principal-point ray") {
    const auto frame = frame_with_single_pixel(50, 50, 1.0f);
    const auto points = backproject(frame);
    REQUIRE(points.size() == 1);
    CHECK(points[0].row == 50);
    CHECK(points[0].col == 50);
    CHECK(points[0].world.isApprox(Eigen::Vector3d(0, 0, 1), 1e-12));
}

TEST_CASE("backproject drops pixels past the depth cap") {
    const auto frame = frame_with_single_pixel(50, 50, 2.5f);
    CHECK(backproject(frame).empty());
    // Exactly at the cap stays in.
    const auto at_cap = frame_with_single_pixel(10, 20, 2.0f);
    CHECK(backproject(at_cap).size() == 1);
}

TEST_CASE("backproject rejects mismatched dimensions") {
    auto frame = frame_with_single_pixel(50, 50, 1.0f);
    frame.depth = DepthImage::zeros(50, 100);
    CHECK_THROWS_AS(backproject(frame), StructuralError);
}

TEST_CASE("project basics") {
    const CameraIntrinsics intr{100.0, 100.0, 50.0, 50.0, 100, 100};
    const Pose identity;

    auto p = project({0, 0, 1}, intr, identity);
    CHECK(p.row == doctest::Approx(50.0));
    CHECK(p.col == doctest::Approx(50.0));
    CHECK(p.depth == doctest::Approx(1.0));

    // Behind the camera keeps its sign.
    CHECK(project({0, 0, -1}, intr, identity).depth == doctest::Approx(-1.0));

    Pose shifted;
    shifted.translation = {1, 0, 0};
    auto q = project({1, 0, 2}, intr, shifted);
    CHECK(q.row == doctest::Approx(50.0));
    CHECK(q.col == doctest::Approx(50.0));
    CHECK(q.depth == doctest::Approx(2.0));
}

TEST_CASE("project/backproject round trip over randomized frames") {
    Rng rng(101);
    const auto intr = test::test_intrinsics();
    for (int trial = 0; trial < 1000; ++trial) {
        PosedFrame frame;
        frame.intrinsics = intr;
        frame.pose = test::random_pose(rng);
        frame.depth = DepthImage::zeros(intr.height, intr.width);
        int valid = 0;
        for (int r = 0; r < intr.height; ++r)
            for (int c = 0; c < intr.width; ++c)
                if (rng.uniform() < 0.05) {
                    frame.depth.at(r, c) = static_cast<float>(rng.uniform(0.05, 2.0));
                    ++valid;
                }
        const auto points = backproject(frame);
        REQUIRE(points.size() == static_cast<size_t>(valid));
        for (const auto& point : points) {
            const auto proj = project(point.world, intr, frame.pose);
            CHECK(std::abs(proj.row - point.row) <= 1e-5);
            CHECK(std::abs(proj.col - point.col) <= 1e-5);
            CHECK(std::abs(proj.depth - point.depth) <= 1e-5);
        }
    }
}

TEST_CASE("projection is invariant under the composed transform") {
    Rng rng(77);
    const auto intr = test::test_intrinsics();
    for (int trial = 0; trial < 300; ++trial) {
        const Pose pose = test::random_pose(rng);
        const Eigen::Vector3d point(rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4));
        const auto through_pose = project(point, intr, pose);
        const auto through_identity = project(pose.inverse_transform(point), intr, Pose{});
        if (std::abs(through_pose.depth) < 1e-3) continue;  // near the camera plane
        CHECK(through_pose.row == doctest::Approx(through_identity.row).epsilon(1e-6));
        CHECK(through_pose.col == doctest::Approx(through_identity.col).epsilon(1e-6));
        CHECK(through_pose.depth == doctest::Approx(through_identity.depth).epsilon(1e-6));
    }
}

TEST_CASE("library projection agrees with the serial reference") {
    Rng rng(13);
    const auto intr = test::test_intrinsics();
    for (int trial = 0; trial < 200; ++trial) {
        const Pose pose = test::random_pose(rng);
        const auto cam = test::to_serial(intr, pose);
        const Eigen::Vector3d point(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
        const auto proj = project(point, intr, pose);
        double row, col, depth;
        const double world[3] = {point.x(), point.y(), point.z()};
        serial::project_point(cam, world, &row, &col, &depth);
        if (std::abs(depth) < 1e-6) continue;
        CHECK(proj.row == doctest::Approx(row).epsilon(1e-9));
        CHECK(proj.col == doctest::Approx(col).epsilon(1e-9));
        CHECK(proj.depth == doctest::Approx(depth).epsilon(1e-9));
    }
}

TEST_CASE("intrinsics and pose validation") {
    CameraIntrinsics bad{0.0, 100.0, 50.0, 50.0, 100, 100};
    CHECK_THROWS_AS(bad.validate(), StructuralError);
    CameraIntrinsics off_center{100.0, 100.0, 120.0, 50.0, 100, 100};
    CHECK_THROWS_AS(off_center.validate(), StructuralError);

    Pose pose;
    pose.rotation(0, 0) = 2.0;
    CHECK_THROWS_AS(pose.validate(), StructuralError);
    Pose mirror;
    mirror.rotation = Eigen::Vector3d(1, 1, -1).asDiagonal();  // det -1
    CHECK_THROWS_AS(mirror.validate(), StructuralError);
    CHECK_NOTHROW(Pose{}.validate());
}

TEST_CASE("pixel_in_image rounds then bounds-checks") {
    const CameraIntrinsics intr{100.0, 100.0, 50.0, 50.0, 100, 100};
    int r = -1, c = -1;
    CHECK(pixel_in_image(-0.4, 99.4, intr, &r, &c));
    CHECK(r == 0);
    CHECK(c == 99);
    CHECK(!pixel_in_image(-0.6, 50.0, intr));
    CHECK(!pixel_in_image(50.0, 99.6, intr));
    CHECK(!pixel_in_image(std::numeric_limits<double>::quiet_NaN(), 50.0, intr));
}
