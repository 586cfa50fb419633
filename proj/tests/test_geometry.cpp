#include "mvor/geometry.hpp"

#include <doctest.h>

#include <cmath>
#include <stdexcept>

using namespace mvor;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("vec3 arithmetic") {
    Vec3 a{1, 2, 3}, b{4, 5, 6};
    Vec3 s = a + b;
    CHECK(s.x == 5);
    CHECK(s.y == 7);
    CHECK(s.z == 9);
    CHECK(a.dot(b) == doctest::Approx(32.0));
    Vec3 c = a.cross(b);
    CHECK(c.x == doctest::Approx(-3.0));
    CHECK(c.y == doctest::Approx(6.0));
    CHECK(c.z == doctest::Approx(-3.0));
    CHECK(Vec3{3, 4, 0}.norm() == doctest::Approx(5.0));
    Vec3 n = Vec3{0, 0, 2}.normalized();
    CHECK(n.z == doctest::Approx(1.0));
}

TEST_CASE("quaternion rotation matches axis-angle") {
    // 90 degrees about z sends x to y.
    Quat q = Pose::quat_from_axis_angle({0, 0, 1}, kPi / 2);
    Vec3 v = q.rotate({1, 0, 0});
    CHECK(v.x == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(v.y == doctest::Approx(1.0));
    CHECK(v.z == doctest::Approx(0.0).epsilon(1e-12));

    // Composition of two 90-degree turns equals one 180-degree turn.
    Quat q2 = q * q;
    Vec3 w = q2.rotate({1, 0, 0});
    CHECK(w.x == doctest::Approx(-1.0));
    CHECK(w.y == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("pose construction normalizes and validates") {
    CHECK_THROWS_AS(Pose(Quat{2.0, 0, 0, 0}, Vec3{}), std::invalid_argument);
    Pose p(Quat{1.0 + 5e-7, 0, 0, 0}, Vec3{1, 2, 3});
    CHECK(p.q.norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pose compose and inverse round trip") {
    Pose a(Pose::quat_from_axis_angle({0, 1, 0}, 0.7), Vec3{1, -2, 3});
    Pose b(Pose::quat_from_axis_angle({1, 0, 0}, -0.3), Vec3{0.5, 0, -1});
    Vec3 p{0.2, 0.4, 0.6};

    Vec3 via_compose = a.compose(b).apply(p);
    Vec3 via_chain = a.apply(b.apply(p));
    CHECK(via_compose.x == doctest::Approx(via_chain.x));
    CHECK(via_compose.y == doctest::Approx(via_chain.y));
    CHECK(via_compose.z == doctest::Approx(via_chain.z));

    Vec3 back = a.inverse().apply(a.apply(p));
    CHECK(back.x == doctest::Approx(p.x));
    CHECK(back.y == doctest::Approx(p.y));
    CHECK(back.z == doctest::Approx(p.z));
}

TEST_CASE("projection through identity camera") {
    CameraIntrinsics intr(500, 500, 320, 240, 640, 480);
    Pose cam = Pose::identity();

    auto center = project({0, 0, 2}, cam, intr);
    REQUIRE(center.has_value());
    CHECK(center->pixel.x == doctest::Approx(320.0));
    CHECK(center->pixel.y == doctest::Approx(240.0));
    CHECK(center->depth == doctest::Approx(2.0));

    // Offset point: u = fx * x/z + cx.
    auto off = project({0.4, -0.2, 2}, cam, intr);
    REQUIRE(off.has_value());
    CHECK(off->pixel.x == doctest::Approx(320.0 + 500.0 * 0.2));
    CHECK(off->pixel.y == doctest::Approx(240.0 - 500.0 * 0.1));

    CHECK_FALSE(project({0, 0, -1}, cam, intr).has_value());
    CHECK_FALSE(project({0, 0, 0}, cam, intr).has_value());
    CHECK_FALSE(project({10, 0, 2}, cam, intr).has_value());
}

TEST_CASE("projection applies the world-to-camera inverse") {
    CameraIntrinsics intr(500, 500, 320, 240, 640, 480);
    // Camera translated to (0, 0, -3) looking down +z: a world origin point
    // sits 3 units ahead.
    Pose cam(Quat{}, Vec3{0, 0, -3});
    auto pr = project({0, 0, 0}, cam, intr);
    REQUIRE(pr.has_value());
    CHECK(pr->depth == doctest::Approx(3.0));
    CHECK(pr->pixel.x == doctest::Approx(320.0));

    // Camera rotated 180 degrees about y sees points behind its origin.
    Pose flipped(Pose::quat_from_axis_angle({0, 1, 0}, kPi), Vec3{});
    CHECK_FALSE(project({0, 0, 1}, flipped, intr).has_value());
    auto behind = project({0, 0, -2}, flipped, intr);
    REQUIRE(behind.has_value());
    CHECK(behind->depth == doctest::Approx(2.0));
}

TEST_CASE("iou hand cases") {
    BoundingBox a{0, 0, 10, 10};
    CHECK(iou(a, a) == doctest::Approx(1.0));
    CHECK(iou(a, {20, 20, 30, 30}) == 0.0);
    // Overlap 5x10 = 50, union 100 + 100 - 50 = 150.
    CHECK(iou(a, {5, 0, 15, 10}) == doctest::Approx(50.0 / 150.0));
    // Degenerate boxes never overlap.
    BoundingBox line{0, 0, 0, 10};
    CHECK(iou(line, line) == 0.0);
    // Touching edges share zero area.
    CHECK(iou(a, {10, 0, 20, 10}) == 0.0);
}

TEST_CASE("enclosing box") {
    CHECK_THROWS_AS(enclosing_box({}), std::invalid_argument);
    BoundingBox b = enclosing_box({{3, 7}, {-1, 2}, {5, 4}});
    CHECK(b.x_min == -1);
    CHECK(b.y_min == 2);
    CHECK(b.x_max == 5);
    CHECK(b.y_max == 7);
    CHECK(b.valid());
}

TEST_CASE("bounding box accessors") {
    BoundingBox b{2, 3, 10, 7};
    CHECK(b.width() == 8);
    CHECK(b.height() == 4);
    CHECK(b.area() == 32);
    CHECK(b.valid());
    CHECK_FALSE(BoundingBox{5, 0, 2, 1}.valid());
}

TEST_CASE("look_at builds a camera pose aimed at the target") {
    Pose cam = look_at({0, 0, -2}, {0, 0, 0});
    auto center = project({0, 0, 0}, cam, CameraIntrinsics(100, 100, 50, 40, 100, 80));
    REQUIRE(center.has_value());
    CHECK(center->pixel.x == doctest::Approx(50).epsilon(1e-12));
    CHECK(center->pixel.y == doctest::Approx(40).epsilon(1e-12));
    CHECK(center->depth == doctest::Approx(2.0).epsilon(1e-12));

    // The camera z axis reaches the target at the eye-target distance.
    Vec3 fwd = cam.apply({0, 0, 2});
    CHECK(std::abs(fwd.x) < 1e-12);
    CHECK(std::abs(fwd.y) < 1e-12);
    CHECK(std::abs(fwd.z) < 1e-12);

    // Rotating the orthonormal basis preserves dot products.
    Vec3 bx = cam.q.rotate({1, 0, 0});
    Vec3 by = cam.q.rotate({0, 1, 0});
    Vec3 bz = cam.q.rotate({0, 0, 1});
    CHECK(std::abs(bx.dot(by)) < 1e-12);
    CHECK(std::abs(bx.dot(bz)) < 1e-12);
    CHECK(std::abs(by.dot(bz)) < 1e-12);
    CHECK(bx.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(bx.cross(by).dot(bz) == doctest::Approx(1.0).epsilon(1e-12)); // right-handed

    // World up maps above the principal point (image y runs downward).
    Pose oblique = look_at({3, 2, -1}, {0.2, 0.1, 0.4});
    auto above = project({0.2, 0.6, 0.4}, oblique, CameraIntrinsics(100, 100, 50, 40, 100, 80));
    REQUIRE(above.has_value());
    CHECK(above->pixel.y < 40);

    CHECK_THROWS_AS(look_at({1, 2, 3}, {1, 2, 3}), std::invalid_argument);
    CHECK_THROWS_AS(look_at({0, 0, 0}, {0, 5, 0}), std::invalid_argument);
}
