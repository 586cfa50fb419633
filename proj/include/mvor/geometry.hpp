#pragma once

#include <optional>
#include <vector>

namespace mvor {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const;
    Vec3 normalized() const;
};

/// Unit quaternion, (w, x, y, z) scalar-first.
struct Quat {
    double w = 1.0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    double norm() const;
    Quat conjugate() const { return {w, -x, -y, -z}; }
    Quat operator*(const Quat& o) const;
    Vec3 rotate(const Vec3& v) const;
};

/// Rigid transform, rotation as a unit quaternion plus translation.
/// Construction normalizes the quaternion and rejects norms deviating
/// from 1 by more than 1e-6.
struct Pose {
    Quat q;
    Vec3 t;

    Pose() = default;
    Pose(const Quat& rotation, const Vec3& translation);

    static Pose identity() { return Pose(); }
    static Quat quat_from_axis_angle(const Vec3& axis, double angle);

    Pose compose(const Pose& o) const;   // this ∘ o
    Pose inverse() const;
    Vec3 apply(const Vec3& p) const { return q.rotate(p) + t; }
};

struct CameraIntrinsics {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;

    CameraIntrinsics() = default;
    CameraIntrinsics(double fx, double fy, double cx, double cy, int width, int height);
};

/// Axis-aligned pixel box, half-open: [x_min, x_max) x [y_min, y_max).
struct BoundingBox {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return width() * height(); }
    bool valid() const { return x_max >= x_min && y_max >= y_min; }
};

struct Projection {
    Vec2 pixel;
    double depth = 0.0;
};

/// Projects a map-frame point through a pinhole camera. `cam_to_world` is the
/// camera's pose in the map frame (trajectory convention); the inverse is
/// applied internally. Absent when the point is behind the camera or lands
/// outside [0, width) x [0, height).
std::optional<Projection> project(const Vec3& point, const Pose& cam_to_world,
                                  const CameraIntrinsics& intr);

/// Intersection over union. Zero when the union has zero area, so degenerate
/// boxes never report overlap.
double iou(const BoundingBox& a, const BoundingBox& b);

/// Minimal axis-aligned box containing all points. Throws on empty input.
BoundingBox enclosing_box(const std::vector<Vec2>& points);

/// Camera-to-world pose for a camera at `eye` with its optical axis through
/// `target`, image rows running downward against `up`. Throws when eye and
/// target coincide or the view direction is parallel to `up`.
Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = {0, 1, 0});

} // namespace mvor
