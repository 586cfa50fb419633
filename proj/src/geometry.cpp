#include "mvor/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mvor {

double Vec3::norm() const { return std::sqrt(x * x + y * y + z * z); }

Vec3 Vec3::normalized() const {
    double n = norm();
    if (n <= 0.0) throw std::invalid_argument("cannot normalize zero vector");
    return {x / n, y / n, z / n};
}

double Quat::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Quat Quat::operator*(const Quat& o) const {
    return {w * o.w - x * o.x - y * o.y - z * o.z,
            w * o.x + x * o.w + y * o.z - z * o.y,
            w * o.y - x * o.z + y * o.w + z * o.x,
            w * o.z + x * o.y - y * o.x + z * o.w};
}

Vec3 Quat::rotate(const Vec3& v) const {
    // v' = v + 2 q_v x (q_v x v + w v)
    Vec3 qv{x, y, z};
    Vec3 t = qv.cross(v) * 2.0;
    return v + t * w + qv.cross(t);
}

Pose::Pose(const Quat& rotation, const Vec3& translation) : q(rotation), t(translation) {
    double n = q.norm();
    if (std::abs(n - 1.0) > 1e-6)
        throw std::invalid_argument("quaternion norm deviates from 1 by more than 1e-6");
    q.w /= n;
    q.x /= n;
    q.y /= n;
    q.z /= n;
}

Quat Pose::quat_from_axis_angle(const Vec3& axis, double angle) {
    Vec3 a = axis.normalized();
    double h = 0.5 * angle;
    double s = std::sin(h);
    return {std::cos(h), a.x * s, a.y * s, a.z * s};
}

Pose Pose::compose(const Pose& o) const {
    Pose out;
    out.q = q * o.q;
    double n = out.q.norm();
    out.q.w /= n;
    out.q.x /= n;
    out.q.y /= n;
    out.q.z /= n;
    out.t = q.rotate(o.t) + t;
    return out;
}

Pose Pose::inverse() const {
    Pose out;
    out.q = q.conjugate();
    Vec3 ti = out.q.rotate(t);
    out.t = {-ti.x, -ti.y, -ti.z};
    return out;
}

CameraIntrinsics::CameraIntrinsics(double fx_, double fy_, double cx_, double cy_, int w, int h)
    : fx(fx_), fy(fy_), cx(cx_), cy(cy_), width(w), height(h) {
    if (fx <= 0.0 || fy <= 0.0) throw std::invalid_argument("focal lengths must be positive");
    if (width <= 0 || height <= 0) throw std::invalid_argument("image size must be positive");
    if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height)
        throw std::invalid_argument("principal point outside image");
}

std::optional<Projection> project(const Vec3& point, const Pose& cam_to_world,
                                  const CameraIntrinsics& intr) {
    Vec3 pc = cam_to_world.inverse().apply(point);
    if (pc.z <= 0.0) return std::nullopt;
    double u = intr.cx + intr.fx * pc.x / pc.z;
    double v = intr.cy + intr.fy * pc.y / pc.z;
    if (u < 0.0 || u >= intr.width || v < 0.0 || v >= intr.height) return std::nullopt;
    return Projection{{u, v}, pc.z};
}

double iou(const BoundingBox& a, const BoundingBox& b) {
    double ix = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    double iy = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    double inter = std::max(0.0, ix) * std::max(0.0, iy);
    double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

BoundingBox enclosing_box(const std::vector<Vec2>& points) {
    if (points.empty()) throw std::invalid_argument("no points");
    BoundingBox box{points[0].x, points[0].y, points[0].x, points[0].y};
    for (const Vec2& p : points) {
        box.x_min = std::min(box.x_min, p.x);
        box.y_min = std::min(box.y_min, p.y);
        box.x_max = std::max(box.x_max, p.x);
        box.y_max = std::max(box.y_max, p.y);
    }
    return box;
}

Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
    Vec3 z = target - eye;
    if (z.norm() < 1e-12) throw std::invalid_argument("look_at: eye and target coincide");
    z = z.normalized();
    Vec3 x = z.cross(up);
    if (x.norm() < 1e-9) throw std::invalid_argument("look_at: view direction parallel to up");
    x = x.normalized();
    Vec3 y = z.cross(x); // z x x keeps the basis right-handed with y down in the image

    // Columns of the camera-to-world rotation are the camera axes in world
    // coordinates. Shepperd's branch picks the best-conditioned pivot.
    double m00 = x.x, m01 = y.x, m02 = z.x;
    double m10 = x.y, m11 = y.y, m12 = z.y;
    double m20 = x.z, m21 = y.z, m22 = z.z;
    double tr = m00 + m11 + m22;
    Quat q;
    if (tr > 0.0) {
        double s = std::sqrt(tr + 1.0) * 2.0;
        q.w = 0.25 * s;
        q.x = (m21 - m12) / s;
        q.y = (m02 - m20) / s;
        q.z = (m10 - m01) / s;
    } else if (m00 > m11 && m00 > m22) {
        double s = std::sqrt(1.0 + m00 - m11 - m22) * 2.0;
        q.w = (m21 - m12) / s;
        q.x = 0.25 * s;
        q.y = (m01 + m10) / s;
        q.z = (m02 + m20) / s;
    } else if (m11 > m22) {
        double s = std::sqrt(1.0 + m11 - m00 - m22) * 2.0;
        q.w = (m02 - m20) / s;
        q.x = (m01 + m10) / s;
        q.y = 0.25 * s;
        q.z = (m12 + m21) / s;
    } else {
        double s = std::sqrt(1.0 + m22 - m00 - m11) * 2.0;
        q.w = (m10 - m01) / s;
        q.x = (m02 + m20) / s;
        q.y = (m12 + m21) / s;
        q.z = 0.25 * s;
    }
    return Pose(q, eye);
}

} // namespace mvor
