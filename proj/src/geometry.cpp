#include "robmrag/geometry.hpp"

#include <cmath>
#include <string>

#include "robmrag/error.hpp"

namespace robmrag {

double Quat::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Quat Quat::normalized() const {
    const double n = norm();
    return {w / n, x / n, y / n, z / n};
}

Quat quat_mul(const Quat& a, const Quat& b) {
    return {
        a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
    };
}

Vec3 rotate(const Quat& q, const Vec3& v) {
    return quat_mul(quat_mul(q, Quat::pure(v)), q.conjugate()).vec();
}

Mat3 to_matrix(const Quat& q) {
    const double w = q.w, x = q.x, y = q.y, z = q.z;
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w),
         2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
         2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y);
    return r;
}

Quat from_matrix(const Mat3& r) {
    const double trace = r.trace();
    Quat q;
    if (trace > 0) {
        const double s = 2 * std::sqrt(1 + trace);
        q = {0.25 * s, (r(2, 1) - r(1, 2)) / s, (r(0, 2) - r(2, 0)) / s, (r(1, 0) - r(0, 1)) / s};
    } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
        const double s = 2 * std::sqrt(1 + r(0, 0) - r(1, 1) - r(2, 2));
        q = {(r(2, 1) - r(1, 2)) / s, 0.25 * s, (r(0, 1) + r(1, 0)) / s, (r(0, 2) + r(2, 0)) / s};
    } else if (r(1, 1) > r(2, 2)) {
        const double s = 2 * std::sqrt(1 + r(1, 1) - r(0, 0) - r(2, 2));
        q = {(r(0, 2) - r(2, 0)) / s, (r(0, 1) + r(1, 0)) / s, 0.25 * s, (r(1, 2) + r(2, 1)) / s};
    } else {
        const double s = 2 * std::sqrt(1 + r(2, 2) - r(0, 0) - r(1, 1));
        q = {(r(1, 0) - r(0, 1)) / s, (r(0, 2) + r(2, 0)) / s, (r(1, 2) + r(2, 1)) / s, 0.25 * s};
    }
    if (q.w < 0) q = {-q.w, -q.x, -q.y, -q.z};
    return q.normalized();
}

Quat from_axis_angle(const Vec3& axis, double angle_rad) {
    const double n = axis.norm();
    if (!(n > 1e-12)) throw GeometryError("rotation axis has zero length");
    const Vec3 u = axis / n;
    const double s = std::sin(angle_rad / 2);
    return {std::cos(angle_rad / 2), u.x() * s, u.y() * s, u.z() * s};
}

void Camera::validate() const {
    if (!(fx > 0 && fy > 0)) throw ValidationError("camera focal lengths must be positive");
    if (width < 1 || height < 1) throw ValidationError("camera size must be positive");
    if (!(cx >= 0 && cx < width && cy >= 0 && cy < height)) {
        throw ValidationError("camera principal point outside the image");
    }
}

Vec2 project_point(const Camera& cam, const Vec3& p, const Mat3& rotation, const Vec3& translation) {
    const Vec3 q = rotation * p + translation;
    if (!(q.z() > kMinProjectDepth)) {
        throw GeometryError("point at or behind the camera plane (z = " + std::to_string(q.z()) + ")");
    }
    return {cam.fx * q.x() / q.z() + cam.cx, cam.fy * q.y() / q.z() + cam.cy};
}

Vec3 backproject(const Camera& cam, const Vec2& pixel, double depth) {
    if (!(pixel.x() >= 0 && pixel.x() <= cam.width && pixel.y() >= 0 && pixel.y() <= cam.height)) {
        throw GeometryError("pixel (" + std::to_string(pixel.x()) + ", " + std::to_string(pixel.y()) +
                            ") outside the image");
    }
    if (!(depth > 0) || !std::isfinite(depth)) throw GeometryError("missing depth at pixel");
    return {(pixel.x() - cam.cx) * depth / cam.fx, (pixel.y() - cam.cy) * depth / cam.fy, depth};
}

}  // namespace robmrag
