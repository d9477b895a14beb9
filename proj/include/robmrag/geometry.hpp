#pragma once

// Pinhole camera and rotation primitives shared by the renderer and pose
// refinement. Quaternions are Hamilton, stored (w, x, y, z).

#include <Eigen/Core>

namespace robmrag {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Quat {
    double w = 1;
    double x = 0;
    double y = 0;
    double z = 0;

    static Quat identity() { return {}; }
    static Quat pure(const Vec3& v) { return {0, v.x(), v.y(), v.z()}; }

    double norm() const;
    Quat normalized() const;
    Quat conjugate() const { return {w, -x, -y, -z}; }
    Vec3 vec() const { return {x, y, z}; }
};

// Hamilton product a ⊗ b.
Quat quat_mul(const Quat& a, const Quat& b);

// q v q^-1 for unit q.
Vec3 rotate(const Quat& q, const Vec3& v);

Mat3 to_matrix(const Quat& q);
// Shepperd's method; result has w >= 0.
Quat from_matrix(const Mat3& r);
// Rotation of angle_rad about axis (normalized internally). Throws
// GeometryError for a zero axis.
Quat from_axis_angle(const Vec3& axis, double angle_rad);

struct Camera {
    double fx = 0;
    double fy = 0;
    double cx = 0;
    double cy = 0;
    int width = 0;
    int height = 0;

    // fx, fy > 0; 0 <= cx < width; 0 <= cy < height. Throws ValidationError.
    void validate() const;
};

inline constexpr double kMinProjectDepth = 1e-9;

// pi(M [R|t] p). Throws GeometryError when the transformed z <= 1e-9.
Vec2 project_point(const Camera& cam, const Vec3& p, const Mat3& rotation = Mat3::Identity(),
                   const Vec3& translation = Vec3::Zero());

// Inverse of project_point at a known depth (metres). The pixel must lie in
// [0, width] x [0, height]; depth must be > 0.
Vec3 backproject(const Camera& cam, const Vec2& pixel, double depth);

}  // namespace robmrag
