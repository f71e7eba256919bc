// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>

namespace occfield {

struct Vec3 {
    double x = 0, y = 0, z = 0;

    double& operator[](int i) { return (&x)[i]; }
    double operator[](int i) const { return (&x)[i]; }

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        double n = norm();
        return {x / n, y / n, z / n};
    }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

// Row-major 3x3 matrix.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    double& operator()(int r, int c) { return m[r * 3 + c]; }
    double operator()(int r, int c) const { return m[r * 3 + c]; }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0;
                for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
                r(i, j) = s;
            }
        return r;
    }
    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
        return r;
    }
    static Mat3 identity() { return Mat3{}; }
    static Mat3 rotation_z(double rad) {
        double c = std::cos(rad), s = std::sin(rad);
        return Mat3{{c, -s, 0, s, c, 0, 0, 0, 1}};
    }
    static Mat3 rotation_y(double rad) {
        double c = std::cos(rad), s = std::sin(rad);
        return Mat3{{c, 0, s, 0, 1, 0, -s, 0, c}};
    }
    static Mat3 rotation_x(double rad) {
        double c = std::cos(rad), s = std::sin(rad);
        return Mat3{{1, 0, 0, 0, c, -s, 0, s, c}};
    }
};

struct Pinhole {
    double fx = 1, fy = 1, cx = 0, cy = 0;
    int width = 1, height = 1;

    Pinhole() = default;
    Pinhole(double fx_, double fy_, double cx_, double cy_, int w, int h)
        : fx(fx_), fy(fy_), cx(cx_), cy(cy_), width(w), height(h) {
        if (fx <= 0 || fy <= 0 || width < 1 || height < 1)
            throw std::invalid_argument("Pinhole: fx,fy must be > 0 and size >= 1");
    }
};

// Rigid transform: p_out = rotation * p_in + translation.
struct Pose {
    Mat3 rotation;
    Vec3 translation;

    static constexpr double kOrthoTol = 1e-9;

    Pose() = default;
    Pose(const Mat3& r, const Vec3& t) : rotation(r), translation(t) { validate(); }

    void validate() const {
        Mat3 rtr = rotation.transposed() * rotation;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double want = (i == j) ? 1.0 : 0.0;
                if (std::abs(rtr(i, j) - want) > 1e-6)
                    throw std::invalid_argument("Pose: rotation not orthonormal");
            }
        double det =
            rotation(0, 0) * (rotation(1, 1) * rotation(2, 2) - rotation(1, 2) * rotation(2, 1)) -
            rotation(0, 1) * (rotation(1, 0) * rotation(2, 2) - rotation(1, 2) * rotation(2, 0)) +
            rotation(0, 2) * (rotation(1, 0) * rotation(2, 1) - rotation(1, 1) * rotation(2, 0));
        if (std::abs(det - 1.0) > 1e-6)
            throw std::invalid_argument("Pose: rotation determinant != 1");
    }

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
    Vec3 apply_dir(const Vec3& d) const { return rotation * d; }

    Pose inverse() const {
        Pose inv;
        inv.rotation = rotation.transposed();
        inv.translation = inv.rotation * (Vec3{} - translation);
        return inv;
    }
    // (*this) after `other`: apply other first.
    Pose compose(const Pose& other) const {
        Pose out;
        out.rotation = rotation * other.rotation;
        out.translation = rotation * other.translation + translation;
        return out;
    }
    static Pose identity() { return Pose{}; }
};

inline constexpr int kNoDepth = -1;

struct Ray {
    Vec3 origin;
    Vec3 direction;  // unit
    double t_near = 0;
    double t_far = std::numeric_limits<double>::infinity();
    int frame_offset = 0;   // 0 = current frame
    int sem_label = 0;      // class id
    double depth_label = kNoDepth;  // meters; < 0 means absent
    double weight = 1.0;    // filled by the ray pool

    bool has_depth() const { return depth_label >= 0; }
    Vec3 at(double t) const { return origin + direction * t; }
};

// Axis-aligned box.
struct Aabb {
    Vec3 lo, hi;

    Aabb() = default;
    Aabb(const Vec3& lo_, const Vec3& hi_) : lo(lo_), hi(hi_) {
        if (!(hi.x > lo.x && hi.y > lo.y && hi.z > lo.z))
            throw std::invalid_argument("Aabb: box must have positive extent");
    }
    bool contains(const Vec3& p, double eps = 0.0) const {
        return p.x >= lo.x - eps && p.x <= hi.x + eps && p.y >= lo.y - eps &&
               p.y <= hi.y + eps && p.z >= lo.z - eps && p.z <= hi.z + eps;
    }
};

// Back-project pixel (u,v) through its center to a world ray.
// cam_pose maps camera coordinates to the scene frame (camera-to-scene).
inline Ray pixel_ray(const Pinhole& cam, const Pose& cam_pose, int u, int v,
                     bool center_convention = true) {
    if (u < 0 || u >= cam.width || v < 0 || v >= cam.height)
        throw std::invalid_argument("pixel_ray: pixel out of bounds");
    double off = center_convention ? 0.5 : 0.0;
    Vec3 d_cam{(u + off - cam.cx) / cam.fx, (v + off - cam.cy) / cam.fy, 1.0};
    Ray r;
    r.origin = cam_pose.translation;
    r.direction = cam_pose.apply_dir(d_cam).normalized();
    return r;
}

// Re-express a ray given in src_ego coordinates in dst_ego coordinates
// (both poses map their ego frame into the shared scene frame).
inline Ray transform_ray(const Ray& ray, const Pose& src_ego, const Pose& dst_ego) {
    Pose rel = dst_ego.inverse().compose(src_ego);
    Ray out = ray;
    out.origin = rel.apply(ray.origin);
    out.direction = rel.apply_dir(ray.direction).normalized();
    return out;
}

// Slab-method ray/box intersection, clipped to [ray.t_near, ray.t_far].
inline std::optional<std::pair<double, double>> grid_intersect(const Ray& ray,
                                                               const Aabb& box) {
    double t0 = ray.t_near, t1 = ray.t_far;
    for (int a = 0; a < 3; ++a) {
        double o = ray.origin[a], d = ray.direction[a];
        if (std::abs(d) < 1e-15) {
            if (o < box.lo[a] || o > box.hi[a]) return std::nullopt;
            continue;
        }
        double inv = 1.0 / d;
        double ta = (box.lo[a] - o) * inv;
        double tb = (box.hi[a] - o) * inv;
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 >= t1) return std::nullopt;
    }
    return std::make_pair(t0, t1);
}

// Project a scene point into pixel coordinates (continuous, center convention).
inline std::optional<std::pair<double, double>> project(const Pinhole& cam,
                                                        const Pose& cam_pose,
                                                        const Vec3& p) {
    Vec3 pc = cam_pose.inverse().apply(p);
    if (pc.z <= 0) return std::nullopt;
    return std::make_pair(cam.fx * pc.x / pc.z + cam.cx,
                          cam.fy * pc.y / pc.z + cam.cy);
}

}  // namespace occfield
