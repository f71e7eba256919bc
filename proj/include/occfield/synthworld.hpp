// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "occfield/field.hpp"
#include "occfield/geometry.hpp"
#include "occfield/rng.hpp"

namespace occfield {

struct ClassInfo {
    std::string name;
    bool dynamic = false;
};

struct ObjectSpec {
    enum class Shape { Box, Cylinder, Ground };
    Shape shape = Shape::Box;
    int class_id = 0;
    Vec3 center;       // box/cylinder
    Vec3 size;         // box: full extents
    double radius = 0; // cylinder (axis along z)
    double height = 0; // cylinder height; ground: top plane z
    Vec3 velocity;     // meters per frame; nonzero only for dynamic classes
};

struct CameraMount {
    Pinhole intrinsics;
    Pose mount;  // camera-to-ego
};

struct SceneSpec {
    GridDims dims{64, 64, 16};
    double voxel_size = 0.4;
    Vec3 origin{-12.8, -12.8, -3.2};
    std::vector<ClassInfo> classes;  // object classes; free class appended by gen_scene
    std::vector<ObjectSpec> objects;
    int frames = 7;
    Vec3 ego_start{-1.5, 0, 0};
    Vec3 ego_step{0.5, 0, 0};    // translation per frame
    double ego_yaw_step = 0.0;   // rotation about z per frame (radians)
    std::vector<CameraMount> rig;
};

struct LabelImage {
    int width = 0, height = 0;
    std::vector<std::uint8_t> sem;  // class ids; free class for misses
    std::vector<double> depth;      // meters; < 0 invalid (free pixels)

    std::uint8_t sem_at(int u, int v) const { return sem[size_t(v) * width + u]; }
    double depth_at(int u, int v) const { return depth[size_t(v) * width + u]; }
};

struct Scene {
    std::vector<OccupancyGrid> gt_grids;  // one per frame, scene frame
    std::vector<ClassInfo> classes;       // object classes + trailing free class
    std::vector<Pose> trajectory;         // ego-to-scene, per frame
    std::vector<CameraMount> rig;
    Vec3 origin;
    double voxel_size = 0.4;
    GridDims dims;

    int num_label_classes() const { return static_cast<int>(classes.size()); }
    int free_class() const { return num_label_classes() - 1; }
    bool is_dynamic(int class_id) const {
        return class_id >= 0 && class_id < int(classes.size()) &&
               classes[class_id].dynamic;
    }
    std::vector<int> dynamic_class_ids() const {
        std::vector<int> out;
        for (size_t i = 0; i < classes.size(); ++i)
            if (classes[i].dynamic) out.push_back(int(i));
        return out;
    }
    Aabb bounds() const {
        Vec3 ext{dims.h * voxel_size, dims.w * voxel_size, dims.d * voxel_size};
        return Aabb(origin, origin + ext);
    }
    Pose camera_pose(int frame, int cam) const {
        return trajectory[frame].compose(rig[cam].mount);
    }
};

namespace detail {

inline bool inside_object(const ObjectSpec& obj, const Vec3& p, int frame) {
    Vec3 c = obj.center + obj.velocity * double(frame);
    switch (obj.shape) {
        case ObjectSpec::Shape::Box:
            return std::abs(p.x - c.x) <= obj.size.x / 2 &&
                   std::abs(p.y - c.y) <= obj.size.y / 2 &&
                   std::abs(p.z - c.z) <= obj.size.z / 2;
        case ObjectSpec::Shape::Cylinder: {
            double dx = p.x - c.x, dy = p.y - c.y;
            return dx * dx + dy * dy <= obj.radius * obj.radius &&
                   p.z >= c.z && p.z <= c.z + obj.height;
        }
        case ObjectSpec::Shape::Ground:
            return p.z <= obj.height;
    }
    return false;
}

}  // namespace detail

// Build the per-frame GT grids, class table (with the free class appended),
// and the normalized ego trajectory (center frame pose = identity, so the
// scene frame coincides with the current ego frame).
inline Scene gen_scene(const SceneSpec& spec, Rng& rng) {
    (void)rng;  // reserved for randomized profiles; base scenes are deterministic
    if (spec.frames < 1) throw std::invalid_argument("gen_scene: frames >= 1");
    if (spec.rig.empty()) throw std::invalid_argument("gen_scene: empty camera rig");
    for (const auto& o : spec.objects)
        if (o.class_id < 0 || o.class_id >= int(spec.classes.size()))
            throw std::invalid_argument("gen_scene: object class out of range");

    Scene scene;
    scene.classes = spec.classes;
    scene.classes.push_back({"free", false});
    scene.rig = spec.rig;
    scene.origin = spec.origin;
    scene.voxel_size = spec.voxel_size;
    scene.dims = spec.dims;

    int L = scene.num_label_classes();
    for (int f = 0; f < spec.frames; ++f) {
        OccupancyGrid grid(spec.dims, L);
        for (int x = 0; x < spec.dims.h; ++x)
            for (int y = 0; y < spec.dims.w; ++y)
                for (int z = 0; z < spec.dims.d; ++z) {
                    Vec3 p{spec.origin.x + (x + 0.5) * spec.voxel_size,
                           spec.origin.y + (y + 0.5) * spec.voxel_size,
                           spec.origin.z + (z + 0.5) * spec.voxel_size};
                    // last writer wins in spec order
                    for (const auto& obj : spec.objects)
                        if (detail::inside_object(obj, p, f))
                            grid.at(x, y, z) = std::uint8_t(obj.class_id);
                }
        scene.gt_grids.push_back(std::move(grid));
    }

    // raw trajectory, then re-expressed relative to the center frame
    std::vector<Pose> raw;
    for (int f = 0; f < spec.frames; ++f) {
        Pose p;
        p.rotation = Mat3::rotation_z(spec.ego_yaw_step * f);
        p.translation = spec.ego_start + spec.ego_step * double(f);
        raw.push_back(p);
    }
    Pose center_inv = raw[spec.frames / 2].inverse();
    for (auto& p : raw) scene.trajectory.push_back(center_inv.compose(p));
    return scene;
}

// Exact Amanatides-Woo traversal: first occupied voxel along the ray.
// Returns the hit class and entry distance, or nullopt on a miss.
inline std::optional<std::pair<int, double>> raycast_grid(
    const OccupancyGrid& grid, const Vec3& origin, double voxel_size,
    const Ray& ray) {
    Aabb box(origin, origin + Vec3{grid.dims.h * voxel_size,
                                   grid.dims.w * voxel_size,
                                   grid.dims.d * voxel_size});
    Ray clipped = ray;
    clipped.t_near = 0;
    clipped.t_far = std::numeric_limits<double>::infinity();
    auto hit = grid_intersect(clipped, box);
    if (!hit) return std::nullopt;
    double t0 = hit->first, t1 = hit->second;

    const int n[3] = {grid.dims.h, grid.dims.w, grid.dims.d};
    Vec3 p = ray.at(t0 + 1e-12);
    int idx[3];
    for (int a = 0; a < 3; ++a) {
        idx[a] = int(std::floor((p[a] - origin[a]) / voxel_size));
        idx[a] = std::max(0, std::min(n[a] - 1, idx[a]));
    }
    int step[3];
    double t_max[3], t_delta[3];
    for (int a = 0; a < 3; ++a) {
        double d = ray.direction[a];
        if (d > 1e-15) {
            step[a] = 1;
            t_max[a] = (origin[a] + (idx[a] + 1) * voxel_size - ray.origin[a]) / d;
            t_delta[a] = voxel_size / d;
        } else if (d < -1e-15) {
            step[a] = -1;
            t_max[a] = (origin[a] + idx[a] * voxel_size - ray.origin[a]) / d;
            t_delta[a] = -voxel_size / d;
        } else {
            step[a] = 0;
            t_max[a] = std::numeric_limits<double>::infinity();
            t_delta[a] = std::numeric_limits<double>::infinity();
        }
    }
    double t_enter = t0;
    for (;;) {
        int label = grid.at(idx[0], idx[1], idx[2]);
        if (label != grid.empty_label()) return std::make_pair(label, t_enter);
        int axis = 0;
        if (t_max[1] < t_max[axis]) axis = 1;
        if (t_max[2] < t_max[axis]) axis = 2;
        t_enter = t_max[axis];
        if (t_enter > t1 - 1e-12) return std::nullopt;
        idx[axis] += step[axis];
        if (idx[axis] < 0 || idx[axis] >= n[axis]) return std::nullopt;
        t_max[axis] += t_delta[axis];
    }
}

// Oracle 2D labels for one camera at one frame: per pixel, the first
// occupied voxel's class and entry-distance depth; misses get the free
// class and an invalid depth.
inline LabelImage raycast_labels(const Scene& scene, int frame, int cam) {
    if (frame < 0 || frame >= int(scene.gt_grids.size()))
        throw std::invalid_argument("raycast_labels: frame out of range");
    if (cam < 0 || cam >= int(scene.rig.size()))
        throw std::invalid_argument("raycast_labels: camera out of range");
    const Pinhole& intr = scene.rig[cam].intrinsics;
    Pose cam_pose = scene.camera_pose(frame, cam);
    const OccupancyGrid& grid = scene.gt_grids[frame];

    LabelImage img;
    img.width = intr.width;
    img.height = intr.height;
    img.sem.assign(size_t(intr.width) * intr.height, std::uint8_t(scene.free_class()));
    img.depth.assign(size_t(intr.width) * intr.height, -1.0);
    for (int v = 0; v < intr.height; ++v)
        for (int u = 0; u < intr.width; ++u) {
            Ray r = pixel_ray(intr, cam_pose, u, v);
            auto hit = raycast_grid(grid, scene.origin, scene.voxel_size, r);
            if (hit) {
                img.sem[size_t(v) * intr.width + u] = std::uint8_t(hit->first);
                img.depth[size_t(v) * intr.width + u] = hit->second;
            }
        }
    return img;
}

// GT grid converted to a saturated density field: occupied voxels opaque
// with one-hot class logits, empty voxels transparent with free-class logits.
inline SemanticDensityField saturated_field(const OccupancyGrid& grid, Vec3 origin,
                                            double voxel_size,
                                            double density_sat = 1e4,
                                            double logit_sat = 25.0) {
    int L = grid.num_classes;
    SemanticDensityField field(grid.dims, L, origin, voxel_size, -density_sat, 0.0);
    for (std::int64_t i = 0; i < grid.dims.count(); ++i) {
        int label = grid.labels[size_t(i)];
        if (label != grid.empty_label()) {
            field.density_params()[size_t(i)] = density_sat;
            field.semantic_params()[size_t(i) * L + label] = logit_sat;
        } else {
            field.semantic_params()[size_t(i) * L + (L - 1)] = logit_sat;
        }
    }
    return field;
}

}  // namespace occfield
