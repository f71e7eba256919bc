// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "occfield/losses.hpp"
#include "occfield/raypool.hpp"
#include "occfield/renderer.hpp"
#include "occfield/synthworld.hpp"
#include "occfield/trainer.hpp"

namespace occfield {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Schema: the defaults document doubles as the schema; user configs may only
// set keys that exist here (validated recursively, unknown keys rejected).
// ---------------------------------------------------------------------------

inline json default_config() {
    return json{
        {"scene", {{"profile", "ablation"}}},
        {"sampler",
         {{"type", "unified"},
          {"step_scale", 0.5},
          {"n_coarse", 64},
          {"n_fine", 128},
          {"jitter", true}}},
        {"losses",
         {{"w_seg", 1.0},
          {"w_depth", 1.0},
          {"w_dist", 0.01},
          {"w_tv", 0.01},
          {"lambda_var", 0.85},
          {"opacity_min", 0.05}}},
        {"raypool",
         {{"m_aux", 6},
          {"rays_per_batch", 4096},
          {"lambda_s", 0.5},
          {"lambda_dyn", 0.1},
          {"lambda_adj", 0.7},
          {"w_max", 100.0},
          {"dynamic_classes", json::array()},
          {"with_replacement", true},
          {"use_balance", true},
          {"use_temporal", true}}},
        {"trainer",
         {{"iterations", 3000},
          {"learning_rate", 0.01},
          {"beta1", 0.9},
          {"beta2", 0.999},
          {"eps", 1e-8},
          {"seed", 0},
          {"checkpoint_every", 0},
          {"eval_every", 500},
          {"workers", 0}}},  // 0 = use OCCRENDER_WORKERS / 1
        {"field", {{"density_init", -5.0}, {"logit_init", 0.0}, {"tau", 0.2}}},
    };
}

namespace detail {

inline void merge_validate(json& base, const json& user, const std::string& path) {
    if (!user.is_object()) {
        base = user;
        return;
    }
    for (auto it = user.begin(); it != user.end(); ++it) {
        std::string child = path + "/" + it.key();
        // the scene subtree is free-form (validated by the scene parser)
        if (path.empty() && it.key() == "scene") {
            base["scene"] = it.value();
            continue;
        }
        if (!base.contains(it.key()))
            throw std::invalid_argument("unknown config key at " + child);
        if (base[it.key()].is_object() && it.value().is_object())
            merge_validate(base[it.key()], it.value(), child);
        else
            base[it.key()] = it.value();
    }
}

inline Vec3 vec3_of(const json& j) {
    if (!j.is_array() || j.size() != 3)
        throw std::invalid_argument("expected a 3-element array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}
inline json json_of(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

}  // namespace detail

// user config merged over defaults; unknown keys rejected
inline json resolve_config(const json& user) {
    json cfg = default_config();
    detail::merge_validate(cfg, user, "");
    return cfg;
}

// dotted-path override, e.g. "raypool.m_aux=0"; the value parses as JSON
// with a string fallback.
inline void apply_override(json& cfg, const std::string& expr) {
    auto eq = expr.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("override must be key.path=value: " + expr);
    std::string path = "/" + expr.substr(0, eq);
    for (auto& c : path)
        if (c == '.') c = '/';
    json val;
    try {
        val = json::parse(expr.substr(eq + 1));
    } catch (const json::parse_error&) {
        val = expr.substr(eq + 1);
    }
    json::json_pointer ptr(path);
    if (!cfg.contains(ptr))
        throw std::invalid_argument("unknown config key in override: " + expr);
    cfg[ptr] = val;
}

// ---------------------------------------------------------------------------
// Typed config extraction
// ---------------------------------------------------------------------------

inline RenderConfig parse_render_config(const json& cfg) {
    const json& s = cfg.at("sampler");
    RenderConfig r;
    r.sampler = RenderConfig::parse_sampler(s.at("type").get<std::string>());
    r.step_scale = s.at("step_scale").get<double>();
    r.n_coarse = s.at("n_coarse").get<int>();
    r.n_fine = s.at("n_fine").get<int>();
    r.jitter = s.at("jitter").get<bool>();
    if (r.step_scale <= 0 || r.n_coarse < 1 || r.n_fine < 1)
        throw std::invalid_argument("sampler: invalid step_scale/n_coarse/n_fine");
    return r;
}

inline LossConfig parse_loss_config(const json& cfg) {
    const json& s = cfg.at("losses");
    LossConfig l;
    l.w_seg = s.at("w_seg").get<double>();
    l.w_depth = s.at("w_depth").get<double>();
    l.w_dist = s.at("w_dist").get<double>();
    l.w_tv = s.at("w_tv").get<double>();
    l.lambda_var = s.at("lambda_var").get<double>();
    l.opacity_min = s.at("opacity_min").get<double>();
    return l;
}

inline RayPoolConfig parse_raypool_config(const json& cfg) {
    const json& s = cfg.at("raypool");
    RayPoolConfig p;
    p.m_aux = s.at("m_aux").get<int>();
    p.rays_per_batch = s.at("rays_per_batch").get<int>();
    p.lambda_s = s.at("lambda_s").get<double>();
    p.lambda_dyn = s.at("lambda_dyn").get<double>();
    p.lambda_adj = s.at("lambda_adj").get<double>();
    p.w_max = s.at("w_max").get<double>();
    p.with_replacement = s.at("with_replacement").get<bool>();
    p.use_balance = s.at("use_balance").get<bool>();
    p.use_temporal = s.at("use_temporal").get<bool>();
    for (const auto& c : s.at("dynamic_classes")) p.dynamic_classes.push_back(c.get<int>());
    if (!(p.lambda_dyn > 0 && p.lambda_dyn <= p.lambda_adj && p.lambda_adj <= 1))
        throw std::invalid_argument("raypool: need 0 < lambda_dyn <= lambda_adj <= 1");
    return p;
}

inline TrainConfig parse_train_config(const json& cfg) {
    const json& s = cfg.at("trainer");
    TrainConfig t;
    t.iterations = s.at("iterations").get<int>();
    t.learning_rate = s.at("learning_rate").get<double>();
    t.beta1 = s.at("beta1").get<double>();
    t.beta2 = s.at("beta2").get<double>();
    t.eps = s.at("eps").get<double>();
    t.seed = s.at("seed").get<std::uint64_t>();
    t.checkpoint_every = s.at("checkpoint_every").get<int>();
    t.eval_every = s.at("eval_every").get<int>();
    t.workers = s.at("workers").get<int>();
    if (t.workers <= 0) t.workers = default_workers();
    const json& f = cfg.at("field");
    t.field.density_init = f.at("density_init").get<double>();
    t.field.logit_init = f.at("logit_init").get<double>();
    t.field.tau = f.at("tau").get<double>();
    t.render = parse_render_config(cfg);
    t.loss = parse_loss_config(cfg);
    t.pool = parse_raypool_config(cfg);
    t.validate();
    return t;
}

// ---------------------------------------------------------------------------
// Scene profiles and scene-spec JSON
// ---------------------------------------------------------------------------

// Desk-scale scene with a ground plane, buildings, a rare small cone and a
// dynamic car; 6-camera rig at 60 deg spacing, 7-frame trajectory.
inline SceneSpec ablation_scene_spec() {
    SceneSpec spec;
    spec.dims = GridDims{64, 64, 16};
    spec.voxel_size = 0.4;
    spec.origin = Vec3{-12.8, -12.8, -3.2};
    spec.classes = {{"road", false}, {"building", false}, {"car", true},
                    {"cone", false}};
    ObjectSpec ground;
    ground.shape = ObjectSpec::Shape::Ground;
    ground.class_id = 0;
    ground.height = -2.0;
    spec.objects.push_back(ground);
    auto box = [](int cls, Vec3 center, Vec3 size, Vec3 vel = {}) {
        ObjectSpec o;
        o.shape = ObjectSpec::Shape::Box;
        o.class_id = cls;
        o.center = center;
        o.size = size;
        o.velocity = vel;
        return o;
    };
    spec.objects.push_back(box(1, {7.0, 6.0, 0.0}, {5.0, 4.0, 4.5}));
    spec.objects.push_back(box(1, {-6.0, -7.0, -0.5}, {4.0, 6.0, 3.5}));
    spec.objects.push_back(box(1, {-8.0, 8.0, 0.0}, {3.0, 3.0, 4.0}));
    // dynamic car crossing in front of the trajectory
    spec.objects.push_back(box(2, {3.0, -3.0, -1.2}, {3.2, 1.6, 1.4}, {0.0, 0.5, 0.0}));
    // rare small object
    ObjectSpec cone;
    cone.shape = ObjectSpec::Shape::Cylinder;
    cone.class_id = 3;
    cone.center = Vec3{2.5, 2.5, -2.0};
    cone.radius = 0.45;
    cone.height = 1.0;
    spec.objects.push_back(cone);

    spec.frames = 7;
    spec.ego_start = Vec3{-3.0, 0.0, 0.0};
    spec.ego_step = Vec3{1.0, 0.0, 0.0};
    spec.ego_yaw_step = 0.0;

    // 6 cameras at 60 deg yaw spacing, pitched down toward the ground
    int w = 80, h = 50;
    double f = 46.0;  // ~80 deg horizontal FOV
    double pitch = 0.35;
    for (int i = 0; i < 6; ++i) {
        double yaw = i * std::numbers::pi / 3.0;
        Mat3 base;
        double c = std::cos(yaw), s = std::sin(yaw);
        // columns: images of camera x (right), y (down), z (forward)
        base = Mat3{{s, 0, c, -c, 0, s, 0, -1, 0}};
        Mat3 rot = base * Mat3::rotation_x(-pitch);
        CameraMount cm;
        cm.intrinsics = Pinhole(f, f, w / 2.0, h / 2.0, w, h);
        cm.mount = Pose(rot, Vec3{0, 0, 0.6});
        spec.rig.push_back(cm);
    }
    return spec;
}

inline SceneSpec parse_scene_spec(const json& scene) {
    if (scene.contains("profile")) {
        std::string p = scene.at("profile").get<std::string>();
        if (p == "ablation" || p == "default") {
            SceneSpec spec = ablation_scene_spec();
            // profile tweaks are allowed alongside the profile key
            if (scene.contains("frames")) spec.frames = scene.at("frames").get<int>();
            return spec;
        }
        throw std::invalid_argument("unknown scene profile: " + p);
    }
    SceneSpec spec;
    const json& grid = scene.at("grid");
    auto dims = grid.at("dims");
    spec.dims = GridDims{dims.at(0).get<int>(), dims.at(1).get<int>(),
                         dims.at(2).get<int>()};
    spec.voxel_size = grid.at("voxel_size").get<double>();
    spec.origin = detail::vec3_of(grid.at("origin"));
    for (const auto& c : scene.at("classes"))
        spec.classes.push_back(
            {c.at("name").get<std::string>(), c.value("dynamic", false)});
    for (const auto& o : scene.at("objects")) {
        ObjectSpec obj;
        std::string shape = o.at("shape").get<std::string>();
        obj.class_id = o.at("class").get<int>();
        if (shape == "box") {
            obj.shape = ObjectSpec::Shape::Box;
            obj.center = detail::vec3_of(o.at("center"));
            obj.size = detail::vec3_of(o.at("size"));
        } else if (shape == "cylinder") {
            obj.shape = ObjectSpec::Shape::Cylinder;
            obj.center = detail::vec3_of(o.at("center"));
            obj.radius = o.at("radius").get<double>();
            obj.height = o.at("height").get<double>();
        } else if (shape == "ground") {
            obj.shape = ObjectSpec::Shape::Ground;
            obj.height = o.at("height").get<double>();
        } else {
            throw std::invalid_argument("unknown object shape: " + shape);
        }
        if (o.contains("velocity")) obj.velocity = detail::vec3_of(o.at("velocity"));
        spec.objects.push_back(obj);
    }
    const json& traj = scene.at("trajectory");
    spec.frames = traj.at("frames").get<int>();
    spec.ego_start = detail::vec3_of(traj.at("start"));
    spec.ego_step = detail::vec3_of(traj.at("step"));
    spec.ego_yaw_step = traj.value("yaw_step", 0.0);
    for (const auto& c : scene.at("rig")) {
        CameraMount cm;
        const json& in = c.at("intrinsics");
        cm.intrinsics =
            Pinhole(in.at("fx").get<double>(), in.at("fy").get<double>(),
                    in.at("cx").get<double>(), in.at("cy").get<double>(),
                    in.at("width").get<int>(), in.at("height").get<int>());
        const json& m = c.at("mount");
        Mat3 rot;
        for (int i = 0; i < 9; ++i) rot.m[i] = m.at("rotation").at(i).get<double>();
        cm.mount = Pose(rot, detail::vec3_of(m.at("translation")));
        spec.rig.push_back(cm);
    }
    return spec;
}

// ---------------------------------------------------------------------------
// Scene manifest (written by gen-scene, read by train/eval)
// ---------------------------------------------------------------------------

inline json pose_to_json(const Pose& p) {
    json rot = json::array();
    for (double v : p.rotation.m) rot.push_back(v);
    return json{{"rotation", rot}, {"translation", detail::json_of(p.translation)}};
}

inline Pose pose_from_json(const json& j) {
    Mat3 rot;
    for (int i = 0; i < 9; ++i) rot.m[i] = j.at("rotation").at(i).get<double>();
    return Pose(rot, detail::vec3_of(j.at("translation")));
}

inline json scene_manifest(const Scene& scene) {
    json classes = json::array();
    for (const auto& c : scene.classes)
        classes.push_back({{"name", c.name}, {"dynamic", c.dynamic}});
    json traj = json::array();
    for (const auto& p : scene.trajectory) traj.push_back(pose_to_json(p));
    json rig = json::array();
    for (const auto& c : scene.rig) {
        rig.push_back({{"intrinsics",
                        {{"fx", c.intrinsics.fx},
                         {"fy", c.intrinsics.fy},
                         {"cx", c.intrinsics.cx},
                         {"cy", c.intrinsics.cy},
                         {"width", c.intrinsics.width},
                         {"height", c.intrinsics.height}}},
                       {"mount", pose_to_json(c.mount)}});
    }
    return json{{"grid",
                 {{"dims", {scene.dims.h, scene.dims.w, scene.dims.d}},
                  {"voxel_size", scene.voxel_size},
                  {"origin", detail::json_of(scene.origin)}}},
                {"classes", classes},
                {"frames", int(scene.gt_grids.size())},
                {"trajectory", traj},
                {"rig", rig}};
}

// Rebuild the scene geometry (grids loaded separately by the caller).
inline Scene scene_from_manifest(const json& m) {
    Scene scene;
    auto dims = m.at("grid").at("dims");
    scene.dims = GridDims{dims.at(0).get<int>(), dims.at(1).get<int>(),
                          dims.at(2).get<int>()};
    scene.voxel_size = m.at("grid").at("voxel_size").get<double>();
    scene.origin = detail::vec3_of(m.at("grid").at("origin"));
    for (const auto& c : m.at("classes"))
        scene.classes.push_back(
            {c.at("name").get<std::string>(), c.at("dynamic").get<bool>()});
    for (const auto& p : m.at("trajectory"))
        scene.trajectory.push_back(pose_from_json(p));
    for (const auto& c : m.at("rig")) {
        CameraMount cm;
        const json& in = c.at("intrinsics");
        cm.intrinsics =
            Pinhole(in.at("fx").get<double>(), in.at("fy").get<double>(),
                    in.at("cx").get<double>(), in.at("cy").get<double>(),
                    in.at("width").get<int>(), in.at("height").get<int>());
        cm.mount = pose_from_json(c.at("mount"));
        scene.rig.push_back(cm);
    }
    return scene;
}

}  // namespace occfield
