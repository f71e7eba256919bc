// SPDX-License-Identifier: Apache-2.0
//
// occfield CLI: scene generation, training, occupancy extraction, gradient
// checking, evaluation. Exit codes: 0 ok, 2 input error, 3 numerical
// failure, 4 format error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "occfield/occfield.hpp"

namespace fs = std::filesystem;
using namespace occfield;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitFormat = 4;

json load_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot open file: " + path);
    try {
        return json::parse(is);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("JSON parse error in " + path + ": " + e.what());
    }
}

json resolve_cli_config(const std::string& config_path,
                        const std::vector<std::string>& overrides) {
    json user = config_path.empty() ? json::object() : load_json_file(config_path);
    json cfg = resolve_config(user);
    for (const auto& o : overrides) apply_override(cfg, o);
    return cfg;
}

std::string frame_tag(int f) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%03d", f);
    return buf;
}

struct SceneData {
    Scene scene;
    std::vector<std::vector<LabelImage>> labels;  // [frame][camera]
};

SceneData load_scene_dir(const std::string& dir) {
    SceneData data;
    json manifest = load_json_file((fs::path(dir) / "manifest.json").string());
    data.scene = scene_from_manifest(manifest);
    int frames = manifest.at("frames").get<int>();
    int ncams = int(data.scene.rig.size());
    int L = data.scene.num_label_classes();
    for (int f = 0; f < frames; ++f) {
        fs::path occ = fs::path(dir) / ("gt_frame_" + frame_tag(f) + ".occ");
        data.scene.gt_grids.push_back(io::with_input_file(
            occ.string(), [&](std::istream& is) { return io::read_occ(is, L); }));
        std::vector<LabelImage> cams;
        for (int c = 0; c < ncams; ++c) {
            std::string stem = "frame_" + frame_tag(f) + "_cam_" + std::to_string(c);
            LabelImage img = io::with_input_file(
                (fs::path(dir) / (stem + "_sem.pgm")).string(),
                [&](std::istream& is) { return io::read_sem_pgm(is); });
            io::with_input_file((fs::path(dir) / (stem + "_depth.pgm")).string(),
                                [&](std::istream& is) {
                                    io::read_depth_pgm(is, img);
                                    return 0;
                                });
            cams.push_back(std::move(img));
        }
        data.labels.push_back(std::move(cams));
    }
    return data;
}

int cmd_gen_scene(const std::string& spec_path, const std::string& out_dir,
                  std::uint64_t seed, bool ppm) {
    json scene_json = spec_path.empty() ? json{{"profile", "ablation"}}
                                        : load_json_file(spec_path);
    if (scene_json.contains("scene")) scene_json = scene_json["scene"];
    SceneSpec spec = parse_scene_spec(scene_json);
    Rng rng = make_rng(seed);
    Scene scene = gen_scene(spec, rng);

    fs::create_directories(out_dir);
    json manifest = scene_manifest(scene);
    manifest["seed"] = seed;
    json files = json::object();
    files["occ"] = json::array();
    files["labels"] = json::array();
    int label_pairs = 0;
    for (int f = 0; f < int(scene.gt_grids.size()); ++f) {
        std::string occ_name = "gt_frame_" + frame_tag(f) + ".occ";
        io::with_output_file((fs::path(out_dir) / occ_name).string(),
                             [&](std::ostream& os) {
                                 io::write_occ(os, scene.gt_grids[f]);
                             });
        files["occ"].push_back(occ_name);
        for (int c = 0; c < int(scene.rig.size()); ++c) {
            LabelImage img = raycast_labels(scene, f, c);
            std::string stem = "frame_" + frame_tag(f) + "_cam_" + std::to_string(c);
            io::with_output_file((fs::path(out_dir) / (stem + "_sem.pgm")).string(),
                                 [&](std::ostream& os) { io::write_sem_pgm(os, img); });
            io::with_output_file(
                (fs::path(out_dir) / (stem + "_depth.pgm")).string(),
                [&](std::ostream& os) { io::write_depth_pgm(os, img); });
            if (ppm)
                io::with_output_file(
                    (fs::path(out_dir) / (stem + "_sem.ppm")).string(),
                    [&](std::ostream& os) {
                        io::write_sem_ppm(os, img, scene.free_class());
                    });
            files["labels"].push_back(stem);
            ++label_pairs;
        }
    }
    manifest["files"] = files;
    manifest["label_pairs"] = label_pairs;
    io::with_output_file((fs::path(out_dir) / "manifest.json").string(),
                         [&](std::ostream& os) { os << manifest.dump(2) << "\n"; });
    std::cout << json{{"frames", int(scene.gt_grids.size())},
                      {"cameras", int(scene.rig.size())},
                      {"label_pairs", label_pairs},
                      {"out", out_dir}}
                     .dump()
              << "\n";
    return kExitOk;
}

int cmd_train(const json& cfg, const std::string& data_dir,
              const std::string& out_dir, const std::string& resume_path) {
    SceneData data = load_scene_dir(data_dir);
    TrainConfig tcfg = parse_train_config(cfg);
    for (int c : data.scene.dynamic_class_ids())
        if (std::find(tcfg.pool.dynamic_classes.begin(),
                      tcfg.pool.dynamic_classes.end(),
                      c) == tcfg.pool.dynamic_classes.end())
            tcfg.pool.dynamic_classes.push_back(c);

    fs::create_directories(out_dir);
    std::ofstream metrics((fs::path(out_dir) / "metrics.jsonl").string(),
                          resume_path.empty() ? std::ios::trunc : std::ios::app);

    auto on_record = [&](const FitRecord& rec) {
        json rj{{"iteration", rec.iteration},
                {"l_seg", rec.loss.l_seg},
                {"l_depth", rec.loss.l_depth},
                {"l_dist", rec.loss.l_dist},
                {"l_tv", rec.loss.l_tv},
                {"total", rec.loss.total}};
        if (rec.has_eval) {
            rj["miou"] = rec.eval.miou;
            rj["per_class_iou"] = rec.eval.per_class_iou;
        }
        metrics << rj.dump() << "\n";
    };
    auto on_checkpoint = [&](const TrainState& state) {
        io::with_output_file((fs::path(out_dir) / "checkpoint.ckpt").string(),
                             [&](std::ostream& os) { save_checkpoint(os, state); });
    };

    TrainState state;
    if (!resume_path.empty()) {
        state = io::with_input_file(resume_path, [](std::istream& is) {
            return load_checkpoint(is);
        });
        int current = int(data.scene.trajectory.size()) / 2;
        RayPool pool = build_pool(data.scene.trajectory, data.labels, data.scene.rig,
                                  current, state.field.bounds(), tcfg.pool);
        const OccupancyGrid& gt = data.scene.gt_grids[current];
        while (state.iteration < std::uint64_t(tcfg.iterations)) {
            FitRecord rec;
            rec.loss = train_step(state, pool, tcfg);
            rec.iteration = state.iteration;
            if (tcfg.eval_every > 0 &&
                (state.iteration % tcfg.eval_every == 0 ||
                 state.iteration == std::uint64_t(tcfg.iterations))) {
                rec.has_eval = true;
                rec.eval =
                    voxel_miou(state.field.extract_occupancy(tcfg.field.tau), gt);
            }
            on_record(rec);
            if (tcfg.checkpoint_every > 0 &&
                state.iteration % tcfg.checkpoint_every == 0)
                on_checkpoint(state);
        }
    } else {
        state = fit(data.scene, data.labels, tcfg, on_record, on_checkpoint);
    }

    io::with_output_file((fs::path(out_dir) / "field.sdf").string(),
                         [&](std::ostream& os) { io::write_sdf(os, state.field); });
    io::with_output_file((fs::path(out_dir) / "effective_config.json").string(),
                         [&](std::ostream& os) { os << cfg.dump(2) << "\n"; });
    std::cout << json{{"iterations", state.iteration}, {"out", out_dir}}.dump()
              << "\n";
    return kExitOk;
}

int cmd_extract_occ(const std::string& field_path, double tau,
                    const std::string& out_path) {
    SemanticDensityField field = io::with_input_file(
        field_path, [](std::istream& is) { return io::read_sdf(is); });
    OccupancyGrid grid = field.extract_occupancy(tau);
    io::with_output_file(out_path,
                         [&](std::ostream& os) { io::write_occ(os, grid); });
    std::int64_t empty = 0;
    for (auto v : grid.labels)
        if (v == grid.empty_label()) ++empty;
    std::cout << json{{"tau", tau},
                      {"voxels", grid.labels.size()},
                      {"empty_voxels", empty},
                      {"out", out_path}}
                     .dump()
              << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path) {
    OccupancyGrid pred = io::with_input_file(
        pred_path, [](std::istream& is) { return io::read_occ(is); });
    OccupancyGrid gt = io::with_input_file(
        gt_path, [](std::istream& is) { return io::read_occ(is); });
    int L = std::max(pred.num_classes, gt.num_classes);
    pred.num_classes = L;
    gt.num_classes = L;
    EvalReport rep = voxel_miou(pred, gt);
    std::cout << json{{"miou", rep.miou},
                      {"per_class_iou", rep.per_class_iou},
                      {"occupied_pred", rep.occupied_pred},
                      {"occupied_gt", rep.occupied_gt}}
                     .dump()
              << "\n";
    return kExitOk;
}

int cmd_check_grad(const json& cfg) {
    // small fixed setup: 4x4x4 field, 4 classes (+ free), 8 random rays
    GridDims dims{4, 4, 4};
    int L = 5;
    SemanticDensityField field(dims, L, Vec3{0, 0, 0}, 1.0);
    Rng rng = make_rng(cfg.at("trainer").at("seed").get<std::uint64_t>(), 0xfdc);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& v : field.density_params()) v = gauss(rng) * 0.5 - 0.5;
    for (auto& v : field.semantic_params()) v = gauss(rng) * 0.5;

    std::vector<Ray> rays;
    for (int i = 0; i < 8; ++i) {
        Ray r;
        r.origin = Vec3{uniform01(rng) * 4, uniform01(rng) * 4, uniform01(rng) * 4};
        double th = uniform01(rng) * 2 * std::numbers::pi;
        double ph = std::acos(2 * uniform01(rng) - 1);
        r.direction = Vec3{std::sin(ph) * std::cos(th), std::sin(ph) * std::sin(th),
                           std::cos(ph)};
        auto hit = grid_intersect(r, field.bounds());
        if (!hit) { --i; continue; }
        r.t_near = hit->first;
        r.t_far = hit->second;
        r.sem_label = int(uniform01(rng) * (L - 1));
        r.depth_label = 0.5 * (r.t_near + r.t_far);
        rays.push_back(r);
    }
    RenderConfig rcfg = parse_render_config(cfg);
    rcfg.jitter = false;
    LossConfig lcfg = parse_loss_config(cfg);
    FdReport rep = fd_check(field, rays, rcfg, lcfg, 1e-4);
    bool ok = rep.max_rel_error < 1e-4;
    std::cout << json{{"max_rel_error", rep.max_rel_error},
                      {"max_abs_error", rep.max_abs_error},
                      {"params_checked", rep.params_checked},
                      {"params_failed", rep.params_failed},
                      {"worst_density_index", rep.worst_density_index},
                      {"worst_semantic_index", rep.worst_semantic_index},
                      {"pass", ok}}
                     .dump()
              << "\n";
    return ok ? kExitOk : kExitNumeric;
}

int cmd_render(const std::string& field_path, const std::string& data_dir,
               int frame, int cam, const std::string& out_dir, const json& cfg) {
    SemanticDensityField field = io::with_input_file(
        field_path, [](std::istream& is) { return io::read_sdf(is); });
    SceneData data = load_scene_dir(data_dir);
    const Scene& scene = data.scene;
    if (frame < 0 || frame >= int(scene.gt_grids.size()))
        throw std::invalid_argument("render: frame out of range");
    if (cam < 0 || cam >= int(scene.rig.size()))
        throw std::invalid_argument("render: camera out of range");
    RenderConfig rcfg = parse_render_config(cfg);
    rcfg.jitter = false;
    const Pinhole& intr = scene.rig[cam].intrinsics;
    Pose cam_pose = scene.camera_pose(frame, cam);

    LabelImage img;
    img.width = intr.width;
    img.height = intr.height;
    img.sem.assign(size_t(intr.width) * intr.height,
                   std::uint8_t(scene.free_class()));
    img.depth.assign(size_t(intr.width) * intr.height, -1.0);
    for (int v = 0; v < intr.height; ++v)
        for (int u = 0; u < intr.width; ++u) {
            Ray r = pixel_ray(intr, cam_pose, u, v);
            auto hit = grid_intersect(r, field.bounds());
            if (!hit) continue;
            r.t_near = hit->first;
            r.t_far = hit->second;
            RenderOutput out =
                render_ray(field, r, rcfg, size_t(v) * intr.width + u, false);
            if (out.opacity < 0.5) continue;
            int best = 0;
            for (int l = 1; l < field.num_classes(); ++l)
                if (out.sem_pix[l] > out.sem_pix[best]) best = l;
            img.sem[size_t(v) * intr.width + u] = std::uint8_t(best);
            img.depth[size_t(v) * intr.width + u] = out.depth_pix;
        }
    fs::create_directories(out_dir);
    std::string stem = "render_frame_" + frame_tag(frame) + "_cam_" +
                       std::to_string(cam);
    io::with_output_file((fs::path(out_dir) / (stem + "_sem.pgm")).string(),
                         [&](std::ostream& os) { io::write_sem_pgm(os, img); });
    io::with_output_file((fs::path(out_dir) / (stem + "_depth.pgm")).string(),
                         [&](std::ostream& os) { io::write_depth_pgm(os, img); });
    io::with_output_file(
        (fs::path(out_dir) / (stem + "_sem.ppm")).string(),
        [&](std::ostream& os) { io::write_sem_ppm(os, img, scene.free_class()); });
    std::cout << json{{"out", out_dir}, {"frame", frame}, {"cam", cam}}.dump()
              << "\n";
    return kExitOk;
}

int cmd_info(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::invalid_argument("cannot open file: " + path);
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4)
        throw format_error(FormatErrorKind::Truncation, "file shorter than 4 bytes");
    is.seekg(0);
    std::string m(magic, 4);
    json out{{"file", path}, {"magic", m}};
    if (m == "SDF1") {
        SemanticDensityField f = io::read_sdf(is);
        out["dims"] = {f.dims().h, f.dims().w, f.dims().d};
        out["classes"] = f.num_classes();
        out["voxel_size"] = f.voxel_size();
        out["origin"] = {f.origin().x, f.origin().y, f.origin().z};
    } else if (m == "OCC1") {
        OccupancyGrid g = io::read_occ(is);
        out["dims"] = {g.dims.h, g.dims.w, g.dims.d};
        out["inferred_classes"] = g.num_classes;
    } else if (m == "P5\n" || m[0] == 'P') {
        out["kind"] = "PNM image";
    } else {
        throw format_error(FormatErrorKind::MagicMismatch, "unknown magic: " + m);
    }
    std::cout << out.dump() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semantic density field training from 2D labels"};
    app.require_subcommand(1);

    std::string spec_path, out_dir, config_path, data_dir, field_path, pred_path,
        gt_path, resume_path, info_path;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    double tau = 0.2;
    int frame = 0, cam = 0, workers = 0;
    bool ppm = false;

    auto* gen = app.add_subcommand("gen-scene", "generate a synthetic scene");
    gen->add_option("--spec", spec_path, "scene spec JSON (default: ablation profile)");
    gen->add_option("--out", out_dir, "output directory")->required();
    gen->add_option("--seed", seed, "rng seed");
    gen->add_flag("--ppm", ppm, "also write color-coded semantic PPMs");

    auto* train = app.add_subcommand("train", "optimize a field from 2D labels");
    train->add_option("--config", config_path, "config JSON");
    train->add_option("--data", data_dir, "gen-scene output directory")->required();
    train->add_option("--out", out_dir, "output directory")->required();
    train->add_option("--resume", resume_path, "checkpoint to resume from");
    train->add_option("--set", overrides, "config override key.path=value");
    train->add_option("--workers", workers, "worker threads");

    auto* ext = app.add_subcommand("extract-occ", "threshold a field to occupancy");
    ext->add_option("--field", field_path, "SDF1 file")->required();
    ext->add_option("--tau", tau, "density threshold");
    ext->add_option("--out", out_dir, "output OCC1 file")->required();

    auto* ev = app.add_subcommand("eval", "voxel mIoU between two OCC1 grids");
    ev->add_option("--pred", pred_path, "predicted OCC1")->required();
    ev->add_option("--gt", gt_path, "ground-truth OCC1")->required();

    auto* chk = app.add_subcommand("check-grad", "finite-difference gradient check");
    chk->add_option("--config", config_path, "config JSON");
    chk->add_option("--set", overrides, "config override key.path=value");

    auto* ren = app.add_subcommand("render", "render labels from a trained field");
    ren->add_option("--field", field_path, "SDF1 file")->required();
    ren->add_option("--data", data_dir, "gen-scene output directory")->required();
    ren->add_option("--frame", frame, "frame index");
    ren->add_option("--cam", cam, "camera index");
    ren->add_option("--out", out_dir, "output directory")->required();
    ren->add_option("--config", config_path, "config JSON");

    auto* info = app.add_subcommand("info", "describe a binary artifact");
    info->add_option("--file", info_path, "file to inspect")->required();

    auto* schema = app.add_subcommand("config-schema",
                                      "print every config key with its default");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : kExitInput;
    }

    try {
        if (gen->parsed()) return cmd_gen_scene(spec_path, out_dir, seed, ppm);
        if (train->parsed()) {
            json cfg = resolve_cli_config(config_path, overrides);
            if (workers > 0) cfg["trainer"]["workers"] = workers;
            return cmd_train(cfg, data_dir, out_dir, resume_path);
        }
        if (ext->parsed()) return cmd_extract_occ(field_path, tau, out_dir);
        if (ev->parsed()) return cmd_eval(pred_path, gt_path);
        if (chk->parsed())
            return cmd_check_grad(resolve_cli_config(config_path, overrides));
        if (ren->parsed())
            return cmd_render(field_path, data_dir, frame, cam, out_dir,
                              resolve_cli_config(config_path, overrides));
        if (info->parsed()) return cmd_info(info_path);
        if (schema->parsed()) {
            std::cout << default_config().dump(2) << "\n";
            return kExitOk;
        }
    } catch (const format_error& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const numeric_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::invalid_argument& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitInput;
}
