// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "occfield/errors.hpp"
#include "occfield/field.hpp"
#include "occfield/renderer.hpp"
#include "occfield/synthworld.hpp"

namespace occfield {

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct EvalReport {
    std::vector<double> per_class_iou;  // -1 for classes absent from both
    double miou = 0;
    double depth_abs_rel = 0;
    double depth_rmse = 0;
    double sem_pixel_accuracy = 0;
    std::int64_t occupied_pred = 0, occupied_gt = 0;
};

// Per-class IoU over semantic labels; the empty label is excluded from the
// mean, as are classes absent from both grids.
inline EvalReport voxel_miou(const OccupancyGrid& pred, const OccupancyGrid& gt) {
    if (!(pred.dims == gt.dims))
        throw std::invalid_argument("voxel_miou: dimension mismatch");
    if (pred.num_classes != gt.num_classes)
        throw std::invalid_argument("voxel_miou: class count mismatch");
    int L = pred.num_classes;
    std::vector<std::int64_t> inter(L, 0), uni(L, 0);
    EvalReport rep;
    for (size_t i = 0; i < pred.labels.size(); ++i) {
        int p = pred.labels[i], g = gt.labels[i];
        if (p != pred.empty_label()) ++rep.occupied_pred;
        if (g != gt.empty_label()) ++rep.occupied_gt;
        if (p == g && p != pred.empty_label()) ++inter[p];
        if (p != pred.empty_label()) ++uni[p];
        if (g != gt.empty_label()) ++uni[g];
        if (p == g && p != pred.empty_label()) --uni[p];  // counted twice above
    }
    rep.per_class_iou.assign(L, -1.0);
    double sum = 0;
    int present = 0;
    for (int c = 0; c < L; ++c) {
        if (uni[c] == 0) continue;
        rep.per_class_iou[c] = double(inter[c]) / double(uni[c]);
        sum += rep.per_class_iou[c];
        ++present;
    }
    rep.miou = present ? sum / present : 0.0;
    return rep;
}

// Rendered-label sanity metrics for one frame: per pixel, deterministic
// rendering compared against the oracle labels over all cameras.
// Pixels with opacity below opacity_free predict the free class.
inline EvalReport render_eval(const SemanticDensityField& field, const Scene& scene,
                              int frame, const RenderConfig& rcfg,
                              double opacity_free = 0.5) {
    RenderConfig cfg = rcfg;
    cfg.jitter = false;
    std::int64_t correct = 0, total = 0, depth_n = 0;
    double abs_rel = 0, sq = 0;
    for (size_t cam = 0; cam < scene.rig.size(); ++cam) {
        LabelImage gt = raycast_labels(scene, frame, int(cam));
        Pose cam_pose = scene.camera_pose(frame, int(cam));
        const Pinhole& intr = scene.rig[cam].intrinsics;
        for (int v = 0; v < intr.height; ++v)
            for (int u = 0; u < intr.width; ++u) {
                Ray r = pixel_ray(intr, cam_pose, u, v);
                auto hit = grid_intersect(r, field.bounds());
                int pred_class = scene.free_class();
                double pred_depth = -1;
                if (hit) {
                    r.t_near = hit->first;
                    r.t_far = hit->second;
                    RenderOutput out = render_ray(field, r, cfg,
                                                  size_t(v) * intr.width + u, false);
                    if (out.opacity >= opacity_free) {
                        pred_class = 0;
                        for (int l = 1; l < field.num_classes(); ++l)
                            if (out.sem_pix[l] > out.sem_pix[pred_class])
                                pred_class = l;
                        pred_depth = out.depth_pix;
                    }
                }
                ++total;
                if (pred_class == gt.sem_at(u, v)) ++correct;
                double gd = gt.depth_at(u, v);
                if (gd > 0 && pred_depth > 0) {
                    abs_rel += std::abs(pred_depth - gd) / gd;
                    sq += (pred_depth - gd) * (pred_depth - gd);
                    ++depth_n;
                }
            }
    }
    EvalReport rep;
    rep.sem_pixel_accuracy = total ? double(correct) / total : 0.0;
    rep.depth_abs_rel = depth_n ? abs_rel / depth_n : 0.0;
    rep.depth_rmse = depth_n ? std::sqrt(sq / depth_n) : 0.0;
    return rep;
}

// ---------------------------------------------------------------------------
// Binary formats (all little-endian)
// ---------------------------------------------------------------------------

namespace io {

inline constexpr std::int64_t kMaxDim = 1 << 20;

inline void write_bytes(std::ostream& os, const void* p, size_t n) {
    os.write(static_cast<const char*>(p), std::streamsize(n));
}
inline void read_bytes(std::istream& is, void* p, size_t n, const char* what) {
    is.read(static_cast<char*>(p), std::streamsize(n));
    if (size_t(is.gcount()) != n)
        throw format_error(FormatErrorKind::Truncation,
                           std::string("truncated ") + what + ": expected " +
                               std::to_string(n) + " bytes, got " +
                               std::to_string(is.gcount()));
}
template <class T>
void write_pod(std::ostream& os, T v) { write_bytes(os, &v, sizeof(T)); }
template <class T>
T read_pod(std::istream& is, const char* what) {
    T v;
    read_bytes(is, &v, sizeof(T), what);
    return v;
}
inline void expect_magic(std::istream& is, const char (&magic)[5]) {
    char got[4];
    read_bytes(is, got, 4, "magic");
    if (std::memcmp(got, magic, 4) != 0)
        throw format_error(FormatErrorKind::MagicMismatch,
                           std::string("magic mismatch: expected ") + magic);
}
inline void check_dim(std::uint32_t v, const char* name) {
    if (v < 1 || std::int64_t(v) > kMaxDim)
        throw format_error(FormatErrorKind::DimOverflow,
                           std::string("dimension out of range: ") + name + "=" +
                               std::to_string(v));
}

inline void write_f32_array(std::ostream& os, const std::vector<double>& v) {
    std::vector<float> buf(v.begin(), v.end());
    write_bytes(os, buf.data(), buf.size() * sizeof(float));
}
inline void read_f32_array(std::istream& is, std::vector<double>& v, size_t n,
                           const char* what) {
    std::vector<float> buf(n);
    read_bytes(is, buf.data(), n * sizeof(float), what);
    v.assign(buf.begin(), buf.end());
}

// SDF1: magic, u32 H W D L, f64 origin[3], f64 voxel_size,
// f32 density[H*W*D] (x-major), f32 semantic[H*W*D*L] (class fastest).
inline void write_sdf(std::ostream& os, const SemanticDensityField& field) {
    write_bytes(os, "SDF1", 4);
    write_pod<std::uint32_t>(os, std::uint32_t(field.dims().h));
    write_pod<std::uint32_t>(os, std::uint32_t(field.dims().w));
    write_pod<std::uint32_t>(os, std::uint32_t(field.dims().d));
    write_pod<std::uint32_t>(os, std::uint32_t(field.num_classes()));
    write_pod<double>(os, field.origin().x);
    write_pod<double>(os, field.origin().y);
    write_pod<double>(os, field.origin().z);
    write_pod<double>(os, field.voxel_size());
    write_f32_array(os, field.density_params());
    write_f32_array(os, field.semantic_params());
}

inline SemanticDensityField read_sdf(std::istream& is) {
    expect_magic(is, "SDF1");
    std::uint32_t h = read_pod<std::uint32_t>(is, "H");
    std::uint32_t w = read_pod<std::uint32_t>(is, "W");
    std::uint32_t d = read_pod<std::uint32_t>(is, "D");
    std::uint32_t l = read_pod<std::uint32_t>(is, "L");
    check_dim(h, "H"); check_dim(w, "W"); check_dim(d, "D"); check_dim(l, "L");
    Vec3 origin{read_pod<double>(is, "origin"), read_pod<double>(is, "origin"),
                read_pod<double>(is, "origin")};
    double vs = read_pod<double>(is, "voxel_size");
    if (!(vs > 0))
        throw format_error(FormatErrorKind::BadHeader, "nonpositive voxel_size");
    SemanticDensityField field(GridDims{int(h), int(w), int(d)}, int(l), origin, vs);
    size_t n = size_t(h) * w * d;
    read_f32_array(is, field.density_params(), n, "density");
    read_f32_array(is, field.semantic_params(), n * l, "semantic");
    return field;
}

// OCC1: magic, u32 H W D, u8 labels (x-major). The class count is not part
// of the format; pass num_classes when known, else it is inferred from the
// maximum label (assuming the empty label occurs).
inline void write_occ(std::ostream& os, const OccupancyGrid& grid) {
    write_bytes(os, "OCC1", 4);
    write_pod<std::uint32_t>(os, std::uint32_t(grid.dims.h));
    write_pod<std::uint32_t>(os, std::uint32_t(grid.dims.w));
    write_pod<std::uint32_t>(os, std::uint32_t(grid.dims.d));
    write_bytes(os, grid.labels.data(), grid.labels.size());
}

inline OccupancyGrid read_occ(std::istream& is, int num_classes = -1) {
    expect_magic(is, "OCC1");
    std::uint32_t h = read_pod<std::uint32_t>(is, "H");
    std::uint32_t w = read_pod<std::uint32_t>(is, "W");
    std::uint32_t d = read_pod<std::uint32_t>(is, "D");
    check_dim(h, "H"); check_dim(w, "W"); check_dim(d, "D");
    OccupancyGrid grid(GridDims{int(h), int(w), int(d)}, 2);
    read_bytes(is, grid.labels.data(), grid.labels.size(), "labels");
    if (num_classes < 0) {
        int mx = 0;
        for (auto v : grid.labels) mx = std::max<int>(mx, v);
        num_classes = std::max(2, mx);
    }
    grid.num_classes = num_classes;
    return grid;
}

// MOM1: magic, u32 H W D L, f32 first/second moments over density then
// semantic parameters, u64 iteration, u64 seed.
struct Moments {
    GridDims dims;
    int num_classes = 2;
    std::vector<double> m;  // (1 + L) * H*W*D, density-major
    std::vector<double> v;
    std::uint64_t iteration = 0;
    std::uint64_t seed = 0;
};

inline void write_mom(std::ostream& os, const Moments& mom) {
    write_bytes(os, "MOM1", 4);
    write_pod<std::uint32_t>(os, std::uint32_t(mom.dims.h));
    write_pod<std::uint32_t>(os, std::uint32_t(mom.dims.w));
    write_pod<std::uint32_t>(os, std::uint32_t(mom.dims.d));
    write_pod<std::uint32_t>(os, std::uint32_t(mom.num_classes));
    write_f32_array(os, mom.m);
    write_f32_array(os, mom.v);
    write_pod<std::uint64_t>(os, mom.iteration);
    write_pod<std::uint64_t>(os, mom.seed);
}

inline Moments read_mom(std::istream& is) {
    expect_magic(is, "MOM1");
    Moments mom;
    std::uint32_t h = read_pod<std::uint32_t>(is, "H");
    std::uint32_t w = read_pod<std::uint32_t>(is, "W");
    std::uint32_t d = read_pod<std::uint32_t>(is, "D");
    std::uint32_t l = read_pod<std::uint32_t>(is, "L");
    check_dim(h, "H"); check_dim(w, "W"); check_dim(d, "D"); check_dim(l, "L");
    mom.dims = GridDims{int(h), int(w), int(d)};
    mom.num_classes = int(l);
    size_t n = size_t(h) * w * d * (1 + l);
    read_f32_array(is, mom.m, n, "first moments");
    read_f32_array(is, mom.v, n, "second moments");
    mom.iteration = read_pod<std::uint64_t>(is, "iteration");
    mom.seed = read_pod<std::uint64_t>(is, "seed");
    return mom;
}

// ---------------------------------------------------------------------------
// PGM / PPM label images
// ---------------------------------------------------------------------------

inline void write_sem_pgm(std::ostream& os, const LabelImage& img) {
    os << "P5\n" << img.width << " " << img.height << "\n255\n";
    write_bytes(os, img.sem.data(), img.sem.size());
}

// depth in millimeters, big-endian u16, 0 = invalid
inline void write_depth_pgm(std::ostream& os, const LabelImage& img) {
    os << "P5\n" << img.width << " " << img.height << "\n65535\n";
    for (double d : img.depth) {
        std::uint16_t mm = 0;
        if (d >= 0) {
            double v = std::round(d * 1000.0);
            mm = std::uint16_t(std::min(v, 65535.0));
        }
        unsigned char b[2] = {(unsigned char)(mm >> 8), (unsigned char)(mm & 0xff)};
        write_bytes(os, b, 2);
    }
}

namespace detail {
inline void read_pnm_header(std::istream& is, const char* magic, int& w, int& h,
                            int& maxval) {
    std::string m;
    is >> m;
    if (m != magic)
        throw format_error(FormatErrorKind::MagicMismatch,
                           "PNM magic mismatch: expected " + std::string(magic));
    is >> w >> h >> maxval;
    if (!is || w < 1 || h < 1 || w > io::kMaxDim || h > io::kMaxDim)
        throw format_error(FormatErrorKind::BadHeader, "bad PNM header");
    is.get();  // single whitespace after maxval
}
}  // namespace detail

inline LabelImage read_sem_pgm(std::istream& is) {
    int w, h, maxval;
    detail::read_pnm_header(is, "P5", w, h, maxval);
    if (maxval != 255)
        throw format_error(FormatErrorKind::BadHeader, "semantic PGM must be 8-bit");
    LabelImage img;
    img.width = w;
    img.height = h;
    img.sem.resize(size_t(w) * h);
    read_bytes(is, img.sem.data(), img.sem.size(), "PGM pixels");
    img.depth.assign(size_t(w) * h, -1.0);
    return img;
}

// Merges depth into an existing label image (dims must match).
inline void read_depth_pgm(std::istream& is, LabelImage& img) {
    int w, h, maxval;
    detail::read_pnm_header(is, "P5", w, h, maxval);
    if (maxval != 65535)
        throw format_error(FormatErrorKind::BadHeader, "depth PGM must be 16-bit");
    if (w != img.width || h != img.height)
        throw format_error(FormatErrorKind::BadHeader, "depth/semantic size mismatch");
    std::vector<unsigned char> buf(size_t(w) * h * 2);
    read_bytes(is, buf.data(), buf.size(), "PGM pixels");
    for (size_t i = 0; i < size_t(w) * h; ++i) {
        std::uint16_t mm = std::uint16_t((buf[2 * i] << 8) | buf[2 * i + 1]);
        img.depth[i] = mm == 0 ? -1.0 : mm / 1000.0;
    }
}

// Fixed palette for human inspection of semantic images.
inline std::array<unsigned char, 3> class_color(int c) {
    static const std::array<std::array<unsigned char, 3>, 10> palette = {{
        {128, 64, 128}, {220, 20, 60}, {0, 0, 142}, {250, 170, 30},
        {107, 142, 35}, {70, 70, 70}, {244, 35, 232}, {152, 251, 152},
        {0, 60, 100}, {119, 11, 32},
    }};
    if (c < 0) return {0, 0, 0};
    return palette[size_t(c) % palette.size()];
}

inline void write_sem_ppm(std::ostream& os, const LabelImage& img, int free_class) {
    os << "P6\n" << img.width << " " << img.height << "\n255\n";
    for (auto s : img.sem) {
        std::array<unsigned char, 3> rgb =
            (s == free_class) ? std::array<unsigned char, 3>{30, 30, 30}
                              : class_color(s);
        write_bytes(os, rgb.data(), 3);
    }
}

inline std::vector<std::array<unsigned char, 3>> read_ppm(std::istream& is, int& w,
                                                          int& h) {
    int maxval;
    detail::read_pnm_header(is, "P6", w, h, maxval);
    if (maxval != 255)
        throw format_error(FormatErrorKind::BadHeader, "PPM must be 8-bit");
    std::vector<std::array<unsigned char, 3>> px(size_t(w) * h);
    read_bytes(is, px.data(), px.size() * 3, "PPM pixels");
    return px;
}

// File-level helpers.
template <class Fn>
auto with_input_file(const std::string& path, Fn&& fn) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::invalid_argument("cannot open file: " + path);
    return fn(is);
}
template <class Fn>
void with_output_file(const std::string& path, Fn&& fn) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::invalid_argument("cannot open file for writing: " + path);
    fn(os);
}

}  // namespace io
}  // namespace occfield
