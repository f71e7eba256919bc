// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "occfield/geometry.hpp"

namespace occfield {

inline double softplus(double x) {
    // log1p(exp(x)) with the usual overflow guard
    if (x > 30.0) return x;
    return std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

struct GridDims {
    int h = 1, w = 1, d = 1;
    std::int64_t count() const {
        return std::int64_t(h) * w * d;
    }
    bool operator==(const GridDims&) const = default;
};

// Discrete semantic label volume; label == num_classes means "empty".
struct OccupancyGrid {
    GridDims dims;
    int num_classes = 2;  // L; valid labels are [0, L], L = empty
    std::vector<std::uint8_t> labels;

    OccupancyGrid() = default;
    OccupancyGrid(GridDims dims_, int num_classes_)
        : dims(dims_), num_classes(num_classes_),
          labels(static_cast<size_t>(dims_.count()), std::uint8_t(num_classes_)) {}

    std::int64_t index(int x, int y, int z) const {
        return (std::int64_t(x) * dims.w + y) * dims.d + z;
    }
    std::uint8_t& at(int x, int y, int z) { return labels[index(x, y, z)]; }
    std::uint8_t at(int x, int y, int z) const { return labels[index(x, y, z)]; }
    int empty_label() const { return num_classes; }
};

struct TrilinearRecord {
    std::array<std::int64_t, 8> corner;  // linear voxel indices
    std::array<double, 8> weight;
    double density_pre;  // interpolated pre-activation density
};

struct FieldQuery {
    double sigma = 0;
    std::vector<double> sem_logits;
    TrilinearRecord interp{};
};

// Explicit Semantic Density Field: per-voxel pre-activation density and
// semantic logits, optimized directly.
class SemanticDensityField {
public:
    SemanticDensityField() = default;
    SemanticDensityField(GridDims dims, int num_classes, Vec3 origin,
                         double voxel_size, double density_init = -5.0,
                         double logit_init = 0.0)
        : dims_(dims), num_classes_(num_classes), origin_(origin),
          voxel_size_(voxel_size) {
        if (dims.h < 1 || dims.w < 1 || dims.d < 1)
            throw std::invalid_argument("field: dims components must be >= 1");
        if (voxel_size <= 0)
            throw std::invalid_argument("field: voxel_size must be > 0");
        if (num_classes < 2)
            throw std::invalid_argument("field: need at least 2 classes");
        density_params_.assign(static_cast<size_t>(dims.count()), density_init);
        semantic_params_.assign(static_cast<size_t>(dims.count()) * num_classes,
                                logit_init);
    }

    const GridDims& dims() const { return dims_; }
    int num_classes() const { return num_classes_; }
    const Vec3& origin() const { return origin_; }
    double voxel_size() const { return voxel_size_; }

    std::vector<double>& density_params() { return density_params_; }
    const std::vector<double>& density_params() const { return density_params_; }
    std::vector<double>& semantic_params() { return semantic_params_; }
    const std::vector<double>& semantic_params() const { return semantic_params_; }

    Aabb bounds() const {
        Vec3 ext{dims_.h * voxel_size_, dims_.w * voxel_size_, dims_.d * voxel_size_};
        return Aabb(origin_, origin_ + ext);
    }

    std::int64_t voxel_index(int x, int y, int z) const {
        return (std::int64_t(x) * dims_.w + y) * dims_.d + z;
    }
    Vec3 voxel_center(int x, int y, int z) const {
        return {origin_.x + (x + 0.5) * voxel_size_,
                origin_.y + (y + 0.5) * voxel_size_,
                origin_.z + (z + 0.5) * voxel_size_};
    }

    double sigma_at_voxel(int x, int y, int z) const {
        return softplus(density_params_[voxel_index(x, y, z)]);
    }
    const double* logits_at_voxel(int x, int y, int z) const {
        return &semantic_params_[voxel_index(x, y, z) * num_classes_];
    }

    // Trilinear interpolation from the 8 surrounding voxel centers.
    // Density is interpolated pre-activation, then passed through softplus.
    // If nearest is set, collapses to a one-hot on the closest center.
    FieldQuery query(const Vec3& p, bool nearest = false) const {
        if (!bounds().contains(p, 1e-12))
            throw std::invalid_argument("field::query: point outside bounds");
        // continuous voxel coordinates relative to the center lattice
        double gx = (p.x - origin_.x) / voxel_size_ - 0.5;
        double gy = (p.y - origin_.y) / voxel_size_ - 0.5;
        double gz = (p.z - origin_.z) / voxel_size_ - 0.5;
        auto split = [](double g, int n) {
            int i0 = static_cast<int>(std::floor(g));
            double f = g - i0;
            if (i0 < 0) { i0 = 0; f = 0.0; }           // clamp outside center lattice
            if (i0 >= n - 1) { i0 = n - 1; f = 0.0; }  // degenerate upper cell
            return std::pair<int, double>(i0, f);
        };
        auto [x0, fx] = split(gx, dims_.h);
        auto [y0, fy] = split(gy, dims_.w);
        auto [z0, fz] = split(gz, dims_.d);
        if (nearest) {
            fx = fx >= 0.5 ? 1.0 : 0.0;
            fy = fy >= 0.5 ? 1.0 : 0.0;
            fz = fz >= 0.5 ? 1.0 : 0.0;
        }
        int x1 = std::min(x0 + 1, dims_.h - 1);
        int y1 = std::min(y0 + 1, dims_.w - 1);
        int z1 = std::min(z0 + 1, dims_.d - 1);

        FieldQuery q;
        q.sem_logits.assign(num_classes_, 0.0);
        const int xs[2] = {x0, x1}, ys[2] = {y0, y1}, zs[2] = {z0, z1};
        const double wx[2] = {1 - fx, fx}, wy[2] = {1 - fy, fy}, wz[2] = {1 - fz, fz};
        double dens = 0;
        int c = 0;
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
                for (int e = 0; e < 2; ++e, ++c) {
                    double wgt = wx[a] * wy[b] * wz[e];
                    std::int64_t idx = voxel_index(xs[a], ys[b], zs[e]);
                    q.interp.corner[c] = idx;
                    q.interp.weight[c] = wgt;
                    if (wgt == 0.0) continue;
                    dens += wgt * density_params_[idx];
                    const double* lg = &semantic_params_[idx * num_classes_];
                    for (int l = 0; l < num_classes_; ++l)
                        q.sem_logits[l] += wgt * lg[l];
                }
        q.interp.density_pre = dens;
        q.sigma = softplus(dens);
        return q;
    }

    // Occupancy extraction: per voxel center, no interpolation.
    OccupancyGrid extract_occupancy(double tau) const {
        OccupancyGrid out(dims_, num_classes_);
        for (int x = 0; x < dims_.h; ++x)
            for (int y = 0; y < dims_.w; ++y)
                for (int z = 0; z < dims_.d; ++z) {
                    std::int64_t idx = voxel_index(x, y, z);
                    if (softplus(density_params_[idx]) < tau) {
                        out.labels[idx] = std::uint8_t(num_classes_);
                        continue;
                    }
                    const double* lg = &semantic_params_[idx * num_classes_];
                    int best = 0;
                    for (int l = 1; l < num_classes_; ++l)
                        if (lg[l] > lg[best]) best = l;
                    out.labels[idx] = std::uint8_t(best);
                }
        return out;
    }

private:
    GridDims dims_;
    int num_classes_ = 2;
    Vec3 origin_;
    double voxel_size_ = 1.0;
    std::vector<double> density_params_;
    std::vector<double> semantic_params_;
};

inline SemanticDensityField init_field(GridDims dims, int num_classes, Vec3 origin,
                                       double voxel_size, double density_init = -5.0,
                                       double logit_init = 0.0) {
    return SemanticDensityField(dims, num_classes, origin, voxel_size, density_init,
                                logit_init);
}

}  // namespace occfield
