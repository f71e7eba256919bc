// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "occfield/field.hpp"
#include "occfield/renderer.hpp"

namespace occfield {

struct LossConfig {
    double w_seg = 1.0;
    double w_depth = 1.0;
    double w_dist = 0.01;
    double w_tv = 0.01;
    double lambda_var = 0.85;   // SILog variance coefficient
    double opacity_min = 0.05;  // depth term masked below this opacity
};

struct LossReport {
    double l_seg = 0, l_depth = 0, l_dist = 0, l_tv = 0, total = 0;
    size_t seg_count = 0, depth_count = 0, dist_count = 0;
};

inline double log_sum_exp(const std::vector<double>& v) {
    double m = *std::max_element(v.begin(), v.end());
    double s = 0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

// Cross-entropy on accumulated logits: -log softmax(sem_pix)[label].
inline double seg_loss(const std::vector<double>& sem_pix, int label) {
    if (label < 0 || label >= static_cast<int>(sem_pix.size()))
        throw std::invalid_argument("seg_loss: label out of range");
    return log_sum_exp(sem_pix) - sem_pix[label];
}

// SILog over log-depth residuals d_i = ln pred_i - ln gt_i:
// (1/n) sum d^2 - lambda_var ((1/n) sum d)^2.
inline double depth_loss(const std::vector<double>& pred,
                         const std::vector<double>& gt, double lambda_var) {
    if (pred.size() != gt.size() || pred.empty())
        throw std::invalid_argument("depth_loss: size mismatch or empty");
    double s = 0, s2 = 0;
    size_t n = pred.size();
    for (size_t i = 0; i < n; ++i) {
        if (pred[i] <= 0 || gt[i] <= 0)
            throw std::invalid_argument("depth_loss: nonpositive depth");
        double d = std::log(pred[i]) - std::log(gt[i]);
        s += d;
        s2 += d * d;
    }
    double mean = s / n;
    return s2 / n - lambda_var * mean * mean;
}

// mip-NeRF 360 distortion over per-sample intervals [t_k, t_k + beta_k]:
// sum_ij w_i w_j |m_i - m_j| + (1/3) sum_i w_i^2 beta_i   (m = midpoints).
// O(K) via prefix sums over the ascending midpoints.
inline double distortion_loss(const SampleSet& samples,
                              const std::vector<double>& weights) {
    if (weights.size() != samples.size())
        throw std::invalid_argument("distortion_loss: weight/sample mismatch");
    size_t n = weights.size();
    double cross = 0, self = 0, wp = 0, wmp = 0;
    for (size_t i = 0; i < n; ++i) {
        double m = samples.t_values[i] + 0.5 * samples.deltas[i];
        cross += 2.0 * weights[i] * (m * wp - wmp);
        self += weights[i] * weights[i] * samples.deltas[i];
        wp += weights[i];
        wmp += weights[i] * m;
    }
    return cross + self / 3.0;
}

// Gradient of distortion_loss with respect to the weights.
inline std::vector<double> distortion_loss_grad_w(const SampleSet& samples,
                                                  const std::vector<double>& weights) {
    size_t n = weights.size();
    std::vector<double> m(n), g(n, 0.0);
    for (size_t i = 0; i < n; ++i)
        m[i] = samples.t_values[i] + 0.5 * samples.deltas[i];
    double wp = 0, wmp = 0;
    for (size_t i = 0; i < n; ++i) {
        g[i] = 2.0 * (m[i] * wp - wmp);
        wp += weights[i];
        wmp += weights[i] * m[i];
    }
    double ws = 0, wms = 0;
    for (size_t i = n; i-- > 0;) {
        g[i] += 2.0 * (wms - m[i] * ws) + (2.0 / 3.0) * weights[i] * samples.deltas[i];
        ws += weights[i];
        wms += weights[i] * m[i];
    }
    return g;
}

// Mean squared difference of pre-activation density over axis-adjacent pairs.
inline double tv_loss(const SemanticDensityField& field) {
    const auto& d = field.density_params();
    const GridDims& dims = field.dims();
    std::int64_t pairs = 0;
    double sum = 0;
    auto idx = [&](int x, int y, int z) { return field.voxel_index(x, y, z); };
    for (int x = 0; x < dims.h; ++x)
        for (int y = 0; y < dims.w; ++y)
            for (int z = 0; z < dims.d; ++z) {
                double v = d[idx(x, y, z)];
                if (x + 1 < dims.h) { double e = v - d[idx(x + 1, y, z)]; sum += e * e; ++pairs; }
                if (y + 1 < dims.w) { double e = v - d[idx(x, y + 1, z)]; sum += e * e; ++pairs; }
                if (z + 1 < dims.d) { double e = v - d[idx(x, y, z + 1)]; sum += e * e; ++pairs; }
            }
    return pairs > 0 ? sum / pairs : 0.0;
}

inline std::int64_t tv_pair_count(const GridDims& dims) {
    std::int64_t h = dims.h, w = dims.w, d = dims.d;
    return (h - 1) * w * d + h * (w - 1) * d + h * w * (d - 1);
}

// Weighted total over a batch. Per-term means: seg and distortion over all
// rays, depth over rays with a valid label and opacity >= opacity_min.
// `weights_per_sample` is taken from the retained render intermediates.
inline LossReport total_loss(const std::vector<RenderOutput>& renders,
                             const std::vector<Ray>& rays,
                             const std::vector<SampleSet>& samples,
                             const SemanticDensityField& field,
                             const LossConfig& cfg) {
    if (renders.empty() || renders.size() != rays.size() ||
        samples.size() != rays.size())
        throw std::invalid_argument("total_loss: empty or misaligned batch");
    LossReport rep;
    std::vector<double> dpred, dgt;
    for (size_t i = 0; i < renders.size(); ++i) {
        rep.l_seg += seg_loss(renders[i].sem_pix, rays[i].sem_label);
        ++rep.seg_count;
        std::vector<double> w(renders[i].per_sample.size());
        for (size_t k = 0; k < w.size(); ++k) w[k] = renders[i].per_sample[k].weight;
        rep.l_dist += distortion_loss(samples[i], w);
        ++rep.dist_count;
        if (rays[i].has_depth() && renders[i].opacity >= cfg.opacity_min) {
            dpred.push_back(renders[i].depth_pix);
            dgt.push_back(rays[i].depth_label);
        }
    }
    rep.l_seg /= rep.seg_count;
    rep.l_dist /= rep.dist_count;
    rep.depth_count = dpred.size();
    rep.l_depth = dpred.empty() ? 0.0 : depth_loss(dpred, dgt, cfg.lambda_var);
    rep.l_tv = tv_loss(field);
    rep.total = cfg.w_seg * rep.l_seg + cfg.w_depth * rep.l_depth +
                cfg.w_dist * rep.l_dist + cfg.w_tv * rep.l_tv;
    return rep;
}

}  // namespace occfield
