// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "occfield/geometry.hpp"
#include "occfield/rng.hpp"
#include "occfield/synthworld.hpp"

namespace occfield {

struct RayPoolConfig {
    int m_aux = 6;  // adjacent frames contributing auxiliary rays (even)
    int rays_per_batch = 4096;
    double lambda_s = 0.5;    // class-balance smoothing exponent
    double lambda_dyn = 0.1;  // auxiliary dynamic-class coefficient
    double lambda_adj = 0.7;  // auxiliary static-class coefficient
    double w_max = 4.0;       // clamp on the balance weight; large values let rare
                              // classes crowd out common ones in small batches
    std::vector<int> dynamic_classes;
    bool with_replacement = true;
    bool use_balance = true;   // W_b active
    bool use_temporal = true;  // W_t active

    bool is_dynamic(int class_id) const {
        return std::find(dynamic_classes.begin(), dynamic_classes.end(), class_id) !=
               dynamic_classes.end();
    }
};

struct RayPool {
    std::vector<Ray> rays;
    std::vector<std::int64_t> class_counts;  // per label class, full pool
    RayPoolConfig config;

    std::int64_t max_class_count() const {
        std::int64_t m = 0;
        for (auto c : class_counts) m = std::max(m, c);
        return m;
    }
};

// Class balance: exp(lambda_s (max(M)/N(C(r)) - 1)),
// clamped to [1, w_max].
inline double balance_weight(const RayPool& pool, const Ray& ray) {
    if (!pool.config.use_balance || pool.config.lambda_s == 0.0) return 1.0;
    std::int64_t n = pool.class_counts[ray.sem_label];
    if (n < 1) throw std::invalid_argument("balance_weight: empty class count");
    double w = std::exp(pool.config.lambda_s *
                        (double(pool.max_class_count()) / double(n) - 1.0));
    return std::clamp(w, 1.0, pool.config.w_max);
}

// Temporal purification: current-frame rays keep weight 1; auxiliary rays
// get lambda_dyn (dynamic classes) or lambda_adj (static).
inline double temporal_weight(const Ray& ray, const RayPoolConfig& cfg) {
    if (!cfg.use_temporal) return 1.0;
    if (ray.frame_offset == 0) return 1.0;
    return cfg.is_dynamic(ray.sem_label) ? cfg.lambda_dyn : cfg.lambda_adj;
}

// Build the multi-frame pool: per-pixel rays for the current frame plus the
// m_aux adjacent frames, auxiliary rays transformed into the current ego
// frame, everything clipped to the field box and weighted.
inline RayPool build_pool(const std::vector<Pose>& ego_trajectory,
                          const std::vector<std::vector<LabelImage>>& labels,
                          const std::vector<CameraMount>& rig, int current_index,
                          const Aabb& field_box, const RayPoolConfig& cfg) {
    if (cfg.m_aux < 0 || cfg.m_aux % 2 != 0)
        throw std::invalid_argument("build_pool: m_aux must be even and >= 0");
    int half = cfg.m_aux / 2;
    for (int off = -half; off <= half; ++off) {
        int f = current_index + off;
        if (f < 0 || f >= int(ego_trajectory.size()))
            throw std::invalid_argument("build_pool: missing frame " +
                                        std::to_string(f));
        if (labels[f].size() != rig.size())
            throw std::invalid_argument("build_pool: camera/label mismatch");
    }

    RayPool pool;
    pool.config = cfg;
    const Pose& ego_cur = ego_trajectory[current_index];
    for (int off = -half; off <= half; ++off) {
        int f = current_index + off;
        for (size_t c = 0; c < rig.size(); ++c) {
            const LabelImage& img = labels[f][c];
            for (int v = 0; v < img.height; ++v)
                for (int u = 0; u < img.width; ++u) {
                    Ray r = pixel_ray(rig[c].intrinsics, rig[c].mount, u, v);
                    r.frame_offset = off;
                    r.sem_label = img.sem_at(u, v);
                    r.depth_label = img.depth_at(u, v);
                    if (off != 0)
                        r = transform_ray(r, ego_trajectory[f], ego_cur);
                    auto hit = grid_intersect(r, field_box);
                    if (!hit) continue;  // misses the field box: dropped
                    r.t_near = hit->first;
                    r.t_far = hit->second;
                    pool.rays.push_back(r);
                }
        }
    }
    if (pool.rays.empty()) throw std::invalid_argument("build_pool: empty pool");

    int num_classes = 0;
    for (const auto& r : pool.rays) num_classes = std::max(num_classes, r.sem_label + 1);
    pool.class_counts.assign(num_classes, 0);
    for (const auto& r : pool.rays) ++pool.class_counts[r.sem_label];
    for (auto& r : pool.rays)
        r.weight = balance_weight(pool, r) * temporal_weight(r, cfg);
    return pool;
}

// Draw a fixed-size batch with probability proportional to W.
inline std::vector<Ray> sample_batch(const RayPool& pool, size_t n, Rng& rng) {
    if (n < 1) throw std::invalid_argument("sample_batch: n must be >= 1");
    if (pool.rays.empty()) throw std::invalid_argument("sample_batch: empty pool");

    std::vector<Ray> out;
    out.reserve(n);
    if (pool.config.with_replacement) {
        std::vector<double> prefix(pool.rays.size());
        double acc = 0;
        for (size_t i = 0; i < pool.rays.size(); ++i) {
            acc += pool.rays[i].weight;
            prefix[i] = acc;
        }
        if (acc <= 0) throw std::invalid_argument("sample_batch: all weights zero");
        for (size_t i = 0; i < n; ++i) {
            double u = uniform01(rng) * acc;
            size_t k = size_t(std::lower_bound(prefix.begin(), prefix.end(), u) -
                              prefix.begin());
            out.push_back(pool.rays[std::min(k, pool.rays.size() - 1)]);
        }
    } else {
        // Efraimidis-Spirakis weighted sampling without replacement
        if (n > pool.rays.size())
            throw std::invalid_argument("sample_batch: n exceeds pool size");
        std::vector<std::pair<double, size_t>> keys;
        keys.reserve(pool.rays.size());
        for (size_t i = 0; i < pool.rays.size(); ++i) {
            double w = pool.rays[i].weight;
            if (w <= 0) continue;
            double u = uniform01(rng);
            keys.emplace_back(-std::log(u) / w, i);
        }
        if (keys.size() < n)
            throw std::invalid_argument("sample_batch: too few positive weights");
        std::partial_sort(keys.begin(), keys.begin() + n, keys.end());
        for (size_t i = 0; i < n; ++i) out.push_back(pool.rays[keys[i].second]);
    }
    return out;
}

}  // namespace occfield
