// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "occfield/field.hpp"
#include "occfield/geometry.hpp"
#include "occfield/parallel.hpp"
#include "occfield/rng.hpp"

namespace occfield {

enum class SamplerKind { Unified, Hierarchical };

struct SampleSet {
    std::vector<double> t_values;  // ascending, inside (t_near, t_far)
    std::vector<double> deltas;    // beta_k; last one closes to t_far
    SamplerKind strategy = SamplerKind::Unified;
    double t_near = 0, t_far = 0;

    size_t size() const { return t_values.size(); }
};

// Fixed-step sampling at bin centers; with jitter each point is drawn
// uniformly inside its bin.
inline SampleSet sample_unified(double t_near, double t_far, double step,
                                bool jitter = false, Rng* rng = nullptr) {
    if (step <= 0) throw std::invalid_argument("sample_unified: step must be > 0");
    SampleSet s;
    s.t_near = t_near;
    s.t_far = t_far;
    double span = t_far - t_near;
    if (span < step / 2) {
        // degenerate interval: single midpoint sample
        s.t_values.push_back(0.5 * (t_near + t_far));
        s.deltas.push_back(t_far - s.t_values[0]);
        return s;
    }
    int n = static_cast<int>(std::ceil(span / step));
    double bin = span / n;
    s.t_values.reserve(n);
    for (int k = 0; k < n; ++k) {
        double u = (jitter && rng) ? uniform01(*rng) : 0.5;
        s.t_values.push_back(t_near + (k + u) * bin);
    }
    s.deltas.resize(n);
    for (int k = 0; k + 1 < n; ++k) s.deltas[k] = s.t_values[k + 1] - s.t_values[k];
    s.deltas[n - 1] = t_far - s.t_values[n - 1];
    return s;
}

// Fixed-step sampling with strata aligned to voxel-boundary crossings:
// every voxel chord the ray traverses receives at least one sample, and
// samples within a chord are no further apart than `step`. Point sampling
// on a free-running grid can skip chords shorter than the step; this
// variant cannot, which makes renderings of piecewise-constant fields
// comparable to exact-traversal oracles.
inline SampleSet sample_voxel_aligned(const Vec3& grid_origin, double voxel_size,
                                      const Ray& ray, double step,
                                      bool jitter = false, Rng* rng = nullptr) {
    if (step <= 0)
        throw std::invalid_argument("sample_voxel_aligned: step must be > 0");
    std::vector<double> cuts{ray.t_near, ray.t_far};
    for (int a = 0; a < 3; ++a) {
        double d = ray.direction[a];
        if (std::abs(d) < 1e-15) continue;
        // plane indices crossed between t_near and t_far on this axis
        double c0 = (ray.at(ray.t_near)[a] - grid_origin[a]) / voxel_size;
        double c1 = (ray.at(ray.t_far)[a] - grid_origin[a]) / voxel_size;
        int lo = int(std::ceil(std::min(c0, c1)));
        int hi = int(std::floor(std::max(c0, c1)));
        for (int i = lo; i <= hi; ++i) {
            double t = (grid_origin[a] + i * voxel_size - ray.origin[a]) / d;
            if (t > ray.t_near && t < ray.t_far) cuts.push_back(t);
        }
    }
    std::sort(cuts.begin(), cuts.end());
    SampleSet s;
    s.t_near = ray.t_near;
    s.t_far = ray.t_far;
    for (size_t i = 0; i + 1 < cuts.size(); ++i) {
        double a = cuts[i], b = cuts[i + 1];
        if (b - a < 1e-12) continue;
        int n = std::max(1, int(std::ceil((b - a) / step)));
        double bin = (b - a) / n;
        for (int k = 0; k < n; ++k) {
            double u = (jitter && rng) ? uniform01(*rng) : 0.5;
            s.t_values.push_back(a + (k + u) * bin);
        }
    }
    if (s.t_values.empty())
        s.t_values.push_back(0.5 * (ray.t_near + ray.t_far));
    s.deltas.resize(s.t_values.size());
    for (size_t k = 0; k + 1 < s.t_values.size(); ++k)
        s.deltas[k] = s.t_values[k + 1] - s.t_values[k];
    s.deltas.back() = ray.t_far - s.t_values.back();
    return s;
}

// Inverse-CDF sampling from the piecewise-constant density proportional to
// coarse_weights over the coarse bins; merged and sorted with the coarse
// points. All-zero weights fall back to a uniform CDF.
inline SampleSet sample_hierarchical(const SampleSet& coarse,
                                     const std::vector<double>& coarse_weights,
                                     int n_fine, Rng& rng) {
    if (n_fine < 1)
        throw std::invalid_argument("sample_hierarchical: n_fine must be >= 1");
    if (coarse_weights.size() != coarse.size())
        throw std::invalid_argument("sample_hierarchical: weight/sample mismatch");
    size_t n = coarse.size();
    // bin edges around each coarse sample
    std::vector<double> edges(n + 1);
    edges[0] = coarse.t_near;
    for (size_t k = 1; k < n; ++k)
        edges[k] = 0.5 * (coarse.t_values[k - 1] + coarse.t_values[k]);
    edges[n] = coarse.t_far;

    double total = 0;
    for (double w : coarse_weights) {
        if (w < 0) throw std::invalid_argument("sample_hierarchical: negative weight");
        total += w;
    }
    std::vector<double> cdf(n + 1, 0.0);
    for (size_t k = 0; k < n; ++k) {
        double w = total > 0 ? coarse_weights[k] / total : 1.0 / n;
        cdf[k + 1] = cdf[k] + w;
    }
    cdf[n] = 1.0;

    SampleSet out;
    out.strategy = SamplerKind::Hierarchical;
    out.t_near = coarse.t_near;
    out.t_far = coarse.t_far;
    out.t_values = coarse.t_values;
    out.t_values.reserve(n + n_fine);
    for (int i = 0; i < n_fine; ++i) {
        double u = uniform01(rng);
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        size_t k = std::min<size_t>(n - 1, size_t(std::distance(cdf.begin(), it)) - 1);
        double seg = cdf[k + 1] - cdf[k];
        double f = seg > 0 ? (u - cdf[k]) / seg : 0.5;
        out.t_values.push_back(edges[k] + f * (edges[k + 1] - edges[k]));
    }
    std::sort(out.t_values.begin(), out.t_values.end());
    size_t m = out.t_values.size();
    out.deltas.resize(m);
    for (size_t k = 0; k + 1 < m; ++k)
        out.deltas[k] = out.t_values[k + 1] - out.t_values[k];
    out.deltas[m - 1] = std::max(0.0, out.t_far - out.t_values[m - 1]);
    return out;
}

struct PerSample {
    double t = 0, beta = 0;
    double sigma = 0, alpha = 0, transmittance = 0, weight = 0;
    std::vector<double> sem_logits;
    TrilinearRecord interp{};
};

struct RenderOutput {
    std::vector<double> sem_pix;  // accumulated logits
    double depth_pix = 0;
    double opacity = 0;
    std::vector<PerSample> per_sample;  // retained for the backward pass
};

// Volume rendering along one ray: alpha_k = 1 - exp(-sigma_k beta_k),
// T_k = exp(-sum_{t<k} sigma_t beta_t), w_k = T_k alpha_k;
// semantics/depth/opacity are w-weighted accumulations.
inline RenderOutput render_ray(const SemanticDensityField& field, const Ray& ray,
                               const SampleSet& samples, bool nearest = false,
                               bool keep_intermediates = true) {
    RenderOutput out;
    out.sem_pix.assign(field.num_classes(), 0.0);
    if (samples.t_values.empty()) return out;

    double optical = 0;  // running sum sigma_t beta_t
    size_t n = samples.size();
    if (keep_intermediates) out.per_sample.reserve(n);
    for (size_t k = 0; k < n; ++k) {
        double t = samples.t_values[k];
        double beta = samples.deltas[k];
        FieldQuery q = field.query(ray.at(t), nearest);
        double trans = std::exp(-optical);
        double alpha = 1.0 - std::exp(-q.sigma * beta);
        double w = trans * alpha;
        for (int l = 0; l < field.num_classes(); ++l)
            out.sem_pix[l] += w * q.sem_logits[l];
        out.depth_pix += w * t;
        out.opacity += w;
        if (keep_intermediates) {
            PerSample ps;
            ps.t = t;
            ps.beta = beta;
            ps.sigma = q.sigma;
            ps.alpha = alpha;
            ps.transmittance = trans;
            ps.weight = w;
            ps.sem_logits = std::move(q.sem_logits);
            ps.interp = q.interp;
            out.per_sample.push_back(std::move(ps));
        }
        optical += q.sigma * beta;
    }
    return out;
}

struct RenderConfig {
    SamplerKind sampler = SamplerKind::Unified;
    double step_scale = 0.5;  // multiple of voxel_size
    int n_coarse = 64;
    int n_fine = 128;
    bool jitter = false;
    bool nearest_query = false;
    uint64_t seed = 0;
    uint64_t stream_salt = 0;  // e.g. iteration number; keeps per-ray streams fresh

    static SamplerKind parse_sampler(const std::string& s) {
        if (s == "unified") return SamplerKind::Unified;
        if (s == "hierarchical") return SamplerKind::Hierarchical;
        throw std::invalid_argument("unknown sampler: " + s);
    }
};

// Build the sample set for one ray per the configured strategy. Per-ray RNG
// streams are derived from (seed, salt, ray index) so results do not depend
// on worker count.
inline SampleSet make_samples(const SemanticDensityField& field, const Ray& ray,
                              const RenderConfig& cfg, size_t ray_index) {
    Rng rng = make_rng(cfg.seed, cfg.stream_salt, ray_index);
    double step = cfg.step_scale * field.voxel_size();
    if (cfg.sampler == SamplerKind::Unified)
        return sample_unified(ray.t_near, ray.t_far, step, cfg.jitter, &rng);
    // hierarchical: uniform coarse pass (proposal only, no gradient), then
    // inverse-CDF refinement on the coarse rendering weights
    double span = ray.t_far - ray.t_near;
    SampleSet coarse =
        sample_unified(ray.t_near, ray.t_far, span / cfg.n_coarse, cfg.jitter, &rng);
    RenderOutput cr = render_ray(field, ray, coarse, cfg.nearest_query, true);
    std::vector<double> w(cr.per_sample.size());
    for (size_t k = 0; k < w.size(); ++k) w[k] = cr.per_sample[k].weight;
    return sample_hierarchical(coarse, w, cfg.n_fine, rng);
}

inline RenderOutput render_ray(const SemanticDensityField& field, const Ray& ray,
                               const RenderConfig& cfg, size_t ray_index,
                               bool keep_intermediates = true) {
    SampleSet s = make_samples(field, ray, cfg, ray_index);
    return render_ray(field, ray, s, cfg.nearest_query, keep_intermediates);
}

// Element-wise driver over render_ray; deterministic for any worker count.
inline std::vector<RenderOutput> render_batch(const SemanticDensityField& field,
                                              const std::vector<Ray>& rays,
                                              const RenderConfig& cfg,
                                              int workers = 1,
                                              bool keep_intermediates = true) {
    std::vector<RenderOutput> out(rays.size());
    parallel_chunks(rays.size(), workers, [&](size_t, size_t begin, size_t end) {
        for (size_t i = begin; i < end; ++i)
            out[i] = render_ray(field, rays[i], cfg, i, keep_intermediates);
    });
    return out;
}

}  // namespace occfield
