// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "occfield/errors.hpp"
#include "occfield/evalio.hpp"
#include "occfield/field.hpp"
#include "occfield/gradients.hpp"
#include "occfield/losses.hpp"
#include "occfield/raypool.hpp"
#include "occfield/renderer.hpp"
#include "occfield/synthworld.hpp"

namespace occfield {

struct FieldConfig {
    double density_init = -5.0;  // near-transparent start
    double logit_init = 0.0;
    double tau = 0.2;  // occupancy threshold
};

struct TrainConfig {
    int iterations = 3000;
    double learning_rate = 1e-2;  // direct-grid optimization
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::uint64_t seed = 0;
    int checkpoint_every = 0;  // 0 = off
    int eval_every = 500;
    int workers = 1;
    FieldConfig field;
    RenderConfig render;
    LossConfig loss;
    RayPoolConfig pool;

    void validate() const {
        if (learning_rate <= 0) throw std::invalid_argument("learning_rate must be > 0");
        if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
            throw std::invalid_argument("Adam betas must be in [0, 1)");
        if (iterations < 0) throw std::invalid_argument("iterations must be >= 0");
    }
};

// All optimizer state is held in doubles but rounded through f32 after every
// step, so the f32 checkpoint format restores it bit-exactly.
struct TrainState {
    SemanticDensityField field;
    std::vector<double> m_density, v_density;
    std::vector<double> m_semantic, v_semantic;
    std::uint64_t iteration = 0;
    std::uint64_t seed = 0;

    TrainState() = default;
    TrainState(SemanticDensityField f, std::uint64_t seed_)
        : field(std::move(f)), seed(seed_) {
        m_density.assign(field.density_params().size(), 0.0);
        v_density.assign(field.density_params().size(), 0.0);
        m_semantic.assign(field.semantic_params().size(), 0.0);
        v_semantic.assign(field.semantic_params().size(), 0.0);
    }
};

namespace detail {

inline void adam_update(std::vector<double>& params, std::vector<double>& m,
                        std::vector<double>& v, const std::vector<double>& grad,
                        const TrainConfig& cfg, double bc1, double bc2) {
    for (size_t i = 0; i < params.size(); ++i) {
        double g = grad[i];
        double mi = cfg.beta1 * m[i] + (1 - cfg.beta1) * g;
        double vi = cfg.beta2 * v[i] + (1 - cfg.beta2) * g * g;
        double mhat = mi / bc1;
        double vhat = vi / bc2;
        double p = params[i] - cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps);
        // keep state f32-representable for lossless checkpoints
        m[i] = double(float(mi));
        v[i] = double(float(vi));
        params[i] = double(float(p));
    }
}

}  // namespace detail

// One weighted batch -> render -> loss -> backward -> Adam update.
inline LossReport train_step(TrainState& state, const RayPool& pool,
                             const TrainConfig& cfg) {
    Rng batch_rng = make_rng(state.seed, 0xba7c4, state.iteration);
    std::vector<Ray> batch =
        sample_batch(pool, size_t(cfg.pool.rays_per_batch), batch_rng);

    RenderConfig rcfg = cfg.render;
    rcfg.seed = state.seed;
    rcfg.stream_salt = state.iteration + 1;  // fresh jitter stream per iteration

    std::vector<SampleSet> samples(batch.size());
    std::vector<RenderOutput> renders(batch.size());
    parallel_chunks(batch.size(), cfg.workers, [&](size_t, size_t begin, size_t end) {
        for (size_t i = begin; i < end; ++i) {
            samples[i] = make_samples(state.field, batch[i], rcfg, i);
            renders[i] = render_ray(state.field, batch[i], samples[i], false, true);
        }
    });

    LossReport rep = total_loss(renders, batch, samples, state.field, cfg.loss);
    if (!std::isfinite(rep.total))
        throw numeric_error("non-finite loss at iteration " +
                            std::to_string(state.iteration));

    static thread_local GradWorkspace grad_ws;
    const GradBuffer& grad =
        backward(renders, batch, samples, state.field, cfg.loss, cfg.workers, grad_ws);
    if (!grad.finite())
        throw numeric_error("non-finite gradient at iteration " +
                            std::to_string(state.iteration));

    ++state.iteration;
    double bc1 = 1.0 - std::pow(cfg.beta1, double(state.iteration));
    double bc2 = 1.0 - std::pow(cfg.beta2, double(state.iteration));
    detail::adam_update(state.field.density_params(), state.m_density,
                        state.v_density, grad.d_density, cfg, bc1, bc2);
    detail::adam_update(state.field.semantic_params(), state.m_semantic,
                        state.v_semantic, grad.d_semantic, cfg, bc1, bc2);
    return rep;
}

// Checkpoint = SDF1 block + MOM1 block.
inline void save_checkpoint(std::ostream& os, const TrainState& state) {
    io::write_sdf(os, state.field);
    io::Moments mom;
    mom.dims = state.field.dims();
    mom.num_classes = state.field.num_classes();
    mom.m = state.m_density;
    mom.m.insert(mom.m.end(), state.m_semantic.begin(), state.m_semantic.end());
    mom.v = state.v_density;
    mom.v.insert(mom.v.end(), state.v_semantic.begin(), state.v_semantic.end());
    mom.iteration = state.iteration;
    mom.seed = state.seed;
    io::write_mom(os, mom);
}

inline TrainState load_checkpoint(std::istream& is) {
    TrainState state;
    state.field = io::read_sdf(is);
    io::Moments mom = io::read_mom(is);
    if (!(mom.dims == state.field.dims()) ||
        mom.num_classes != state.field.num_classes())
        throw format_error(FormatErrorKind::BadHeader,
                           "checkpoint moment dims do not match field");
    size_t nd = state.field.density_params().size();
    state.m_density.assign(mom.m.begin(), mom.m.begin() + nd);
    state.m_semantic.assign(mom.m.begin() + nd, mom.m.end());
    state.v_density.assign(mom.v.begin(), mom.v.begin() + nd);
    state.v_semantic.assign(mom.v.begin() + nd, mom.v.end());
    state.iteration = mom.iteration;
    state.seed = mom.seed;
    return state;
}

struct FitRecord {
    std::uint64_t iteration = 0;
    LossReport loss;
    bool has_eval = false;
    EvalReport eval;  // voxel mIoU vs the current frame's GT grid
};

using FitCallback = std::function<void(const FitRecord&)>;

// Build the pool once, iterate train_step, periodically evaluate voxel mIoU
// against the current frame's GT grid.
inline TrainState fit(const Scene& scene,
                      const std::vector<std::vector<LabelImage>>& labels,
                      const TrainConfig& cfg, const FitCallback& on_record = {},
                      const std::function<void(const TrainState&)>& on_checkpoint = {}) {
    cfg.validate();
    int current = int(scene.trajectory.size()) / 2;
    SemanticDensityField field(scene.dims, scene.num_label_classes(), scene.origin,
                               scene.voxel_size, cfg.field.density_init,
                               cfg.field.logit_init);
    // initial params are f32-representable by construction of the defaults
    TrainState state(std::move(field), cfg.seed);
    RayPool pool = build_pool(scene.trajectory, labels, scene.rig, current,
                              state.field.bounds(), cfg.pool);
    const OccupancyGrid& gt = scene.gt_grids[current];

    for (int it = 0; it < cfg.iterations; ++it) {
        FitRecord rec;
        rec.loss = train_step(state, pool, cfg);
        rec.iteration = state.iteration;
        if (cfg.eval_every > 0 &&
            (state.iteration % cfg.eval_every == 0 || it + 1 == cfg.iterations)) {
            rec.has_eval = true;
            rec.eval = voxel_miou(state.field.extract_occupancy(cfg.field.tau), gt);
        }
        if (on_record) on_record(rec);
        if (on_checkpoint && cfg.checkpoint_every > 0 &&
            state.iteration % cfg.checkpoint_every == 0)
            on_checkpoint(state);
    }
    return state;
}

}  // namespace occfield
