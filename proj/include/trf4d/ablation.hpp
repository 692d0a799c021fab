#pragma once

#include "trf4d/config.hpp"

namespace trf4d {

/// Per-frame Instant-NGP-style baseline: one 3D hash grid at the run's grid
/// config plus an independent head pair, per frame.
inline std::size_t per_frame_ngp_params(const RunConfig& cfg, int frames) {
    FieldOptions o = cfg.field_options();
    std::size_t heads =
        Mlp<float>({o.grid.feature_dim(), kHiddenWidth, kHiddenWidth, kDensityOut}, 0).param_count() +
        Mlp<float>({kRadianceIn, kHiddenWidth, kHiddenWidth, kHiddenWidth, 3}, 0).param_count();
    return static_cast<std::size_t>(frames) * (hash_grid_param_count<3>(o.grid) + heads);
}

/// Trainable parameters of a whole model (per-segment fields + the shared
/// head pair) for a backend under the given options.
inline std::size_t model_params(const RunConfig& cfg, const SegmentPlan& plan, Backend backend,
                                const FieldOptions& opts) {
    std::size_t n = 0;
    for (const Segment& s : plan.segments) {
        FieldOptions o = opts;
        o.backend = backend;
        if (cfg.table_from_plan) o.grid.table_size_log2 = s.hash_capacity_log2;
        n += field_param_count(o, s.length);
    }
    n += Mlp<float>({opts.grid.feature_dim(), kHiddenWidth, kHiddenWidth, kDensityOut}, 0)
             .param_count();
    n += Mlp<float>({kRadianceIn, kHiddenWidth, kHiddenWidth, kHiddenWidth, 3}, 0).param_count();
    return n;
}

/// Compression ratio against the per-frame baseline: 1 - P_M / P_I-NGP.
inline double compression_ratio(std::size_t params_model, std::size_t params_per_frame_ngp) {
    return 1.0 - static_cast<double>(params_model) / static_cast<double>(params_per_frame_ngp);
}

/// Matched parameter budgets for the backend ablation: tngp trades its
/// single 4D grid for 4x table capacity; hex4d searches the finest plane
/// resolution for the closest total count to the humanrf reference.
inline FieldOptions matched_backend_options(const RunConfig& cfg, Backend backend,
                                            int typical_len) {
    FieldOptions base = cfg.field_options();
    base.backend = backend;
    if (backend == Backend::humanrf) return base;
    if (backend == Backend::tngp) {
        base.tngp_table_log2 = base.grid.table_size_log2 + 2;
        return base;
    }
    FieldOptions hum = cfg.field_options();
    std::size_t target = field_param_count(hum, typical_len);
    std::size_t best_err = SIZE_MAX;
    int best_k = base.grid.finest;
    for (int k = base.grid.coarsest; k <= base.grid.finest * 4; k = std::max(k + 1, k * 11 / 10)) {
        base.hex2d_finest = k;
        std::size_t n = field_param_count(base, typical_len);
        std::size_t err = n > target ? n - target : target - n;
        if (err < best_err) {
            best_err = err;
            best_k = k;
        }
    }
    base.hex2d_finest = best_k;
    return base;
}

}  // namespace trf4d
