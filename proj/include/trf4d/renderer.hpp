#pragma once

#include "trf4d/render.hpp"
#include "trf4d/threading.hpp"
#include "trf4d/train_state.hpp"

namespace trf4d {

// ---------------------------------------------------------------------------
// Rendering pipeline. Rays of one frame are processed as a group so the grid
// tables and head weight/gradient rows stay cache-hot across thousands of
// samples: sample -> field features -> density head -> per-ray compositing
// (with early termination) -> radiance head for the composited prefix.
// A single ray is just a group of one; every caller shares this code path.

template <typename S>
struct RenderWorkspace {
    // scratch for stratified sampling; after a single-ray render this holds
    // that ray's sample set
    RaySampleSet samples;

    // group arrays over all retained samples (rays concatenated)
    std::vector<S> pos;      // [n][3] box-normalized positions
    std::vector<S> delta;    // [n] step sizes
    std::vector<S> feat;     // [n][m]
    std::vector<S> fctx;     // [n][field ctx]
    std::vector<S> dctx;     // [n][density mlp ctx]
    std::vector<S> draw;     // [n][16] raw density outputs
    std::vector<S> sigma;    // [n]
    std::vector<S> weights;  // [n] compositing weights (0 past termination)

    // evaluated prefix (before each ray's termination cut), compacted
    std::vector<std::uint32_t> eval_ids;  // ascending sample ids
    std::vector<S> rin;                   // [ne][31]
    std::vector<S> rctx;                  // [ne][radiance ctx]
    std::vector<S> rgb;                   // [ne][3] post-sigmoid

    struct PerRay {
        std::uint32_t begin = 0, count = 0;            // retained sample range
        std::uint32_t eval_begin = 0, eval_count = 0;  // range inside eval_ids
        std::array<S, 3> color{};
        S acc_weight = S(0);
        S sh[kShDim] = {};
    };
    std::vector<PerRay> rays;
    S t_local = S(0);

    // backward scratch
    std::vector<S> d_sigma, d_rgb, d_rraw, d_rin, d_draw, d_feat;
    std::vector<S> feat_eval, dctx_eval, pos_eval, fctx_eval;
    std::vector<S> mlp_scratch, field_scratch;

    // single-ray conveniences
    RenderResult<S> result;
    std::size_t n_eval = 0;
};

/// Forward render of a group of rays that share one frame. jitter_ids feed
/// the stateless per-ray stratification jitter (the batch ray indices).
/// Throws when the frame is outside the plan.
template <typename S>
void render_group(const TrainState<S>& model, const Ray* rays, const std::uint64_t* jitter_ids,
                  int n_rays, int frame, const Aabb& box, const OccupancyGrid* occ, int n_steps,
                  SampleMode mode, std::uint64_t seed, std::uint64_t iteration,
                  bool early_termination, RenderWorkspace<S>& ws) {
    const FeatureField4D<S>& field = model.field_for_frame(frame);
    int m = field.feature_dim();
    int fcs = field.ctx_size();
    int dcs = model.density_head().ctx_size();
    ws.t_local = field.t_local_for_frame(frame);

    // phase A: stratified sampling, retained samples concatenated
    ws.rays.assign(n_rays, {});
    ws.pos.clear();
    ws.delta.clear();
    for (int r = 0; r < n_rays; ++r) {
        require(rays[r].t_frame == frame, "render_group: rays must share the frame");
        sample_ray_into(ws.samples, rays[r], box, occ, n_steps, mode, seed, iteration,
                        jitter_ids ? jitter_ids[r] : 0);
        auto& pr = ws.rays[r];
        pr.begin = static_cast<std::uint32_t>(ws.delta.size());
        pr.count = static_cast<std::uint32_t>(ws.samples.size());
        for (std::size_t i = 0; i < ws.samples.size(); ++i) {
            Vec3 u = box.normalize(ws.samples.positions[i]);
            ws.pos.push_back(static_cast<S>(u.x));
            ws.pos.push_back(static_cast<S>(u.y));
            ws.pos.push_back(static_cast<S>(u.z));
            ws.delta.push_back(static_cast<S>(ws.samples.deltas[i]));
        }
        if (pr.count > 0) sh_encode(rays[r].direction, pr.sh);
    }
    std::size_t n = ws.delta.size();
    ws.weights.assign(n, S(0));
    ws.eval_ids.clear();
    if (n == 0) return;

    // phase B: field features for every retained sample
    ws.feat.resize(n * m);
    ws.fctx.resize(n * fcs);
    field.query_ctx_batch(static_cast<int>(n), ws.pos.data(), ws.t_local, ws.feat.data(),
                          ws.fctx.data(), ws.field_scratch);

    // phase C: density head
    ws.draw.resize(n * kDensityOut);
    ws.dctx.resize(n * dcs);
    ws.sigma.resize(n);
    model.density_head().forward_batch(static_cast<int>(n), ws.feat.data(), ws.draw.data(),
                                       ws.dctx.data());
    for (std::size_t i = 0; i < n; ++i) ws.sigma[i] = density_activation(ws.draw[i * kDensityOut]);

    // phase D: per-ray compositing weights and the termination cut
    for (int r = 0; r < n_rays; ++r) {
        auto& pr = ws.rays[r];
        pr.eval_begin = static_cast<std::uint32_t>(ws.eval_ids.size());
        S T = S(1);
        for (std::uint32_t i = pr.begin; i < pr.begin + pr.count; ++i) {
            if (early_termination && T < S(kEarlyTermination)) break;
            S a = S(1) - std::exp(-ws.sigma[i] * ws.delta[i]);
            S w = T * a;
            ws.weights[i] = w;
            pr.acc_weight += w;
            T *= S(1) - a;
            ws.eval_ids.push_back(i);
        }
        pr.eval_count = static_cast<std::uint32_t>(ws.eval_ids.size()) - pr.eval_begin;
    }

    // phase E: radiance for the composited prefixes
    std::size_t ne = ws.eval_ids.size();
    ws.rin.resize(ne * kRadianceIn);
    ws.rctx.resize(ne * static_cast<std::size_t>(model.radiance_head().ctx_size()));
    ws.rgb.resize(ne * 3);
    for (int r = 0; r < n_rays; ++r) {
        const auto& pr = ws.rays[r];
        for (std::uint32_t e = pr.eval_begin; e < pr.eval_begin + pr.eval_count; ++e) {
            S* in = ws.rin.data() + static_cast<std::size_t>(e) * kRadianceIn;
            const S* geo = ws.draw.data() + static_cast<std::size_t>(ws.eval_ids[e]) * kDensityOut + 1;
            for (int k = 0; k < kShDim; ++k) in[k] = pr.sh[k];
            for (int k = 0; k < kGeoDim; ++k) in[kShDim + k] = geo[k];
        }
    }
    if (ne > 0) {
        std::vector<S>& rraw = ws.mlp_scratch;
        rraw.resize(ne * 3);
        model.radiance_head().forward_batch(static_cast<int>(ne), ws.rin.data(), rraw.data(),
                                            ws.rctx.data());
        for (std::size_t e = 0; e < ne; ++e)
            for (int k = 0; k < 3; ++k) ws.rgb[3 * e + k] = sigmoid(rraw[3 * e + k]);
    }
    for (int r = 0; r < n_rays; ++r) {
        auto& pr = ws.rays[r];
        for (std::uint32_t e = pr.eval_begin; e < pr.eval_begin + pr.eval_count; ++e) {
            S w = ws.weights[ws.eval_ids[e]];
            for (int k = 0; k < 3; ++k) pr.color[k] += w * ws.rgb[3 * e + k];
        }
    }
}

/// Reverse pass matching the last render_group on this workspace. d_color /
/// d_acc are per-ray upstream gradients ([n_rays][3] and [n_rays]).
/// Gradients land in `grad` (the state's flat layout); a non-empty
/// `shared_grid_grad` switches field scatter to atomic adds into it
/// (fast mode) while head gradients stay in the chunk-local `grad`.
template <typename S>
void render_group_backward(const TrainState<S>& model, int frame, const Aabb& box,
                           const S* d_color, const S* d_acc, RenderWorkspace<S>& ws,
                           std::span<S> grad, std::span<S> shared_grid_grad = {}) {
    std::size_t ne = ws.eval_ids.size();
    if (ne == 0) return;
    int seg = model.segment_index_for_frame(frame);
    const FeatureField4D<S>& field = model.fields()[seg];
    int m = field.feature_dim();
    int fcs = field.ctx_size();
    int dcs = model.density_head().ctx_size();

    bool atomic = !shared_grid_grad.empty();
    auto grad_field =
        (atomic ? shared_grid_grad : grad).subspan(model.field_offset(seg), field.param_count());
    auto grad_density = grad.subspan(model.density_offset(), model.density_head().param_count());
    auto grad_radiance = grad.subspan(model.radiance_offset(), model.radiance_head().param_count());

    // compositing gradient per ray (suffix sweep over the evaluated prefix)
    ws.d_sigma.assign(ne, S(0));
    ws.d_rgb.assign(3 * ne, S(0));
    for (std::size_t r = 0; r < ws.rays.size(); ++r) {
        const auto& pr = ws.rays[r];
        if (pr.eval_count == 0) continue;
        const S* dc = d_color + 3 * r;
        S da = d_acc[r];
        S cum = S(0);
        for (std::uint32_t e = pr.eval_begin; e < pr.eval_begin + pr.eval_count; ++e)
            cum += ws.weights[ws.eval_ids[e]];
        S suffix = S(0);
        for (std::uint32_t e = pr.eval_begin + pr.eval_count; e-- > pr.eval_begin;) {
            std::uint32_t i = ws.eval_ids[e];
            S w = ws.weights[i];
            S u = da;
            for (int c = 0; c < 3; ++c) {
                u += dc[c] * ws.rgb[3 * e + c];
                ws.d_rgb[3 * e + c] = dc[c] * w;
            }
            S T_next = S(1) - cum;
            ws.d_sigma[e] = ws.delta[i] * (T_next * u - suffix);
            suffix += w * u;
            cum -= w;
        }
    }

    // radiance head: through the sigmoid, then the MLP
    ws.d_rraw.resize(3 * ne);
    ws.d_rin.resize(ne * kRadianceIn);
    for (std::size_t e = 0; e < ne; ++e)
        for (int c = 0; c < 3; ++c) {
            S s = ws.rgb[3 * e + c];
            ws.d_rraw[3 * e + c] = ws.d_rgb[3 * e + c] * s * (S(1) - s);
        }
    model.radiance_head().backward_batch(static_cast<int>(ne), ws.rin.data(), ws.rctx.data(),
                                         ws.d_rraw.data(), ws.d_rin.data(), grad_radiance,
                                         ws.mlp_scratch);

    // density head over the evaluated rows (gathered contiguous)
    ws.feat_eval.resize(ne * m);
    ws.dctx_eval.resize(ne * dcs);
    ws.d_draw.assign(ne * kDensityOut, S(0));
    ws.d_feat.resize(ne * m);
    for (std::size_t e = 0; e < ne; ++e) {
        std::size_t i = ws.eval_ids[e];
        std::copy_n(ws.feat.data() + i * m, m, ws.feat_eval.data() + e * m);
        std::copy_n(ws.dctx.data() + i * dcs, dcs, ws.dctx_eval.data() + e * dcs);
        S* dd = ws.d_draw.data() + e * kDensityOut;
        dd[0] = ws.d_sigma[e] * density_activation_grad(ws.draw[i * kDensityOut], ws.sigma[i]);
        const S* drin = ws.d_rin.data() + e * kRadianceIn;
        for (int k = 0; k < kGeoDim; ++k) dd[1 + k] = drin[kShDim + k];
    }
    model.density_head().backward_batch(static_cast<int>(ne), ws.feat_eval.data(),
                                        ws.dctx_eval.data(), ws.d_draw.data(), ws.d_feat.data(),
                                        grad_density, ws.mlp_scratch);

    // feature field scatter over the evaluated rows
    ws.pos_eval.resize(ne * 3);
    ws.fctx_eval.resize(ne * fcs);
    for (std::size_t e = 0; e < ne; ++e) {
        std::size_t i = ws.eval_ids[e];
        std::copy_n(ws.pos.data() + 3 * i, 3, ws.pos_eval.data() + 3 * e);
        std::copy_n(ws.fctx.data() + i * fcs, fcs, ws.fctx_eval.data() + e * fcs);
    }
    field.backward_ctx_batch(static_cast<int>(ne), ws.pos_eval.data(), ws.t_local,
                             ws.d_feat.data(), ws.fctx_eval.data(), grad_field, atomic,
                             ws.field_scratch);
}

// ---------------------------------------------------------------------------
// Single-ray paths (evaluation, tests): a group of one.

template <typename S>
void render_ray(const TrainState<S>& model, const Ray& ray, const Aabb& box,
                const OccupancyGrid* occ, int n_steps, SampleMode mode, std::uint64_t seed,
                std::uint64_t iteration, std::uint64_t ray_index, bool early_termination,
                RenderWorkspace<S>& ws) {
    std::uint64_t jid = ray_index;
    render_group(model, &ray, &jid, 1, ray.t_frame, box, occ, n_steps, mode, seed, iteration,
                 early_termination, ws);
    ws.result = RenderResult<S>{};
    ws.result.weights.assign(ws.weights.begin(), ws.weights.end());
    if (!ws.rays.empty()) {
        ws.result.color = ws.rays[0].color;
        ws.result.acc_weight = ws.rays[0].acc_weight;
        ws.n_eval = ws.rays[0].eval_count;
    } else {
        ws.n_eval = 0;
    }
}

template <typename S>
void render_ray_backward(const TrainState<S>& model, const Ray& ray, const Aabb& box,
                         const S* d_color, S d_acc, RenderWorkspace<S>& ws, std::span<S> grad,
                         std::span<S> shared_grid_grad = {}) {
    render_group_backward(model, ray.t_frame, box, d_color, &d_acc, ws, grad, shared_grid_grad);
}

template <typename S>
RenderResult<S> render_pixel(const TrainState<S>& model, const Ray& ray, const Aabb& box,
                             const OccupancyGrid* occ, int n_steps,
                             bool early_termination = true) {
    RenderWorkspace<S> ws;
    render_ray(model, ray, box, occ, n_steps, SampleMode::midpoint, 0, 0, 0, early_termination, ws);
    return ws.result;
}

/// Renders the full view; returns {rgb, mask}. Background composites as
/// black. PNG quantization happens at write time, not here.
template <typename S>
std::pair<Image, Image> render_image(const TrainState<S>& model, const Camera& cam, int frame,
                                     const Aabb& box, const OccupancyGrid* occ, int n_steps,
                                     ThreadPool* pool = nullptr, bool early_termination = true) {
    require(model.plan().segment_for_frame(frame) >= 0, "render_image: frame outside plan");
    Image rgb(cam.width, cam.height, 3);
    Image mask(cam.width, cam.height, 1);
    auto render_rows = [&](int, std::size_t y0, std::size_t y1) {
        RenderWorkspace<S> ws;
        std::vector<Ray> rays;
        std::vector<std::uint64_t> ids;
        for (std::size_t y = y0; y < y1; ++y) {
            rays.clear();
            ids.clear();
            for (int x = 0; x < cam.width; ++x) {
                rays.push_back(cam.ray_for_pixel(x, static_cast<double>(y), frame));
                ids.push_back(static_cast<std::uint64_t>(y) * cam.width + x);
            }
            render_group(model, rays.data(), ids.data(), cam.width, frame, box, occ, n_steps,
                         SampleMode::midpoint, 0, 0, early_termination, ws);
            for (int x = 0; x < cam.width; ++x) {
                for (int c = 0; c < 3; ++c)
                    rgb.at(x, static_cast<int>(y), c) =
                        std::min(1.f, std::max(0.f, static_cast<float>(ws.rays[x].color[c])));
                mask.at(x, static_cast<int>(y)) =
                    std::min(1.f, std::max(0.f, static_cast<float>(ws.rays[x].acc_weight)));
            }
        }
    };
    if (pool)
        pool->parallel_chunks(cam.height, render_rows);
    else
        render_rows(0, 0, cam.height);
    return {std::move(rgb), std::move(mask)};
}

}  // namespace trf4d
