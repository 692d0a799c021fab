#pragma once

#include <map>
#include <ostream>

#include "trf4d/adam.hpp"
#include "trf4d/checkpoint.hpp"
#include "trf4d/dataset.hpp"
#include "trf4d/losses.hpp"
#include "trf4d/renderer.hpp"

namespace trf4d {

// ---------------------------------------------------------------------------
// Ray batches span at most `frames_per_batch` time frames (8, per the
// training protocol) so only that many segments are touched per iteration.

template <typename S>
struct RayBatch {
    std::vector<Ray> rays;
    std::vector<S> gt_color;  // 3 per ray
    std::vector<S> gt_mask;   // 1 per ray, in {0,1}
    std::vector<int> frames;  // distinct frames represented

    std::size_t size() const { return rays.size(); }
};

/// Draws `frames_per_batch` frames (without replacement when the sequence is
/// long enough, with replacement otherwise), then rays uniformly over
/// (training camera, pixel) across those frames.
template <typename S>
RayBatch<S> sample_batch(const Dataset& data, const SegmentPlan& plan, Pcg32& rng, int n_rays,
                         int frames_per_batch = 8) {
    require(n_rays > 0, "sample_batch: n_rays must be positive");
    require(plan.num_frames() == data.num_frames(), "sample_batch: plan does not cover dataset");
    std::vector<int> train_cams = data.cameras_in(Split::train);
    require(!train_cams.empty(), "sample_batch: no training cameras");
    int nf = data.num_frames();

    std::vector<int> chosen;
    if (nf < frames_per_batch) {
        for (int i = 0; i < frames_per_batch; ++i)
            chosen.push_back(static_cast<int>(rng.next_below(nf)));
    } else {
        std::vector<int> all(nf);
        for (int i = 0; i < nf; ++i) all[i] = i;
        for (int i = 0; i < frames_per_batch; ++i) {
            int j = i + static_cast<int>(rng.next_below(nf - i));
            std::swap(all[i], all[j]);
            chosen.push_back(all[i]);
        }
    }

    RayBatch<S> batch;
    for (int f : chosen)
        if (std::find(batch.frames.begin(), batch.frames.end(), f) == batch.frames.end())
            batch.frames.push_back(f);

    std::map<std::uint64_t, std::shared_ptr<const ImagePair>> cache;
    batch.rays.reserve(n_rays);
    batch.gt_color.reserve(3 * n_rays);
    batch.gt_mask.reserve(n_rays);
    for (int r = 0; r < n_rays; ++r) {
        int frame = chosen[rng.next_below(static_cast<std::uint32_t>(chosen.size()))];
        int cam = train_cams[rng.next_below(static_cast<std::uint32_t>(train_cams.size()))];
        const Camera& c = data.camera(cam);
        int px = static_cast<int>(rng.next_below(c.width));
        int py = static_cast<int>(rng.next_below(c.height));
        std::uint64_t key = static_cast<std::uint64_t>(cam) * nf + frame;
        auto it = cache.find(key);
        if (it == cache.end()) it = cache.emplace(key, data.images(cam, frame)).first;
        const ImagePair& img = *it->second;
        batch.rays.push_back(c.ray_for_pixel(px, py, frame));
        for (int k = 0; k < 3; ++k) batch.gt_color.push_back(static_cast<S>(img.rgb.at(px, py, k)));
        batch.gt_mask.push_back(img.mask.at(px, py) > 0.5f ? S(1) : S(0));
    }
    return batch;
}

/// Per-frame space carving from the training-split masks.
inline std::vector<OccupancyGrid> carve_dataset_occupancy(const Dataset& data, int resolution,
                                                          int dilation_px,
                                                          ThreadPool* pool = nullptr) {
    std::vector<int> train_cams = data.cameras_in(Split::train);
    std::vector<Camera> cams;
    for (int c : train_cams) cams.push_back(data.camera(c));
    std::vector<OccupancyGrid> grids(data.num_frames());
    auto carve_frame = [&](int f) {
        std::vector<Image> masks;
        for (int c : train_cams) masks.push_back(data.images(c, f)->mask);
        grids[f] = carve_occupancy(masks, cams, data.box(), resolution, resolution, resolution,
                                   dilation_px);
    };
    if (pool)
        pool->parallel_chunks(data.num_frames(), [&](int, std::size_t b, std::size_t e) {
            for (std::size_t f = b; f < e; ++f) carve_frame(static_cast<int>(f));
        });
    else
        for (int f = 0; f < data.num_frames(); ++f) carve_frame(f);
    return grids;
}

// ---------------------------------------------------------------------------

struct TrainConfig {
    int iterations = 0;  // 0 -> frames * 300
    int batch_max_samples = 65536;
    int frames_per_batch = 8;
    int n_steps = 256;
    double lr_start = 1e-2, lr_end = 5e-3;
    double huber_delta = kDefaultHuberDelta;
    double beta_mask = kDefaultMaskBeta;
    double adam_beta1 = 0.9, adam_beta2 = 0.99, adam_eps = 1e-15;
    bool deterministic = true;
    int checkpoint_every = 0;  // 0 -> final only
    int initial_rays = 0;      // 0 -> 8192 scaled by budget/640K
    std::filesystem::path out_dir;  // empty -> no loss log / checkpoints

    int resolved_iterations(int frames) const {
        return iterations > 0 ? iterations : frames * 300;
    }
    int resolved_initial_rays() const {
        if (initial_rays > 0) return initial_rays;
        return std::max(16, static_cast<int>(8192.0 * batch_max_samples / 655360.0));
    }
};

struct IterStats {
    double loss_total = 0, loss_pho = 0, loss_bce = 0, lr = 0;
    int rays = 0;
    std::size_t samples = 0;  // retained samples across the batch
    std::uint64_t nonfinite = 0;
};

inline const char* kLossLogHeader =
    "iteration,loss_total,loss_pho,loss_bce,lr,rays,samples,nonfinite_grads\n";

template <typename S>
class Trainer {
  public:
    Trainer(TrainState<S>& state, const Dataset& data, const std::vector<OccupancyGrid>& occ,
            TrainConfig cfg, ThreadPool& pool)
        : state_(state), data_(data), occ_(occ), cfg_(cfg), pool_(pool),
          adam_(state.total_param_count(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps) {
        require(state.plan().num_frames() == data.num_frames() &&
                    state.plan().segments.front().start == 0,
                "Trainer: plan does not cover the dataset frames");
        require(static_cast<int>(occ.size()) == data.num_frames(),
                "Trainer: need one occupancy grid per frame");
        total_iterations_ = cfg_.resolved_iterations(data.num_frames());
        next_rays_ = cfg_.resolved_initial_rays();
        grads_.resize(pool.threads());
        workspaces_.resize(pool.threads());
    }

    Adam<S>& adam() { return adam_; }
    TrainerResumeState resume_state() const { return {spr_estimate_, adam_.nonfinite_count()}; }
    void restore_resume_state(const TrainerResumeState& r) {
        spr_estimate_ = r.spr_estimate;
        if (spr_estimate_ > 0)
            next_rays_ = std::max(1, static_cast<int>(cfg_.batch_max_samples / spr_estimate_));
    }
    int total_iterations() const { return total_iterations_; }

    IterStats step() {
        RayBatch<S> batch =
            sample_batch<S>(data_, state_.plan(), state_.rng(), next_rays_, cfg_.frames_per_batch);
        IterStats stats = step_batch(batch);
        if (stats.rays > 0 && stats.samples > 0) {
            spr_estimate_ = static_cast<double>(stats.samples) / stats.rays;
            next_rays_ = std::max(1, static_cast<int>(cfg_.batch_max_samples / spr_estimate_));
        }
        return stats;
    }

    /// One optimizer step on an already-sampled batch (also the entry point
    /// for tests that construct bespoke batches). Deterministic mode keeps a
    /// full gradient buffer per chunk and reduces them in fixed order; fast
    /// mode scatters grid gradients atomically into a shared buffer and keeps
    /// only the small head gradients chunk-local.
    IterStats step_batch(const RayBatch<S>& batch) {
        require(!batch.rays.empty(), "step_batch: empty batch");
        std::size_t n_params = state_.total_param_count();
        std::size_t head_begin = state_.density_offset();
        std::size_t R = batch.rays.size();
        int chunks = pool_.threads();
        bool det = cfg_.deterministic || chunks == 1;
        std::vector<double> pho_sum(chunks, 0), bce_sum(chunks, 0);
        std::vector<std::size_t> samp_sum(chunks, 0);

        if (!det) {
            grads_[0].assign(n_params, S(0));
            for (int c = 1; c < chunks; ++c) grads_[c].resize(n_params);
        }

        pool_.parallel_chunks(R, [&](int c, std::size_t b, std::size_t e) {
            auto& grad = grads_[c];
            std::span<S> shared;
            if (det) {
                grad.assign(n_params, S(0));
            } else {
                if (c != 0) std::fill(grad.begin() + head_begin, grad.end(), S(0));
                shared = std::span<S>(grads_[0]);  // grid scatter is atomic for every chunk
            }
            auto& ws = workspaces_[c];
            S inv_r = S(1) / static_cast<S>(R);
            std::vector<Ray> group;
            std::vector<std::uint64_t> jitter_ids;
            std::vector<std::size_t> global_idx;
            std::vector<S> d_color, d_acc;
            for (int f : batch.frames) {
                group.clear();
                jitter_ids.clear();
                global_idx.clear();
                for (std::size_t r = b; r < e; ++r)
                    if (batch.rays[r].t_frame == f) {
                        group.push_back(batch.rays[r]);
                        jitter_ids.push_back(r);
                        global_idx.push_back(r);
                    }
                if (group.empty()) continue;
                // bounded subgroups keep the per-phase buffers cache-resident
                constexpr int kGroupRays = 96;
                for (std::size_t g0 = 0; g0 < group.size(); g0 += kGroupRays) {
                    int nr = static_cast<int>(std::min<std::size_t>(kGroupRays, group.size() - g0));
                    render_group(state_, group.data() + g0, jitter_ids.data() + g0, nr, f,
                                 data_.box(), &occ_[f], cfg_.n_steps, SampleMode::jitter,
                                 state_.seed(), state_.iteration, true, ws);
                    d_color.resize(3 * nr);
                    d_acc.resize(nr);
                    for (int k = 0; k < nr; ++k) {
                        std::size_t r = global_idx[g0 + k];
                        samp_sum[c] += ws.rays[k].count;
                        const S* gt = batch.gt_color.data() + 3 * r;
                        S gt_m = batch.gt_mask[r];
                        pho_sum[c] += huber_loss(ws.rays[k].color.data(), gt, S(cfg_.huber_delta));
                        bce_sum[c] += bce_mask_loss(ws.rays[k].acc_weight, gt_m);
                        huber_loss_backward(ws.rays[k].color.data(), gt, S(cfg_.huber_delta),
                                            inv_r, d_color.data() + 3 * k);
                        d_acc[k] = S(cfg_.beta_mask) * inv_r *
                                   bce_mask_loss_backward(ws.rays[k].acc_weight, gt_m);
                    }
                    render_group_backward(state_, f, data_.box(), d_color.data(), d_acc.data(), ws,
                                          std::span<S>(grad), shared);
                }
            }
        });

        if (det && chunks > 1) {
            // fixed-order reduction into chunk 0, parallel across parameters
            pool_.parallel_chunks(n_params, [&](int, std::size_t b, std::size_t e) {
                S* dst = grads_[0].data();
                for (int c = 1; c < chunks; ++c) {
                    const S* src = grads_[c].data();
                    for (std::size_t i = b; i < e; ++i) dst[i] += src[i];
                }
            });
        } else if (!det) {
            S* dst = grads_[0].data();
            for (int c = 1; c < chunks; ++c) {
                const S* src = grads_[c].data();
                for (std::size_t i = head_begin; i < n_params; ++i) dst[i] += src[i];
            }
        }

        IterStats stats;
        stats.lr = lr_schedule(cfg_.lr_start, cfg_.lr_end, state_.iteration, total_iterations_);
        adam_.step(state_, grads_[0], stats.lr);
        state_.iteration += 1;

        for (int c = 0; c < chunks; ++c) {
            stats.loss_pho += pho_sum[c];
            stats.loss_bce += bce_sum[c];
            stats.samples += samp_sum[c];
        }
        stats.loss_pho /= static_cast<double>(R);
        stats.loss_bce /= static_cast<double>(R);
        stats.loss_total = stats.loss_pho + cfg_.beta_mask * stats.loss_bce;
        stats.rays = static_cast<int>(R);
        stats.nonfinite = adam_.last_nonfinite();
        return stats;
    }

    /// Full loop: CSV loss log plus periodic and final checkpoints.
    void run(std::ostream* log = nullptr) {
        if (log) *log << kLossLogHeader;
        for (int it = 0; it < total_iterations_; ++it) {
            IterStats s = step();
            if (log) {
                char line[256];
                std::snprintf(line, sizeof(line), "%llu,%.10g,%.10g,%.10g,%.10g,%d,%zu,%llu\n",
                              static_cast<unsigned long long>(state_.iteration), s.loss_total,
                              s.loss_pho, s.loss_bce, s.lr, s.rays, s.samples,
                              static_cast<unsigned long long>(s.nonfinite));
                *log << line;
            }
            if (cfg_.checkpoint_every > 0 && !cfg_.out_dir.empty() &&
                state_.iteration % cfg_.checkpoint_every == 0)
                write_checkpoint();
        }
        if (!cfg_.out_dir.empty()) write_checkpoint();
    }

    std::filesystem::path checkpoint_path() const {
        char name[64];
        std::snprintf(name, sizeof(name), "ckpt_%08llu.trf4d",
                      static_cast<unsigned long long>(state_.iteration));
        return cfg_.out_dir / name;
    }

  private:
    void write_checkpoint() {
        if constexpr (std::is_same_v<S, float>) {
            TrainerResumeState r = resume_state();
            save_checkpoint(checkpoint_path(), state_, &adam_, &r);
        }
    }

    TrainState<S>& state_;
    const Dataset& data_;
    const std::vector<OccupancyGrid>& occ_;
    TrainConfig cfg_;
    ThreadPool& pool_;
    Adam<S> adam_;
    int total_iterations_ = 0;
    int next_rays_ = 0;
    double spr_estimate_ = 0;
    std::vector<std::vector<S>> grads_;
    std::vector<RenderWorkspace<S>> workspaces_;
};

}  // namespace trf4d
