#pragma once

#include <span>
#include <vector>

#include "trf4d/geometry.hpp"
#include "trf4d/occupancy.hpp"

namespace trf4d {

/// Transmittance below this terminates a ray; the remaining weights are 0.
inline constexpr double kEarlyTermination = 1e-4;

enum class SampleMode {
    midpoint,  // deterministic, for evaluation and golden tests
    jitter     // per-stratum stratified jitter, for training
};

// ---------------------------------------------------------------------------
// Stratified samples along a ray, restricted to occupied voxels.

struct RaySampleSet {
    bool hit = false;             // ray intersected the box at all
    double alpha_min = 0, alpha_max = 0;
    int n_steps = 0;
    std::vector<double> alphas;   // retained samples, ascending
    std::vector<double> deltas;   // per-stratum step (last closes to alpha_max)
    std::vector<Vec3> positions;  // world-space sample points
    std::vector<std::uint8_t> skip_mask;  // per stratum: candidate retained?

    std::size_t size() const { return alphas.size(); }

    void clear() {
        hit = false;
        alpha_min = alpha_max = 0;
        n_steps = 0;
        alphas.clear();
        deltas.clear();
        positions.clear();
        skip_mask.clear();
    }
};

/// Uniform stratified sampling over [alpha_min, alpha_max]; strata whose
/// sample point lies in an unoccupied voxel are dropped (never evaluated).
/// occ == nullptr disables skipping. A missing box intersection leaves the
/// set empty (valid: the ray renders background).
inline void sample_ray_into(RaySampleSet& out, const Ray& ray, const Aabb& box,
                            const OccupancyGrid* occ, int n_steps,
                            SampleMode mode = SampleMode::midpoint, std::uint64_t seed = 0,
                            std::uint64_t iteration = 0, std::uint64_t ray_index = 0) {
    require(n_steps >= 1, "sample_ray: n_steps must be >= 1");
    out.clear();
    out.n_steps = n_steps;
    auto span = intersect_aabb(ray, box);
    if (!span) return;
    out.hit = true;
    out.alpha_min = span->first;
    out.alpha_max = span->second;
    double h = (out.alpha_max - out.alpha_min) / n_steps;
    out.skip_mask.assign(n_steps, 0);

    double prev_alpha = 0;
    bool have_prev = false;
    for (int i = 0; i < n_steps; ++i) {
        double u = mode == SampleMode::midpoint ? 0.5 : hash_jitter(seed, iteration, ray_index, i);
        double a = out.alpha_min + (i + u) * h;
        Vec3 p = ray.point_at(a);
        if (occ && !occ->occupied_at(p)) continue;
        out.skip_mask[i] = 1;
        if (have_prev) out.deltas.push_back(a - prev_alpha);
        out.alphas.push_back(a);
        out.positions.push_back(p);
        prev_alpha = a;
        have_prev = true;
    }
    if (have_prev) out.deltas.push_back(out.alpha_max - prev_alpha);
}

inline RaySampleSet sample_ray(const Ray& ray, const Aabb& box, const OccupancyGrid* occ,
                               int n_steps, SampleMode mode = SampleMode::midpoint,
                               std::uint64_t seed = 0, std::uint64_t iteration = 0,
                               std::uint64_t ray_index = 0) {
    RaySampleSet out;
    sample_ray_into(out, ray, box, occ, n_steps, mode, seed, iteration, ray_index);
    return out;
}

// ---------------------------------------------------------------------------
// Quadrature compositing (emission-absorption).

template <typename S>
struct RenderResult {
    std::array<S, 3> color{S(0), S(0), S(0)};  // C-hat
    S acc_weight = S(0);                       // M-hat = sum of weights
    std::vector<S> weights;                    // per sample, kept for backprop
};

/// a_i = 1 - exp(-sigma_i * delta_i); T_i = prod_{j<i} (1 - a_j);
/// w_i = T_i a_i. Terminates once T_i < kEarlyTermination.
template <typename S>
RenderResult<S> composite(const RaySampleSet& samples, std::span<const S> sigma,
                          std::span<const S> rgb) {
    std::size_t n = samples.size();
    require(sigma.size() == n && rgb.size() == 3 * n, "composite: arrays must align with samples");
    RenderResult<S> out;
    out.weights.assign(n, S(0));
    S T = S(1);
    for (std::size_t i = 0; i < n; ++i) {
        require(sigma[i] >= S(0), "composite: negative density");
        if (T < S(kEarlyTermination)) break;
        S a = S(1) - std::exp(-sigma[i] * static_cast<S>(samples.deltas[i]));
        S w = T * a;
        out.weights[i] = w;
        for (int c = 0; c < 3; ++c) out.color[c] += w * rgb[3 * i + c];
        out.acc_weight += w;
        T *= S(1) - a;
    }
    return out;
}

/// Exact reverse of the compositing recurrence, honoring the early-
/// termination cut. d_color/d_acc are the upstream gradients on C-hat and
/// M-hat; outputs align with the sample arrays.
template <typename S>
void composite_backward(const RaySampleSet& samples, std::span<const S> sigma,
                        std::span<const S> rgb, const RenderResult<S>& result,
                        const S* d_color, S d_acc, std::span<S> d_sigma, std::span<S> d_rgb) {
    std::size_t n = samples.size();
    require(sigma.size() == n && rgb.size() == 3 * n && result.weights.size() == n,
            "composite_backward: arrays must align with samples");
    require(d_sigma.size() == n && d_rgb.size() == 3 * n, "composite_backward: bad output spans");

    // locate the termination cut: weights past it are identically zero
    std::size_t n_eff = n;
    {
        S T = S(1);
        for (std::size_t i = 0; i < n; ++i) {
            if (T < S(kEarlyTermination)) {
                n_eff = i;
                break;
            }
            T -= result.weights[i];  // T_{i+1} = T_i - w_i
        }
    }
    for (std::size_t i = n_eff; i < n; ++i) {
        d_sigma[i] = S(0);
        for (int c = 0; c < 3; ++c) d_rgb[3 * i + c] = S(0);
    }

    // u_i = dC . rgb_i + dM;  dsigma_i = delta_i * (T_{i+1} u_i - sum_{j>i} w_j u_j)
    S cum = S(0);
    for (std::size_t i = 0; i < n_eff; ++i) cum += result.weights[i];
    S suffix = S(0);
    for (std::size_t i = n_eff; i-- > 0;) {
        S w = result.weights[i];
        S u = d_acc;
        for (int c = 0; c < 3; ++c) {
            u += d_color[c] * rgb[3 * i + c];
            d_rgb[3 * i + c] = d_color[c] * w;
        }
        S T_next = S(1) - cum;  // transmittance after sample i
        d_sigma[i] = static_cast<S>(samples.deltas[i]) * (T_next * u - suffix);
        suffix += w * u;
        cum -= w;
    }
}

}  // namespace trf4d
