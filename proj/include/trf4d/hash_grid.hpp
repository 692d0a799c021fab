#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <vector>

#include "trf4d/common.hpp"

namespace trf4d {

// ---------------------------------------------------------------------------
// Multi-resolution grid encoding. Levels follow a geometric progression from
// `coarsest` to `finest`; a level stores its (K_l+1)^DIM lattice vertices
// densely when they fit the table, otherwise vertices share 2^table_size_log2
// slots through a spatial hash (collisions are unresolved; their gradients
// sum).

struct HashGridConfig {
    int levels = 8;             // L
    int features_per_level = 2; // F
    int coarsest = 16;          // K_min
    int finest = 256;           // K_max
    int table_size_log2 = 15;   // T

    void validate() const {
        require(levels >= 1 && features_per_level >= 1, "HashGridConfig: levels/features must be >= 1");
        require(coarsest >= 1 && finest >= coarsest, "HashGridConfig: need 1 <= K_min <= K_max");
        require(table_size_log2 >= 1 && table_size_log2 <= 62, "HashGridConfig: bad table_size_log2");
        require(levels > 1 || coarsest == finest, "HashGridConfig: L=1 requires K_min == K_max");
    }

    /// K_l = floor(K_min * b^l), b chosen so K_0 = K_min and K_{L-1} = K_max.
    int level_resolution(int level) const {
        if (levels == 1) return coarsest;
        double b = std::exp((std::log(double(finest)) - std::log(double(coarsest))) / (levels - 1));
        return static_cast<int>(std::floor(coarsest * std::pow(b, level) + 1e-9));
    }

    /// Output dimension m = L * F.
    int feature_dim() const { return levels * features_per_level; }
};

namespace detail {

// First multiplier is 1 so dense-ish coordinates stay well spread.
inline constexpr std::uint64_t kHashPrimes[4] = {1ULL, 2654435761ULL, 805459861ULL, 3674653429ULL};

}  // namespace detail

template <int DIM, typename S>
class HashGrid {
    static_assert(DIM >= 1 && DIM <= 4);

  public:
    HashGrid() = default;

    HashGrid(const HashGridConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg.validate();
        levels_.resize(cfg.levels);
        std::size_t offset = 0;
        for (int l = 0; l < cfg.levels; ++l) {
            Level& lv = levels_[l];
            lv.resolution = cfg.level_resolution(l);
            std::uint64_t dense_entries = 1;
            for (int d = 0; d < DIM; ++d) dense_entries *= static_cast<std::uint64_t>(lv.resolution) + 1;
            std::uint64_t table = 1ULL << cfg.table_size_log2;
            lv.hashed = dense_entries > table;
            lv.entries = lv.hashed ? table : dense_entries;
            lv.offset = offset;
            offset += static_cast<std::size_t>(lv.entries) * cfg.features_per_level;
        }
        params_.resize(offset);
        Pcg32 rng(seed);
        for (S& p : params_) p = static_cast<S>(rng.uniform(-1e-4, 1e-4));
    }

    const HashGridConfig& config() const { return cfg_; }
    std::size_t param_count() const { return params_.size(); }
    std::vector<S>& params() { return params_; }
    const std::vector<S>& params() const { return params_; }
    bool level_hashed(int l) const { return levels_[l].hashed; }

    /// Per-level trilinear (bilinear/quadrilinear) blend of the surrounding
    /// 2^DIM vertex features, levels concatenated. Inputs clamp to [0,1].
    void encode(const S* p, S* out) const {
        for (int i = 0; i < cfg_.feature_dim(); ++i) out[i] = S(0);
        corner_visit(p, [&](int level, int f_base, std::size_t slot, S weight) {
            const S* e = params_.data() + levels_[level].offset +
                         slot * static_cast<std::size_t>(cfg_.features_per_level);
            for (int f = 0; f < cfg_.features_per_level; ++f) out[f_base + f] += weight * e[f];
        });
    }

    /// Reverse of encode: each touched vertex entry receives its trilinear
    /// weight times the matching upstream slice, accumulated into `grad`
    /// (laid out like params). `atomic` switches to atomic adds for the
    /// shared-buffer fast mode (summation order then unspecified).
    void encode_backward(const S* p, const S* upstream, std::span<S> grad,
                         bool atomic = false) const {
        encode_backward_batch(1, p, DIM, upstream, cfg_.feature_dim(), grad, atomic);
    }

    /// Level-outer batched encode over n samples: one level's table stays
    /// cache-hot across the whole block, and slots are precomputed a chunk
    /// ahead so the gathers are prefetched. Per-sample arithmetic (and thus
    /// the result) is identical to encode(). Row strides are in scalars.
    void encode_batch(int n, const S* pts, std::size_t pt_stride, S* out,
                      std::size_t out_stride) const {
        if (cfg_.features_per_level == 2)
            encode_batch_impl<2>(n, pts, pt_stride, out, out_stride);
        else
            encode_batch_impl<0>(n, pts, pt_stride, out, out_stride);
    }

    void encode_backward_batch(int n, const S* pts, std::size_t pt_stride, const S* upstream,
                               std::size_t up_stride, std::span<S> grad, bool atomic = false) const {
        if (cfg_.features_per_level == 2) {
            if (atomic)
                backward_batch_impl<2, true>(n, pts, pt_stride, upstream, up_stride, grad);
            else
                backward_batch_impl<2, false>(n, pts, pt_stride, upstream, up_stride, grad);
        } else {
            if (atomic)
                backward_batch_impl<0, true>(n, pts, pt_stride, upstream, up_stride, grad);
            else
                backward_batch_impl<0, false>(n, pts, pt_stride, upstream, up_stride, grad);
        }
    }

  private:
    struct Level {
        int resolution = 0;
        bool hashed = false;
        std::uint64_t entries = 0;
        std::size_t offset = 0;
    };

    static constexpr int kCorners = 1 << DIM;
    static constexpr int kChunk = 128;  // samples per slot-precompute chunk

    /// Slots and weights for a chunk of samples at one level, with the
    /// table lines prefetched as each slot is produced.
    template <typename T>
    void chunk_slots(const Level& lv, const S* pts, std::size_t pt_stride, int count,
                     std::uint64_t table_mask, const T* table, int F, std::uint32_t* slots,
                     S* wts) const {
        for (int r = 0; r < count; ++r) {
            int c = 0;
            visit_level(lv, pts + r * pt_stride, table_mask, [&](std::uint64_t slot, S w) {
                slots[r * kCorners + c] = static_cast<std::uint32_t>(slot);
                wts[r * kCorners + c] = w;
                __builtin_prefetch(table + slot * static_cast<std::size_t>(F), 0, 1);
                ++c;
            });
        }
    }

    template <int FC>
    void encode_batch_impl(int n, const S* pts, std::size_t pt_stride, S* out,
                           std::size_t out_stride) const {
        int m = cfg_.feature_dim();
        for (int r = 0; r < n; ++r) {
            S* o = out + r * out_stride;
            for (int k = 0; k < m; ++k) o[k] = S(0);
        }
        const int F = FC > 0 ? FC : cfg_.features_per_level;
        std::uint64_t table_mask = (1ULL << cfg_.table_size_log2) - 1;
        std::uint32_t slots[kChunk * kCorners];
        S wts[kChunk * kCorners];
        for (int l = 0; l < cfg_.levels; ++l) {
            const Level& lv = levels_[l];
            const S* __restrict table = params_.data() + lv.offset;
            int f_base = l * F;
            for (int r0 = 0; r0 < n; r0 += kChunk) {
                int count = std::min(kChunk, n - r0);
                chunk_slots(lv, pts + r0 * pt_stride, pt_stride, count, table_mask, table, F, slots,
                            wts);
                for (int r = 0; r < count; ++r) {
                    S* __restrict o = out + (r0 + r) * out_stride + f_base;
                    for (int c = 0; c < kCorners; ++c) {
                        const S* __restrict e = table + slots[r * kCorners + c] *
                                                            static_cast<std::size_t>(F);
                        S w = wts[r * kCorners + c];
                        if constexpr (FC == 2) {
                            o[0] += w * e[0];
                            o[1] += w * e[1];
                        } else {
                            for (int f = 0; f < F; ++f) o[f] += w * e[f];
                        }
                    }
                }
            }
        }
    }

    template <int FC, bool Atomic>
    void backward_batch_impl(int n, const S* pts, std::size_t pt_stride, const S* upstream,
                             std::size_t up_stride, std::span<S> grad) const {
        const int F = FC > 0 ? FC : cfg_.features_per_level;
        std::uint64_t table_mask = (1ULL << cfg_.table_size_log2) - 1;
        std::uint32_t slots[kChunk * kCorners];
        S wts[kChunk * kCorners];
        for (int l = 0; l < cfg_.levels; ++l) {
            const Level& lv = levels_[l];
            S* __restrict gt = grad.data() + lv.offset;
            int f_base = l * F;
            for (int r0 = 0; r0 < n; r0 += kChunk) {
                int count = std::min(kChunk, n - r0);
                chunk_slots(lv, pts + r0 * pt_stride, pt_stride, count, table_mask, gt, F, slots,
                            wts);
                for (int r = 0; r < count; ++r) {
                    const S* __restrict up = upstream + (r0 + r) * up_stride + f_base;
                    for (int c = 0; c < kCorners; ++c) {
                        S* __restrict g =
                            gt + slots[r * kCorners + c] * static_cast<std::size_t>(F);
                        S w = wts[r * kCorners + c];
                        if constexpr (Atomic) {
                            for (int f = 0; f < F; ++f)
                                std::atomic_ref<S>(g[f]).fetch_add(w * up[f],
                                                                   std::memory_order_relaxed);
                        } else if constexpr (FC == 2) {
                            g[0] += w * up[0];
                            g[1] += w * up[1];
                        } else {
                            for (int f = 0; f < F; ++f) g[f] += w * up[f];
                        }
                    }
                }
            }
        }
    }

    /// One level's 2^DIM corners for one (unclamped) sample point. Per-axis
    /// weights and slot contributions are precomputed, so each corner costs
    /// DIM-1 multiplies and DIM-1 xor/adds. Dense slots add row-major
    /// strides (first axis fastest); hashed slots xor the per-axis prime
    /// products and mask.
    template <typename Fn>
    void visit_level(const Level& lv, const S* p, std::uint64_t table_mask, Fn&& fn) const {
        int K = lv.resolution;
        S wa[DIM][2];
        std::uint64_t sa[DIM][2];
        std::uint64_t stride = 1;
        for (int d = 0; d < DIM; ++d) {
            S q = std::min(S(1), std::max(S(0), p[d]));
            S x = q * static_cast<S>(K);
            int i0 = std::min(static_cast<int>(x), K - 1);
            S f = x - static_cast<S>(i0);
            wa[d][0] = S(1) - f;
            wa[d][1] = f;
            std::uint64_t b = static_cast<std::uint64_t>(i0);
            if (lv.hashed) {
                sa[d][0] = b * detail::kHashPrimes[d];
                sa[d][1] = (b + 1) * detail::kHashPrimes[d];
            } else {
                sa[d][0] = b * stride;
                sa[d][1] = (b + 1) * stride;
                stride *= static_cast<std::uint64_t>(K) + 1;
            }
        }
        for (int c = 0; c < (1 << DIM); ++c) {
            S w = wa[0][c & 1];
            std::uint64_t slot = sa[0][c & 1];
            if (lv.hashed) {
                for (int d = 1; d < DIM; ++d) {
                    w *= wa[d][(c >> d) & 1];
                    slot ^= sa[d][(c >> d) & 1];
                }
                slot &= table_mask;
            } else {
                for (int d = 1; d < DIM; ++d) {
                    w *= wa[d][(c >> d) & 1];
                    slot += sa[d][(c >> d) & 1];
                }
            }
            fn(static_cast<std::uint64_t>(slot), w);
        }
    }

    template <typename Fn>
    void corner_visit(const S* p, Fn&& fn) const {
        std::uint64_t table_mask = (1ULL << cfg_.table_size_log2) - 1;
        for (int l = 0; l < cfg_.levels; ++l) {
            int f_base = l * cfg_.features_per_level;
            visit_level(levels_[l], p, table_mask,
                        [&](std::uint64_t slot, S w) { fn(l, f_base, static_cast<std::size_t>(slot), w); });
        }
    }

    HashGridConfig cfg_;
    std::vector<Level> levels_;
    std::vector<S> params_;
};

/// Exact trainable scalar count for a grid with this config.
template <int DIM>
inline std::size_t hash_grid_param_count(const HashGridConfig& cfg) {
    std::size_t total = 0;
    for (int l = 0; l < cfg.levels; ++l) {
        std::uint64_t dense = 1;
        for (int d = 0; d < DIM; ++d)
            dense *= static_cast<std::uint64_t>(cfg.level_resolution(l)) + 1;
        std::uint64_t entries = std::min<std::uint64_t>(dense, 1ULL << cfg.table_size_log2);
        total += static_cast<std::size_t>(entries) * cfg.features_per_level;
    }
    return total;
}

}  // namespace trf4d
