#pragma once

#include <array>
#include <cstring>
#include <numeric>
#include <span>
#include <vector>

#include "trf4d/common.hpp"
#include "trf4d/sh.hpp"

namespace trf4d {

namespace mlp_detail {

// GNU vector extension helpers for the layer microkernels: fixed-size
// accumulators in these types reliably live in SIMD registers.
template <typename S>
struct Vh {
    typedef S vec __attribute__((vector_size(32)));
    static constexpr int kLanes = static_cast<int>(32 / sizeof(S));
    static vec load(const S* p) {
        vec v;
        std::memcpy(&v, p, sizeof(v));
        return v;
    }
    static void store(S* p, vec v) { std::memcpy(p, &v, sizeof(v)); }
    static vec splat(S x) { return vec{} + x; }  // scalar broadcasts
    static S hsum(vec v) {
        S s[kLanes];
        std::memcpy(s, &v, sizeof(v));
        // fixed pairwise order keeps results deterministic
        for (int step = 1; step < kLanes; step *= 2)
            for (int k = 0; k + step < kLanes; k += 2 * step) s[k] += s[k + step];
        return s[0];
    }
};

}  // namespace mlp_detail

// ---------------------------------------------------------------------------
// Fully-connected net with ReLU hidden activations and a raw linear output.
// Weights are stored input-major (W[i][j] contiguous in j) so both the
// forward pass and the weight-gradient outer products stream along the
// output dimension. Params layout per layer: W then b.

template <typename S>
class Mlp {
  public:
    Mlp() = default;

    Mlp(std::vector<int> widths, std::uint64_t seed) : widths_(std::move(widths)) {
        require(widths_.size() >= 2, "Mlp: need at least input and output widths");
        std::size_t total = 0;
        for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
            layer_offsets_.push_back(total);
            total += static_cast<std::size_t>(widths_[l] + 1) * widths_[l + 1];
        }
        params_.resize(total);
        Pcg32 rng(seed);
        for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
            int in = widths_[l], out = widths_[l + 1];
            double limit = std::sqrt(6.0 / in);  // He-uniform, zero bias
            S* w = params_.data() + layer_offsets_[l];
            for (int i = 0; i < in * out; ++i) w[i] = static_cast<S>(rng.uniform(-limit, limit));
            for (int j = 0; j < out; ++j) w[in * out + j] = S(0);
        }
    }

    const std::vector<int>& widths() const { return widths_; }
    int input_dim() const { return widths_.front(); }
    int output_dim() const { return widths_.back(); }
    int n_layers() const { return static_cast<int>(widths_.size()) - 1; }
    std::size_t param_count() const { return params_.size(); }
    std::vector<S>& params() { return params_; }
    const std::vector<S>& params() const { return params_; }

    /// Scratch floats forward() saves for backward: the hidden activations.
    int ctx_size() const {
        int n = 0;
        for (std::size_t l = 1; l + 1 < widths_.size(); ++l) n += widths_[l];
        return n;
    }

    /// out = raw network output (no output activation); ctx may be null when
    /// no backward pass will follow.
    void forward(const S* in, S* out, S* ctx = nullptr) const {
        S buf_a[kMaxWidth], buf_b[kMaxWidth];
        const S* cur = in;
        S* ctx_cursor = ctx;
        for (int l = 0; l < n_layers(); ++l) {
            int ni = widths_[l], no = widths_[l + 1];
            bool last = l + 1 == n_layers();
            S* dst = last ? out : (cur == buf_a ? buf_b : buf_a);
            const S* w = params_.data() + layer_offsets_[l];
            const S* b = w + static_cast<std::size_t>(ni) * no;
            for (int j = 0; j < no; ++j) dst[j] = b[j];
            for (int i = 0; i < ni; ++i) {
                S x = cur[i];
                const S* row = w + static_cast<std::size_t>(i) * no;
                for (int j = 0; j < no; ++j) dst[j] += x * row[j];
            }
            if (!last) {
                for (int j = 0; j < no; ++j) dst[j] = dst[j] > S(0) ? dst[j] : S(0);
                if (ctx_cursor) {
                    for (int j = 0; j < no; ++j) ctx_cursor[j] = dst[j];
                    ctx_cursor += no;
                }
            }
            cur = dst;
        }
    }

    /// Reverse pass. `dout` is d(loss)/d(raw output); param gradients
    /// accumulate into `grad` (layout = params); d(loss)/d(in) lands in
    /// `din` when non-null.
    void backward(const S* in, const S* ctx, const S* dout, S* din, std::span<S> grad) const {
        S dcur[kMaxWidth], dprev[kMaxWidth];
        int L = n_layers();
        for (int j = 0; j < widths_[L]; ++j) dcur[j] = dout[j];

        // offsets of each hidden activation inside ctx
        int hid_off[kMaxLayers];
        int acc = 0;
        for (int l = 1; l < L; ++l) {
            hid_off[l] = acc;
            acc += widths_[l];
        }

        for (int l = L - 1; l >= 0; --l) {
            int ni = widths_[l], no = widths_[l + 1];
            const S* a_prev = l == 0 ? in : ctx + hid_off[l];
            const S* w = params_.data() + layer_offsets_[l];
            S* gw = grad.data() + layer_offsets_[l];
            S* gb = gw + static_cast<std::size_t>(ni) * no;
            for (int j = 0; j < no; ++j) gb[j] += dcur[j];
            for (int i = 0; i < ni; ++i) {
                S x = a_prev[i];
                S* grow = gw + static_cast<std::size_t>(i) * no;
                const S* row = w + static_cast<std::size_t>(i) * no;
                S d = S(0);
                for (int j = 0; j < no; ++j) {
                    grow[j] += x * dcur[j];
                    d += row[j] * dcur[j];
                }
                dprev[i] = d;
            }
            if (l > 0) {
                // through the ReLU: a_prev > 0 passes, else blocked
                for (int i = 0; i < ni; ++i) dcur[i] = a_prev[i] > S(0) ? dprev[i] : S(0);
            } else if (din) {
                for (int i = 0; i < ni; ++i) din[i] = dprev[i];
            }
        }
    }

    /// Forward over `batch` rows (in: [batch][input], out: [batch][output],
    /// ctx: [batch][ctx_size]). Layer-outer loops keep one weight matrix hot
    /// across the whole batch; the known output widths get fixed-size
    /// kernels whose accumulators live in registers.
    void forward_batch(int batch, const S* in, S* out, S* ctx) const {
        int L = n_layers(), cs = ctx_size();
        for (int l = 0; l < L; ++l) {
            int ni = widths_[l], no = widths_[l + 1];
            bool last = l + 1 == L;
            const S* w = params_.data() + layer_offsets_[l];
            const S* b = w + static_cast<std::size_t>(ni) * no;
            int in_off = l == 0 ? 0 : hidden_offset(l);
            int out_off = last ? 0 : hidden_offset(l + 1);
            const S* x0 = l == 0 ? in : ctx + in_off;
            std::size_t x_stride = l == 0 ? static_cast<std::size_t>(ni) : cs;
            S* y0 = last ? out : ctx + out_off;
            std::size_t y_stride = last ? static_cast<std::size_t>(no) : cs;
            switch (no) {
                case 64:
                    forward_rows<64>(batch, x0, x_stride, y0, y_stride, w, b, ni, !last);
                    break;
                case kDensityOutWidth:
                    forward_rows<kDensityOutWidth>(batch, x0, x_stride, y0, y_stride, w, b, ni, !last);
                    break;
                case 3:
                    forward_rows<3>(batch, x0, x_stride, y0, y_stride, w, b, ni, !last);
                    break;
                default:
                    forward_rows<0>(batch, x0, x_stride, y0, y_stride, w, b, ni, !last, no);
            }
        }
    }

    /// Reverse pass over `batch` rows; dout is consumed, din may be null.
    /// `dflow` is caller scratch resized to batch * max-width.
    void backward_batch(int batch, const S* in, const S* ctx, const S* dout, S* din,
                        std::span<S> grad, std::vector<S>& dflow) const {
        int L = n_layers(), cs = ctx_size();
        int mw = 0;
        for (int w : widths_) mw = std::max(mw, w);
        dflow.resize(static_cast<std::size_t>(batch) * mw);
        for (int r = 0; r < batch; ++r) {
            const S* src = dout + static_cast<std::size_t>(r) * widths_[L];
            S* dst = dflow.data() + static_cast<std::size_t>(r) * mw;
            for (int j = 0; j < widths_[L]; ++j) dst[j] = src[j];
        }
        for (int l = L - 1; l >= 0; --l) {
            int ni = widths_[l], no = widths_[l + 1];
            const S* w = params_.data() + layer_offsets_[l];
            S* gw = grad.data() + layer_offsets_[l];
            int in_off = l == 0 ? 0 : hidden_offset(l);
            const S* a0 = l == 0 ? in : ctx + in_off;
            std::size_t a_stride = l == 0 ? static_cast<std::size_t>(ni) : cs;
            switch (no) {
                case 64:
                    backward_rows<64>(batch, a0, a_stride, dflow.data(), mw, w, gw, ni, l, din);
                    break;
                case kDensityOutWidth:
                    backward_rows<kDensityOutWidth>(batch, a0, a_stride, dflow.data(), mw, w, gw, ni,
                                                    l, din);
                    break;
                case 3:
                    backward_rows<3>(batch, a0, a_stride, dflow.data(), mw, w, gw, ni, l, din);
                    break;
                default:
                    backward_rows<0>(batch, a0, a_stride, dflow.data(), mw, w, gw, ni, l, din, no);
            }
        }
    }

    static constexpr int kMaxWidth = 128;
    static constexpr int kMaxLayers = 8;
    static constexpr int kDensityOutWidth = 16;

  private:
    /// Dot product accumulated in 16 fixed lanes so the compiler can
    /// vectorize it without reassociating a serial sum. The lane order is
    /// fixed, so results stay deterministic.
    static S lane_dot(const S* a, const S* b, int n) {
        constexpr int kLanes = 16;
        S lanes[kLanes] = {};
        int n16 = n - n % kLanes;
        for (int j = 0; j < n16; j += kLanes)
            for (int k = 0; k < kLanes; ++k) lanes[k] += a[j + k] * b[j + k];
        S tail = S(0);
        for (int j = n16; j < n; ++j) tail += a[j] * b[j];
        for (int k = 1; k < kLanes; ++k) lanes[0] += lanes[k];
        return lanes[0] + tail;
    }

    /// One layer forward over all rows. Widths known at compile time run a
    /// 4-row x 2-vector register tile (each weight row load serves four
    /// samples); everything else takes the scalar path. The per-output
    /// summation order (bias, then inputs ascending) is identical in both.
    template <int NO>
    static void forward_rows(int batch, const S* __restrict x0, std::size_t xs, S* __restrict y0,
                             std::size_t ys, const S* __restrict w, const S* __restrict b, int ni,
                             bool relu, int no_rt = 0) {
        using VH = mlp_detail::Vh<S>;
        using vec = typename VH::vec;
        constexpr int VL = VH::kLanes;
        const int no = NO > 0 ? NO : no_rt;
        int r0 = 0;
        if constexpr (NO >= 2 * VL && NO % (2 * VL) == 0) {
            for (; r0 + 4 <= batch; r0 += 4) {
                const S* __restrict xa = x0 + r0 * xs;
                const S* __restrict xb = x0 + (r0 + 1) * xs;
                const S* __restrict xc = x0 + (r0 + 2) * xs;
                const S* __restrict xd = x0 + (r0 + 3) * xs;
                for (int j0 = 0; j0 < NO; j0 += 2 * VL) {
                    vec b0 = VH::load(b + j0), b1 = VH::load(b + j0 + VL);
                    vec a00 = b0, a01 = b1, a10 = b0, a11 = b1;
                    vec a20 = b0, a21 = b1, a30 = b0, a31 = b1;
                    const S* __restrict wp = w + j0;
                    for (int i = 0; i < ni; ++i, wp += NO) {
                        vec r0v = VH::load(wp), r1v = VH::load(wp + VL);
                        vec x = VH::splat(xa[i]);
                        a00 += x * r0v;
                        a01 += x * r1v;
                        x = VH::splat(xb[i]);
                        a10 += x * r0v;
                        a11 += x * r1v;
                        x = VH::splat(xc[i]);
                        a20 += x * r0v;
                        a21 += x * r1v;
                        x = VH::splat(xd[i]);
                        a30 += x * r0v;
                        a31 += x * r1v;
                    }
                    S* out[4] = {y0 + r0 * ys + j0, y0 + (r0 + 1) * ys + j0,
                                 y0 + (r0 + 2) * ys + j0, y0 + (r0 + 3) * ys + j0};
                    VH::store(out[0], a00);
                    VH::store(out[0] + VL, a01);
                    VH::store(out[1], a10);
                    VH::store(out[1] + VL, a11);
                    VH::store(out[2], a20);
                    VH::store(out[2] + VL, a21);
                    VH::store(out[3], a30);
                    VH::store(out[3] + VL, a31);
                    if (relu)
                        for (int r = 0; r < 4; ++r)
                            for (int k = 0; k < 2 * VL; ++k)
                                out[r][k] = out[r][k] > S(0) ? out[r][k] : S(0);
                }
            }
        }
        for (; r0 < batch; ++r0) {
            const S* __restrict x = x0 + r0 * xs;
            S* __restrict y = y0 + r0 * ys;
            S acc[NO > 0 ? NO : kMaxWidth];
            for (int j = 0; j < no; ++j) acc[j] = b[j];
            for (int i = 0; i < ni; ++i) {
                S xi = x[i];
                const S* __restrict row = w + static_cast<std::size_t>(i) * no;
                for (int j = 0; j < no; ++j) acc[j] += xi * row[j];
            }
            if (relu)
                for (int j = 0; j < no; ++j) y[j] = acc[j] > S(0) ? acc[j] : S(0);
            else
                for (int j = 0; j < no; ++j) y[j] = acc[j];
        }
    }

    /// One layer backward over all rows, blocked so the d rows stay in L1:
    /// the weight-gradient rank-B update reads and writes each gradient row
    /// once per 64-row block (per-entry accumulation stays rows-ascending),
    /// and the input gradient streams the weights once per block.
    template <int NO>
    void backward_rows(int batch, const S* __restrict a0, std::size_t a_stride,
                       S* __restrict dflow, int mw, const S* __restrict w, S* __restrict gw,
                       int ni, int layer, S* __restrict din, int no_rt = 0) const {
        using VH = mlp_detail::Vh<S>;
        using vec = typename VH::vec;
        constexpr int VL = VH::kLanes;
        const int no = NO > 0 ? NO : no_rt;
        constexpr int kRB = 64;
        S* __restrict gb = gw + static_cast<std::size_t>(ni) * no;
        for (int r = 0; r < batch; ++r) {
            const S* __restrict dcur = dflow + static_cast<std::size_t>(r) * mw;
            for (int j = 0; j < no; ++j) gb[j] += dcur[j];
        }
        for (int rb = 0; rb < batch; rb += kRB) {
            int re = std::min(batch, rb + kRB);
            // gw[i][j] += sum_r a[r][i] * d[r][j]
            if constexpr (NO >= 2 * VL && NO % (2 * VL) == 0) {
                for (int i = 0; i < ni; ++i) {
                    const std::size_t wrow = static_cast<std::size_t>(i) * NO;
                    for (int j0 = 0; j0 < NO; j0 += 2 * VL) {
                        S* __restrict grow = gw + wrow + j0;
                        vec acc0 = VH::load(grow), acc1 = VH::load(grow + VL);
                        const S* __restrict dp = dflow + static_cast<std::size_t>(rb) * mw + j0;
                        for (int r = rb; r < re; ++r, dp += mw) {
                            vec x = VH::splat(a0[r * a_stride + i]);
                            acc0 += x * VH::load(dp);
                            acc1 += x * VH::load(dp + VL);
                        }
                        VH::store(grow, acc0);
                        VH::store(grow + VL, acc1);
                    }
                }
            } else {
                for (int r = rb; r < re; ++r) {
                    const S* __restrict ap = a0 + r * a_stride;
                    const S* __restrict dcur = dflow + static_cast<std::size_t>(r) * mw;
                    for (int i = 0; i < ni; ++i) {
                        S x = ap[i];
                        S* __restrict grow = gw + static_cast<std::size_t>(i) * no;
                        for (int j = 0; j < no; ++j) grow[j] += x * dcur[j];
                    }
                }
            }
            // input gradient (through the ReLU except at layer 0)
            for (int r = rb; r < re; ++r) {
                const S* __restrict a_prev = a0 + r * a_stride;
                S* __restrict dcur = dflow + static_cast<std::size_t>(r) * mw;
                S dprev[kMaxWidth];
                if constexpr (NO >= 2 * VL && NO % (2 * VL) == 0) {
                    for (int i = 0; i < ni; ++i) {
                        const S* __restrict row = w + static_cast<std::size_t>(i) * NO;
                        vec l0 = VH::splat(S(0)), l1 = VH::splat(S(0));
                        for (int j0 = 0; j0 < NO; j0 += 2 * VL) {
                            l0 += VH::load(row + j0) * VH::load(dcur + j0);
                            l1 += VH::load(row + j0 + VL) * VH::load(dcur + j0 + VL);
                        }
                        dprev[i] = VH::hsum(l0 + l1);
                    }
                } else {
                    for (int i = 0; i < ni; ++i)
                        dprev[i] = lane_dot(w + static_cast<std::size_t>(i) * no, dcur, no);
                }
                if (layer > 0) {
                    for (int i = 0; i < ni; ++i) dcur[i] = a_prev[i] > S(0) ? dprev[i] : S(0);
                } else if (din) {
                    S* __restrict d = din + static_cast<std::size_t>(r) * ni;
                    for (int i = 0; i < ni; ++i) d[i] = dprev[i];
                }
            }
        }
    }

    /// Offset of hidden layer l's activation inside one ctx row.
    int hidden_offset(int l) const {
        int off = 0;
        for (int k = 1; k < l; ++k) off += widths_[k];
        return off;
    }

    std::vector<int> widths_;
    std::vector<std::size_t> layer_offsets_;
    std::vector<S> params_;
};

// ---------------------------------------------------------------------------
// The two shared heads (density: 3 layers, radiance: 4 layers, hidden 64).

inline constexpr int kHiddenWidth = 64;
inline constexpr int kGeoDim = 15;
inline constexpr int kDensityOut = 1 + kGeoDim;
inline constexpr int kRadianceIn = kShDim + kGeoDim;  // 31
inline constexpr double kDensityClamp = 15.0;         // pre-exp clamp

template <typename S>
Mlp<S> make_density_mlp(int feature_dim, std::uint64_t seed) {
    return Mlp<S>({feature_dim, kHiddenWidth, kHiddenWidth, kDensityOut}, seed);
}

template <typename S>
Mlp<S> make_radiance_mlp(std::uint64_t seed) {
    return Mlp<S>({kRadianceIn, kHiddenWidth, kHiddenWidth, kHiddenWidth, 3}, seed);
}

template <typename S>
inline S density_activation(S raw0) {
    S c = std::min(S(kDensityClamp), std::max(S(-kDensityClamp), raw0));
    return std::exp(c);
}

/// d(sigma)/d(raw0); zero outside the clamp window.
template <typename S>
inline S density_activation_grad(S raw0, S sigma) {
    return (raw0 > S(-kDensityClamp) && raw0 < S(kDensityClamp)) ? sigma : S(0);
}

template <typename S>
inline S sigmoid(S x) {
    return S(1) / (S(1) + std::exp(-x));
}

/// sigma = exp(clamp(raw[0])), geo = raw[1..16].
template <typename S>
std::pair<S, std::array<S, kGeoDim>> density_head(const Mlp<S>& mlp, std::span<const S> feat) {
    require(static_cast<int>(feat.size()) == mlp.input_dim(), "density_head: feature dim mismatch");
    require(mlp.output_dim() == kDensityOut, "density_head: output dim must be 16");
    S raw[kDensityOut];
    mlp.forward(feat.data(), raw);
    std::array<S, kGeoDim> geo;
    for (int i = 0; i < kGeoDim; ++i) geo[i] = raw[1 + i];
    return {density_activation(raw[0]), geo};
}

/// rgb = sigmoid(mlp(concat(sh, geo))).
template <typename S>
std::array<S, 3> radiance_head(const Mlp<S>& mlp, std::span<const S> sh, std::span<const S> geo) {
    require(static_cast<int>(sh.size()) == kShDim && static_cast<int>(geo.size()) == kGeoDim,
            "radiance_head: input dims must be 16 + 15");
    require(mlp.input_dim() == kRadianceIn && mlp.output_dim() == 3,
            "radiance_head: head must map 31 -> 3");
    S in[kRadianceIn];
    for (int i = 0; i < kShDim; ++i) in[i] = sh[i];
    for (int i = 0; i < kGeoDim; ++i) in[kShDim + i] = geo[i];
    S raw[3];
    mlp.forward(in, raw);
    return {sigmoid(raw[0]), sigmoid(raw[1]), sigmoid(raw[2])};
}

}  // namespace trf4d
