#pragma once

#include <optional>
#include <string>

#include "trf4d/dense_grid.hpp"
#include "trf4d/hash_grid.hpp"
#include "trf4d/occupancy.hpp"

namespace trf4d {

enum class Backend : std::uint8_t { humanrf = 0, hex4d = 1, tngp = 2 };

/// Upper bound on m = L*F; keeps per-sample scratch on the stack.
inline constexpr int kMaxFeatureDim = 128;

inline const char* backend_name(Backend b) {
    switch (b) {
        case Backend::humanrf: return "humanrf";
        case Backend::hex4d: return "hex4d";
        case Backend::tngp: return "tngp";
    }
    return "?";
}

inline std::optional<Backend> backend_from_name(const std::string& s) {
    if (s == "humanrf") return Backend::humanrf;
    if (s == "hex4d") return Backend::hex4d;
    if (s == "tngp") return Backend::tngp;
    return std::nullopt;
}

struct FieldOptions {
    Backend backend = Backend::humanrf;
    HashGridConfig grid;           // 3D grids (humanrf) / base progression
    int dense1d_spatial_res = 64;  // R for the x/y/z vectors
    int hex2d_finest = 0;          // 0 -> grid.finest
    int tngp_table_log2 = 0;       // 0 -> grid.table_size_log2

    HashGridConfig hex2d_config() const {
        HashGridConfig c = grid;
        c.finest = hex2d_finest > 0 ? hex2d_finest : grid.finest;
        c.coarsest = std::min(c.coarsest, c.finest);
        c.table_size_log2 = 62;  // 2D planes are always dense
        return c;
    }
    HashGridConfig tngp_config() const {
        HashGridConfig c = grid;
        if (tngp_table_log2 > 0) c.table_size_log2 = tngp_table_log2;
        return c;
    }
};

// ---------------------------------------------------------------------------
// One temporal segment's trainable feature function T_xyzt: [0,1]^4 -> R^m.
//
//   humanrf:  T_xyz(xyz) o T_t(t) + T_xyt(xyt) o T_z(z)
//           + T_xzt(xzt) o T_y(y) + T_yzt(yzt) o T_x(x)
//   hex4d:    T_xy o T_zt + T_yz o T_xt + T_xz o T_yt   (dense 2D planes)
//   tngp:     a single 4D hash grid over (x, y, z, t)

template <typename S>
class FeatureField4D {
  public:
    FeatureField4D() = default;

    FeatureField4D(const FieldOptions& opt, Segment segment, std::uint64_t seed)
        : backend_(opt.backend), segment_(segment), feature_dim_(opt.grid.feature_dim()) {
        require(segment.length >= 1, "FeatureField4D: segment length must be >= 1");
        require(feature_dim_ <= kMaxFeatureDim, "FeatureField4D: feature dim exceeds kMaxFeatureDim");
        auto sub = [&](int i) { return mix_seed(seed ^ (0x51ed2701ULL + 0x9e3779b9ULL * i)); };
        switch (backend_) {
            case Backend::humanrf: {
                for (int i = 0; i < 4; ++i) hash3_.emplace_back(opt.grid, sub(i));
                int rt = std::max(segment.length, 2);
                dense1_.emplace_back(rt, feature_dim_, sub(4));  // T_t
                for (int i = 0; i < 3; ++i)                      // T_z, T_y, T_x
                    dense1_.emplace_back(opt.dense1d_spatial_res, feature_dim_, sub(5 + i));
                break;
            }
            case Backend::hex4d: {
                HashGridConfig c = opt.hex2d_config();
                for (int i = 0; i < 6; ++i) hash2_.emplace_back(c, sub(i));
                break;
            }
            case Backend::tngp:
                hash4_.emplace(opt.tngp_config(), sub(0));
                break;
        }
        offsets_.clear();
        std::size_t off = 0;
        for (int i = 0; i < n_components(); ++i) {
            offsets_.push_back(off);
            off += component_params(i).size();
        }
        total_params_ = off;
    }

    Backend backend() const { return backend_; }
    const Segment& segment() const { return segment_; }
    int feature_dim() const { return feature_dim_; }
    std::size_t param_count() const { return total_params_; }

    /// Frame's position within the segment, in [0,1].
    S t_local_for_frame(int frame) const {
        require(frame >= segment_.start && frame < segment_.start + segment_.length,
                "FeatureField4D: frame outside segment");
        return static_cast<S>(frame - segment_.start) /
               static_cast<S>(std::max(segment_.length - 1, 1));
    }

    /// Scratch floats query_ctx saves for backward.
    int ctx_size() const {
        switch (backend_) {
            case Backend::humanrf: return 8 * feature_dim_;
            case Backend::hex4d: return 6 * feature_dim_;
            case Backend::tngp: return 0;
        }
        return 0;
    }

    void query_ctx(const S* p, S t, S* out, S* ctx) const {
        int m = feature_dim_;
        switch (backend_) {
            case Backend::humanrf: {
                S in[4][3] = {{p[0], p[1], p[2]}, {p[0], p[1], t}, {p[0], p[2], t}, {p[1], p[2], t}};
                S sc[4] = {t, p[2], p[1], p[0]};
                for (int i = 0; i < 4; ++i) hash3_[i].encode(in[i], ctx + i * m);
                for (int i = 0; i < 4; ++i) dense1_[i].sample(sc[i], ctx + (4 + i) * m);
                for (int k = 0; k < m; ++k)
                    out[k] = ctx[k] * ctx[4 * m + k] + ctx[m + k] * ctx[5 * m + k] +
                             ctx[2 * m + k] * ctx[6 * m + k] + ctx[3 * m + k] * ctx[7 * m + k];
                break;
            }
            case Backend::hex4d: {
                S in[6][2] = {{p[0], p[1]}, {p[2], t},  {p[1], p[2]},
                              {p[0], t},   {p[0], p[2]}, {p[1], t}};
                for (int i = 0; i < 6; ++i) hash2_[i].encode(in[i], ctx + i * m);
                for (int k = 0; k < m; ++k)
                    out[k] = ctx[k] * ctx[m + k] + ctx[2 * m + k] * ctx[3 * m + k] +
                             ctx[4 * m + k] * ctx[5 * m + k];
                break;
            }
            case Backend::tngp: {
                S in[4] = {p[0], p[1], p[2], t};
                hash4_->encode(in, out);
                break;
            }
        }
    }

    void query(const S* p, S t, S* out) const {
        std::vector<S> ctx(ctx_size());
        query_ctx(p, t, out, ctx.data());
    }

    /// Accumulates d(loss)/d(params) into `grad` (length param_count(),
    /// components in declaration order). `ctx` must come from query_ctx at
    /// the same (p, t).
    void backward_ctx(const S* p, S t, const S* upstream, const S* ctx, std::span<S> grad,
                      bool atomic = false) const {
        int m = feature_dim_;
        S tmp[kMaxFeatureDim];
        auto slice = [&](int i) {
            return grad.subspan(offsets_[i], component_params(i).size());
        };
        switch (backend_) {
            case Backend::humanrf: {
                S in[4][3] = {{p[0], p[1], p[2]}, {p[0], p[1], t}, {p[0], p[2], t}, {p[1], p[2], t}};
                S sc[4] = {t, p[2], p[1], p[0]};
                for (int i = 0; i < 4; ++i) {
                    for (int k = 0; k < m; ++k) tmp[k] = upstream[k] * ctx[(4 + i) * m + k];
                    hash3_[i].encode_backward(in[i], tmp, slice(i), atomic);
                    for (int k = 0; k < m; ++k) tmp[k] = upstream[k] * ctx[i * m + k];
                    dense1_[i].sample_backward(sc[i], tmp, slice(4 + i), atomic);
                }
                break;
            }
            case Backend::hex4d: {
                S in[6][2] = {{p[0], p[1]}, {p[2], t},  {p[1], p[2]},
                              {p[0], t},   {p[0], p[2]}, {p[1], t}};
                for (int pair = 0; pair < 3; ++pair) {
                    int a = 2 * pair, b = 2 * pair + 1;
                    for (int k = 0; k < m; ++k) tmp[k] = upstream[k] * ctx[b * m + k];
                    hash2_[a].encode_backward(in[a], tmp, slice(a), atomic);
                    for (int k = 0; k < m; ++k) tmp[k] = upstream[k] * ctx[a * m + k];
                    hash2_[b].encode_backward(in[b], tmp, slice(b), atomic);
                }
                break;
            }
            case Backend::tngp: {
                S in[4] = {p[0], p[1], p[2], t};
                hash4_->encode_backward(in, upstream, slice(0), atomic);
                break;
            }
        }
    }

    void backward(const S* p, S t, const S* upstream, std::span<S> grad) const {
        std::vector<S> out(feature_dim_), ctx(ctx_size());
        query_ctx(p, t, out.data(), ctx.data());
        backward_ctx(p, t, upstream, ctx.data(), grad);
    }

    // -- batched forms (grid-major traversal keeps one table cache-hot
    //    across the block; per-sample arithmetic matches the scalar forms) --

    // axis order: 0=x, 1=y, 2=z, 3=t
    static constexpr int kHumanrfPerm[4][3] = {{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}};
    static constexpr int kHexPerm[6][2] = {{0, 1}, {2, 3}, {1, 2}, {0, 3}, {0, 2}, {1, 3}};

    void query_ctx_batch(int n, const S* pts, S t, S* out, S* ctx, std::vector<S>& scratch) const {
        int m = feature_dim_;
        std::size_t cs = static_cast<std::size_t>(ctx_size());
        switch (backend_) {
            case Backend::humanrf: {
                scratch.resize(static_cast<std::size_t>(3) * n);
                for (int g = 0; g < 4; ++g) {
                    gather_axes(n, pts, t, kHumanrfPerm[g], 3, scratch.data());
                    hash3_[g].encode_batch(n, scratch.data(), 3, ctx + g * m, cs);
                }
                for (int r = 0; r < n; ++r) {
                    const S* p = pts + 3 * r;
                    S sc[4] = {t, p[2], p[1], p[0]};
                    S* c = ctx + r * cs;
                    for (int i = 0; i < 4; ++i) dense1_[i].sample(sc[i], c + (4 + i) * m);
                    S* o = out + static_cast<std::size_t>(r) * m;
                    for (int k = 0; k < m; ++k)
                        o[k] = c[k] * c[4 * m + k] + c[m + k] * c[5 * m + k] +
                               c[2 * m + k] * c[6 * m + k] + c[3 * m + k] * c[7 * m + k];
                }
                break;
            }
            case Backend::hex4d: {
                scratch.resize(static_cast<std::size_t>(2) * n);
                for (int g = 0; g < 6; ++g) {
                    gather_axes(n, pts, t, kHexPerm[g], 2, scratch.data());
                    hash2_[g].encode_batch(n, scratch.data(), 2, ctx + g * m, cs);
                }
                for (int r = 0; r < n; ++r) {
                    S* c = ctx + r * cs;
                    S* o = out + static_cast<std::size_t>(r) * m;
                    for (int k = 0; k < m; ++k)
                        o[k] = c[k] * c[m + k] + c[2 * m + k] * c[3 * m + k] +
                               c[4 * m + k] * c[5 * m + k];
                }
                break;
            }
            case Backend::tngp: {
                static constexpr int all4[4] = {0, 1, 2, 3};
                scratch.resize(static_cast<std::size_t>(4) * n);
                gather_axes(n, pts, t, all4, 4, scratch.data());
                hash4_->encode_batch(n, scratch.data(), 4, out, m);
                break;
            }
        }
    }

    void backward_ctx_batch(int n, const S* pts, S t, const S* upstream, const S* ctx,
                            std::span<S> grad, bool atomic, std::vector<S>& scratch) const {
        int m = feature_dim_;
        std::size_t cs = static_cast<std::size_t>(ctx_size());
        auto slice = [&](int i) { return grad.subspan(offsets_[i], component_params(i).size()); };
        switch (backend_) {
            case Backend::humanrf: {
                scratch.resize(static_cast<std::size_t>(3 + m) * n);
                S* in_buf = scratch.data();
                S* up_buf = scratch.data() + static_cast<std::size_t>(3) * n;
                for (int g = 0; g < 4; ++g) {
                    gather_axes(n, pts, t, kHumanrfPerm[g], 3, in_buf);
                    for (int r = 0; r < n; ++r) {
                        const S* up = upstream + static_cast<std::size_t>(r) * m;
                        const S* partner = ctx + r * cs + (4 + g) * m;
                        S* u = up_buf + static_cast<std::size_t>(r) * m;
                        for (int k = 0; k < m; ++k) u[k] = up[k] * partner[k];
                    }
                    hash3_[g].encode_backward_batch(n, in_buf, 3, up_buf, m, slice(g), atomic);
                }
                S tmp[kMaxFeatureDim];
                for (int r = 0; r < n; ++r) {
                    const S* p = pts + 3 * r;
                    const S* up = upstream + static_cast<std::size_t>(r) * m;
                    const S* c = ctx + r * cs;
                    S sc[4] = {t, p[2], p[1], p[0]};
                    for (int i = 0; i < 4; ++i) {
                        for (int k = 0; k < m; ++k) tmp[k] = up[k] * c[i * m + k];
                        dense1_[i].sample_backward(sc[i], tmp, slice(4 + i), atomic);
                    }
                }
                break;
            }
            case Backend::hex4d: {
                scratch.resize(static_cast<std::size_t>(2 + m) * n);
                S* in_buf = scratch.data();
                S* up_buf = scratch.data() + static_cast<std::size_t>(2) * n;
                for (int g = 0; g < 6; ++g) {
                    int partner = (g % 2 == 0) ? g + 1 : g - 1;
                    gather_axes(n, pts, t, kHexPerm[g], 2, in_buf);
                    for (int r = 0; r < n; ++r) {
                        const S* up = upstream + static_cast<std::size_t>(r) * m;
                        const S* pc = ctx + r * cs + partner * m;
                        S* u = up_buf + static_cast<std::size_t>(r) * m;
                        for (int k = 0; k < m; ++k) u[k] = up[k] * pc[k];
                    }
                    hash2_[g].encode_backward_batch(n, in_buf, 2, up_buf, m, slice(g), atomic);
                }
                break;
            }
            case Backend::tngp: {
                static constexpr int all4[4] = {0, 1, 2, 3};
                scratch.resize(static_cast<std::size_t>(4) * n);
                gather_axes(n, pts, t, all4, 4, scratch.data());
                hash4_->encode_backward_batch(n, scratch.data(), 4, upstream, m, slice(0), atomic);
                break;
            }
        }
    }

    // -- component access (serialization, optimizer wiring) ------------------

    int n_components() const {
        switch (backend_) {
            case Backend::humanrf: return 8;
            case Backend::hex4d: return 6;
            case Backend::tngp: return 1;
        }
        return 0;
    }

    std::vector<S>& component_params(int i) {
        return const_cast<std::vector<S>&>(std::as_const(*this).component_params(i));
    }
    const std::vector<S>& component_params(int i) const {
        switch (backend_) {
            case Backend::humanrf:
                return i < 4 ? hash3_[i].params() : dense1_[i - 4].params();
            case Backend::hex4d:
                return hash2_[i].params();
            case Backend::tngp:
                return hash4_->params();
        }
        throw DomainError("component_params: bad backend");
    }

    /// Config integers serialized ahead of each component's parameter blob.
    std::vector<std::uint64_t> component_config_ints(int i) const {
        auto grid_ints = [](int dim, const HashGridConfig& c) {
            return std::vector<std::uint64_t>{static_cast<std::uint64_t>(dim),
                                              static_cast<std::uint64_t>(c.levels),
                                              static_cast<std::uint64_t>(c.features_per_level),
                                              static_cast<std::uint64_t>(c.coarsest),
                                              static_cast<std::uint64_t>(c.finest),
                                              static_cast<std::uint64_t>(c.table_size_log2)};
        };
        switch (backend_) {
            case Backend::humanrf:
                if (i < 4) return grid_ints(3, hash3_[i].config());
                return {1ULL, static_cast<std::uint64_t>(dense1_[i - 4].resolution()),
                        static_cast<std::uint64_t>(dense1_[i - 4].feature_dim())};
            case Backend::hex4d:
                return grid_ints(2, hash2_[i].config());
            case Backend::tngp:
                return grid_ints(4, hash4_->config());
        }
        return {};
    }

    DenseGrid1D<S>& dense1(int i) { return dense1_[i]; }  // humanrf only; 0=t,1=z,2=y,3=x
    const DenseGrid1D<S>& dense1(int i) const { return dense1_[i]; }
    const HashGrid<3, S>& hash3(int i) const { return hash3_[i]; }
    const HashGrid<2, S>& hash2(int i) const { return hash2_[i]; }
    const HashGrid<4, S>& hash4() const { return *hash4_; }

  private:
    static void gather_axes(int n, const S* pts, S t, const int* perm, int dims, S* out) {
        for (int r = 0; r < n; ++r) {
            const S* p = pts + 3 * r;
            S v[4] = {p[0], p[1], p[2], t};
            for (int d = 0; d < dims; ++d) out[r * dims + d] = v[perm[d]];
        }
    }

    Backend backend_ = Backend::humanrf;
    Segment segment_;
    int feature_dim_ = 0;
    std::vector<HashGrid<3, S>> hash3_;
    std::vector<DenseGrid1D<S>> dense1_;
    std::vector<HashGrid<2, S>> hash2_;
    std::optional<HashGrid<4, S>> hash4_;
    std::vector<std::size_t> offsets_;
    std::size_t total_params_ = 0;
};

/// Exact trainable scalar count across all component grids.
template <typename S>
inline std::size_t count_parameters(const FeatureField4D<S>& field) {
    return field.param_count();
}

/// Parameter count a field with these options would have, without building it.
inline std::size_t field_param_count(const FieldOptions& opt, int segment_length) {
    switch (opt.backend) {
        case Backend::humanrf: {
            std::size_t n = 4 * hash_grid_param_count<3>(opt.grid);
            int m = opt.grid.feature_dim();
            n += static_cast<std::size_t>(std::max(segment_length, 2)) * m;
            n += 3 * static_cast<std::size_t>(opt.dense1d_spatial_res) * m;
            return n;
        }
        case Backend::hex4d:
            return 6 * hash_grid_param_count<2>(opt.hex2d_config());
        case Backend::tngp:
            return hash_grid_param_count<4>(opt.tngp_config());
    }
    return 0;
}

}  // namespace trf4d
