#pragma once

#include <bit>
#include <cstring>
#include <fstream>

#include "trf4d/adam.hpp"
#include "trf4d/train_state.hpp"

namespace trf4d {

// ---------------------------------------------------------------------------
// Checkpoint blob: magic "TRF4D\0", version u32, backend u8, then rebuild
// info (options + plan + seed), then per-grid config ints (u64 LE) and raw
// f32 parameters in declaration order, heads after all grid blobs (density
// then radiance), then the training trailer (iteration, RNG, Adam moments,
// sampler state) so a resumed run is bit-exact.

namespace ckpt_detail {

inline void put_u8(std::ostream& os, std::uint8_t v) { os.put(static_cast<char>(v)); }
inline void put_u32(std::ostream& os, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) os.put(static_cast<char>(v >> (8 * i)));
}
inline void put_u64(std::ostream& os, std::uint64_t v) { detail::put_u64_le(os, v); }
inline void put_f32(std::ostream& os, float v) { put_u32(os, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline std::uint8_t get_u8(std::istream& is) { return static_cast<std::uint8_t>(is.get()); }
inline std::uint32_t get_u32(std::istream& is) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(is.get())) << (8 * i);
    return v;
}
inline std::uint64_t get_u64(std::istream& is) { return detail::get_u64_le(is); }
inline float get_f32(std::istream& is) { return std::bit_cast<float>(get_u32(is)); }
inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

inline void put_f32_array(std::ostream& os, const float* v, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(v), static_cast<std::streamsize>(n * 4));
    } else {
        for (std::size_t i = 0; i < n; ++i) put_f32(os, v[i]);
    }
}
inline void get_f32_array(std::istream& is, float* v, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        is.read(reinterpret_cast<char*>(v), static_cast<std::streamsize>(n * 4));
    } else {
        for (std::size_t i = 0; i < n; ++i) v[i] = get_f32(is);
    }
}

inline constexpr char kMagic[6] = {'T', 'R', 'F', '4', 'D', '\0'};
inline constexpr std::uint32_t kVersion = 1;

}  // namespace ckpt_detail

struct TrainerResumeState {
    double spr_estimate = 0;       // samples-per-ray running estimate
    std::uint64_t nonfinite = 0;   // accumulated skipped-gradient count
};

inline void save_checkpoint(const std::filesystem::path& path, const TrainState<float>& state,
                            const Adam<float>* adam = nullptr,
                            const TrainerResumeState* resume = nullptr) {
    namespace d = ckpt_detail;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
    os.write(d::kMagic, 6);
    d::put_u32(os, d::kVersion);
    const FieldOptions& o = state.base_options();
    d::put_u8(os, static_cast<std::uint8_t>(o.backend));
    d::put_u64(os, state.seed());
    d::put_u8(os, state.table_from_plan() ? 1 : 0);
    for (std::uint64_t v : {std::uint64_t(o.grid.levels), std::uint64_t(o.grid.features_per_level),
                            std::uint64_t(o.grid.coarsest), std::uint64_t(o.grid.finest),
                            std::uint64_t(o.grid.table_size_log2),
                            std::uint64_t(o.dense1d_spatial_res), std::uint64_t(o.hex2d_finest),
                            std::uint64_t(o.tngp_table_log2)})
        d::put_u64(os, v);
    d::put_u64(os, state.plan().segments.size());
    for (const Segment& s : state.plan().segments) {
        d::put_u64(os, static_cast<std::uint64_t>(s.start));
        d::put_u64(os, static_cast<std::uint64_t>(s.length));
        d::put_u64(os, static_cast<std::uint64_t>(s.hash_capacity_log2));
    }
    for (const auto& f : state.fields())
        for (int c = 0; c < f.n_components(); ++c) {
            auto ints = f.component_config_ints(c);
            d::put_u64(os, ints.size());
            for (auto v : ints) d::put_u64(os, v);
            const auto& p = f.component_params(c);
            d::put_u64(os, p.size());
            d::put_f32_array(os, p.data(), p.size());
        }
    for (const Mlp<float>* head : {&state.density_head(), &state.radiance_head()}) {
        d::put_u64(os, head->widths().size());
        for (int w : head->widths()) d::put_u64(os, static_cast<std::uint64_t>(w));
        d::put_u64(os, head->param_count());
        d::put_f32_array(os, head->params().data(), head->param_count());
    }
    d::put_u64(os, state.iteration);
    d::put_u64(os, state.rng().state_word());
    d::put_u64(os, state.rng().inc_word());
    d::put_u8(os, adam ? 1 : 0);
    if (adam) {
        d::put_f64(os, adam->beta1());
        d::put_f64(os, adam->beta2());
        d::put_f64(os, adam->eps());
        const auto& m = adam->moments_m();
        const auto& v = adam->moments_v();
        d::put_u64(os, m.size());
        d::put_f32_array(os, m.data(), m.size());
        d::put_f32_array(os, v.data(), v.size());
        d::put_u64(os, adam->nonfinite_count());
    }
    d::put_f64(os, resume ? resume->spr_estimate : 0.0);
    d::put_u64(os, resume ? resume->nonfinite : 0);
    if (!os) throw IoError("checkpoint write failed: " + path.string());
}

struct Checkpoint {
    TrainState<float> state;
    std::optional<Adam<float>> adam;
    TrainerResumeState resume;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    namespace d = ckpt_detail;
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path.string());
    char magic[6];
    is.read(magic, 6);
    if (!is || std::memcmp(magic, d::kMagic, 6) != 0)
        throw DecodeError("bad checkpoint magic: " + path.string());
    if (d::get_u32(is) != d::kVersion) throw DecodeError("unsupported checkpoint version");

    FieldOptions o;
    o.backend = static_cast<Backend>(d::get_u8(is));
    std::uint64_t seed = d::get_u64(is);
    bool table_from_plan = d::get_u8(is) != 0;
    o.grid.levels = static_cast<int>(d::get_u64(is));
    o.grid.features_per_level = static_cast<int>(d::get_u64(is));
    o.grid.coarsest = static_cast<int>(d::get_u64(is));
    o.grid.finest = static_cast<int>(d::get_u64(is));
    o.grid.table_size_log2 = static_cast<int>(d::get_u64(is));
    o.dense1d_spatial_res = static_cast<int>(d::get_u64(is));
    o.hex2d_finest = static_cast<int>(d::get_u64(is));
    o.tngp_table_log2 = static_cast<int>(d::get_u64(is));
    SegmentPlan plan;
    std::uint64_t nseg = d::get_u64(is);
    for (std::uint64_t i = 0; i < nseg; ++i) {
        Segment s;
        s.start = static_cast<int>(d::get_u64(is));
        s.length = static_cast<int>(d::get_u64(is));
        s.hash_capacity_log2 = static_cast<int>(d::get_u64(is));
        plan.segments.push_back(s);
    }
    if (!is) throw DecodeError("truncated checkpoint header: " + path.string());

    Checkpoint out{TrainState<float>(o, plan, seed, table_from_plan), std::nullopt, {}};
    for (auto& f : out.state.fields())
        for (int c = 0; c < f.n_components(); ++c) {
            auto expect = f.component_config_ints(c);
            std::uint64_t n_ints = d::get_u64(is);
            if (n_ints != expect.size()) throw DecodeError("checkpoint grid config mismatch");
            for (auto v : expect)
                if (d::get_u64(is) != v) throw DecodeError("checkpoint grid config mismatch");
            auto& p = f.component_params(c);
            if (d::get_u64(is) != p.size()) throw DecodeError("checkpoint grid size mismatch");
            d::get_f32_array(is, p.data(), p.size());
        }
    for (Mlp<float>* head : {&out.state.density_head(), &out.state.radiance_head()}) {
        std::uint64_t nw = d::get_u64(is);
        if (nw != head->widths().size()) throw DecodeError("checkpoint head layout mismatch");
        for (int w : head->widths())
            if (d::get_u64(is) != static_cast<std::uint64_t>(w))
                throw DecodeError("checkpoint head layout mismatch");
        if (d::get_u64(is) != head->param_count())
            throw DecodeError("checkpoint head size mismatch");
        d::get_f32_array(is, head->params().data(), head->param_count());
    }
    out.state.iteration = d::get_u64(is);
    std::uint64_t rs = d::get_u64(is), ri = d::get_u64(is);
    out.state.rng().restore(rs, ri);
    if (d::get_u8(is)) {
        double b1 = d::get_f64(is), b2 = d::get_f64(is), eps = d::get_f64(is);
        Adam<float> adam(out.state.total_param_count(), b1, b2, eps);
        std::uint64_t n = d::get_u64(is);
        if (n != adam.moments_m().size()) throw DecodeError("checkpoint moment size mismatch");
        d::get_f32_array(is, adam.moments_m().data(), n);
        d::get_f32_array(is, adam.moments_v().data(), n);
        adam.restore_nonfinite(d::get_u64(is));
        out.adam = std::move(adam);
    }
    out.resume.spr_estimate = d::get_f64(is);
    out.resume.nonfinite = d::get_u64(is);
    if (!is) throw DecodeError("truncated checkpoint: " + path.string());
    return out;
}

}  // namespace trf4d
