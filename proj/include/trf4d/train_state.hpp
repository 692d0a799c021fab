#pragma once

#include <memory>

#include "trf4d/feature_field.hpp"
#include "trf4d/mlp.hpp"
#include "trf4d/occupancy.hpp"

namespace trf4d {

// ---------------------------------------------------------------------------
// Everything trainable: one 4D feature field per temporal segment plus the
// two MLP heads shared by the whole sequence. Parameter arrays are exposed
// through an ordered registry so gradients, Adam moments and checkpoints all
// agree on one flat layout.

template <typename S>
class TrainState {
  public:
    TrainState() = default;

    TrainState(FieldOptions base, SegmentPlan plan, std::uint64_t seed, bool table_from_plan)
        : base_options_(base), plan_(std::move(plan)), seed_(seed),
          table_from_plan_(table_from_plan), rng_(mix_seed(seed ^ 0x7261696eULL)) {
        plan_.validate();
        require(!plan_.segments.empty(), "TrainState: empty segment plan");
        for (std::size_t k = 0; k < plan_.segments.size(); ++k) {
            FieldOptions o = base;
            if (table_from_plan) o.grid.table_size_log2 = plan_.segments[k].hash_capacity_log2;
            fields_.emplace_back(o, plan_.segments[k], mix_seed(seed ^ (0xf1e1dULL + k)));
        }
        density_head_ = make_density_mlp<S>(base.grid.feature_dim(), mix_seed(seed ^ 0xd35ULL));
        radiance_head_ = make_radiance_mlp<S>(mix_seed(seed ^ 0x7adULL));
        rebuild_registry();
    }

    const FieldOptions& base_options() const { return base_options_; }
    const SegmentPlan& plan() const { return plan_; }
    std::uint64_t seed() const { return seed_; }
    bool table_from_plan() const { return table_from_plan_; }
    int feature_dim() const { return base_options_.grid.feature_dim(); }

    std::vector<FeatureField4D<S>>& fields() { return fields_; }
    const std::vector<FeatureField4D<S>>& fields() const { return fields_; }
    Mlp<S>& density_head() { return density_head_; }
    const Mlp<S>& density_head() const { return density_head_; }
    Mlp<S>& radiance_head() { return radiance_head_; }
    const Mlp<S>& radiance_head() const { return radiance_head_; }

    std::uint64_t iteration = 0;
    Pcg32& rng() { return rng_; }
    const Pcg32& rng() const { return rng_; }

    const FeatureField4D<S>& field_for_frame(int frame) const {
        int k = plan_.segment_for_frame(frame);
        require(k >= 0, "TrainState: frame outside the segment plan");
        return fields_[k];
    }
    int segment_index_for_frame(int frame) const { return plan_.segment_for_frame(frame); }

    // -- flat parameter registry ---------------------------------------------

    struct ParamEntry {
        std::vector<S>* values;
        std::size_t offset;  // into the flat parameter/gradient space
    };

    std::size_t total_param_count() const { return total_params_; }
    const std::vector<ParamEntry>& registry() { return entries_; }

    /// Offset of a field's parameter block inside the flat space.
    std::size_t field_offset(int segment_index) const { return field_offsets_[segment_index]; }
    std::size_t density_offset() const { return density_offset_; }
    std::size_t radiance_offset() const { return radiance_offset_; }

    template <typename Fn>
    void for_each_param_array(Fn&& fn) {  // fn(offset, std::vector<S>&)
        for (auto& e : entries_) fn(e.offset, *e.values);
    }
    template <typename Fn>
    void for_each_param_array(Fn&& fn) const {
        for (const auto& e : entries_) fn(e.offset, const_cast<const std::vector<S>&>(*e.values));
    }

    /// Rebuild with a different scalar type (used by the f64 reference
    /// renderer and the f64 gradient checks).
    template <typename S2>
    TrainState<S2> cast() const {
        TrainState<S2> out(base_options_, plan_, seed_, table_from_plan_);
        out.iteration = iteration;
        auto src = entries_.begin();
        out.for_each_param_array([&](std::size_t, std::vector<S2>& dst) {
            const std::vector<S>& s = *src++->values;
            require(s.size() == dst.size(), "TrainState::cast: layout mismatch");
            for (std::size_t i = 0; i < s.size(); ++i) dst[i] = static_cast<S2>(s[i]);
        });
        return out;
    }

  private:
    void rebuild_registry() {
        entries_.clear();
        field_offsets_.clear();
        std::size_t off = 0;
        for (auto& f : fields_) {
            field_offsets_.push_back(off);
            for (int c = 0; c < f.n_components(); ++c) {
                entries_.push_back({&f.component_params(c), off});
                off += f.component_params(c).size();
            }
        }
        density_offset_ = off;
        entries_.push_back({&density_head_.params(), off});
        off += density_head_.param_count();
        radiance_offset_ = off;
        entries_.push_back({&radiance_head_.params(), off});
        off += radiance_head_.param_count();
        total_params_ = off;
    }

    FieldOptions base_options_;
    SegmentPlan plan_;
    std::uint64_t seed_ = 0;
    bool table_from_plan_ = false;
    std::vector<FeatureField4D<S>> fields_;
    Mlp<S> density_head_;
    Mlp<S> radiance_head_;
    Pcg32 rng_;

    std::vector<ParamEntry> entries_;
    std::vector<std::size_t> field_offsets_;
    std::size_t density_offset_ = 0, radiance_offset_ = 0, total_params_ = 0;
};

}  // namespace trf4d
