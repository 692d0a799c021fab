#pragma once

#include <atomic>
#include <span>
#include <vector>

#include "trf4d/common.hpp"

namespace trf4d {

/// Dense array of R trainable m-vectors over [0,1]; sampling is linear
/// interpolation between the nodes at i/(R-1).
template <typename S>
class DenseGrid1D {
  public:
    DenseGrid1D() = default;

    DenseGrid1D(int resolution, int feature_dim, std::uint64_t seed)
        : resolution_(resolution), feature_dim_(feature_dim),
          params_(static_cast<std::size_t>(resolution) * feature_dim) {
        require(resolution >= 2, "DenseGrid1D: resolution must be >= 2");
        require(feature_dim >= 1, "DenseGrid1D: feature_dim must be >= 1");
        Pcg32 rng(seed);
        for (S& p : params_) p = static_cast<S>(rng.uniform(-1e-4, 1e-4));
    }

    int resolution() const { return resolution_; }
    int feature_dim() const { return feature_dim_; }
    std::size_t param_count() const { return params_.size(); }
    std::vector<S>& params() { return params_; }
    const std::vector<S>& params() const { return params_; }

    void fill(S v) {
        for (S& p : params_) p = v;
    }

    void sample(S x, S* out) const {
        auto [i, f] = locate(x);
        const S* a = params_.data() + static_cast<std::size_t>(i) * feature_dim_;
        const S* b = a + feature_dim_;
        for (int k = 0; k < feature_dim_; ++k) out[k] = (S(1) - f) * a[k] + f * b[k];
    }

    void sample_backward(S x, const S* upstream, std::span<S> grad, bool atomic = false) const {
        auto [i, f] = locate(x);
        S* a = grad.data() + static_cast<std::size_t>(i) * feature_dim_;
        S* b = a + feature_dim_;
        if (atomic) {
            for (int k = 0; k < feature_dim_; ++k) {
                std::atomic_ref<S>(a[k]).fetch_add((S(1) - f) * upstream[k], std::memory_order_relaxed);
                std::atomic_ref<S>(b[k]).fetch_add(f * upstream[k], std::memory_order_relaxed);
            }
        } else {
            for (int k = 0; k < feature_dim_; ++k) {
                a[k] += (S(1) - f) * upstream[k];
                b[k] += f * upstream[k];
            }
        }
    }

  private:
    std::pair<int, S> locate(S x) const {
        x = std::min(S(1), std::max(S(0), x));
        S t = x * static_cast<S>(resolution_ - 1);
        int i = std::min(static_cast<int>(t), resolution_ - 2);
        return {i, t - static_cast<S>(i)};
    }

    int resolution_ = 0;
    int feature_dim_ = 0;
    std::vector<S> params_;
};

}  // namespace trf4d
