#pragma once

#include <span>

#include "trf4d/train_state.hpp"

namespace trf4d {

/// Exponential decay hitting lr_start at iteration 0 and lr_end at the final
/// iteration (total_iterations - 1) exactly.
inline double lr_schedule(double lr_start, double lr_end, std::uint64_t iteration,
                          std::uint64_t total_iterations) {
    if (total_iterations <= 1) return lr_start;
    double frac = static_cast<double>(iteration) / static_cast<double>(total_iterations - 1);
    return lr_start * std::pow(lr_end / lr_start, frac);
}

template <typename S>
class Adam {
  public:
    Adam() = default;
    Adam(std::size_t n_params, double beta1 = 0.9, double beta2 = 0.99, double eps = 1e-15)
        : beta1_(beta1), beta2_(beta2), eps_(eps), m_(n_params, S(0)), v_(n_params, S(0)) {}

    double beta1() const { return beta1_; }
    double beta2() const { return beta2_; }
    double eps() const { return eps_; }
    std::vector<S>& moments_m() { return m_; }
    std::vector<S>& moments_v() { return v_; }
    const std::vector<S>& moments_m() const { return m_; }
    const std::vector<S>& moments_v() const { return v_; }
    std::uint64_t nonfinite_count() const { return nonfinite_; }

    /// One update over the state's flat parameter space. `grad` must align
    /// with the registry. Non-finite gradients skip their parameter entirely
    /// and are counted. Single-threaded by contract.
    void step(TrainState<S>& state, std::span<const S> grad, double lr) {
        require(grad.size() == state.total_param_count() && m_.size() == grad.size(),
                "Adam::step: gradient size mismatch");
        double t = static_cast<double>(state.iteration) + 1.0;
        S inv_bc1 = static_cast<S>(1.0 / (1.0 - std::pow(beta1_, t)));
        S inv_bc2 = static_cast<S>(1.0 / (1.0 - std::pow(beta2_, t)));
        S b1 = static_cast<S>(beta1_), b2 = static_cast<S>(beta2_);
        S lr_s = static_cast<S>(lr), eps_s = static_cast<S>(eps_);
        std::uint64_t bad = 0;
        state.for_each_param_array([&](std::size_t off, std::vector<S>& p) {
            const S* __restrict g = grad.data() + off;
            S* __restrict m = m_.data() + off;
            S* __restrict v = v_.data() + off;
            S* __restrict pp = p.data();
            std::size_t n = p.size();
            // vectorizable finiteness scan; the tight loop runs branch-free
            bool clean = true;
            for (std::size_t i = 0; i < n; ++i) clean &= (g[i] - g[i] == S(0));
            if (clean) {
                for (std::size_t i = 0; i < n; ++i) {
                    S mi = b1 * m[i] + (S(1) - b1) * g[i];
                    S vi = b2 * v[i] + (S(1) - b2) * g[i] * g[i];
                    m[i] = mi;
                    v[i] = vi;
                    pp[i] -= lr_s * (mi * inv_bc1) / (std::sqrt(vi * inv_bc2) + eps_s);
                }
            } else {
                for (std::size_t i = 0; i < n; ++i) {
                    if (!std::isfinite(g[i])) {
                        ++bad;
                        continue;
                    }
                    S mi = b1 * m[i] + (S(1) - b1) * g[i];
                    S vi = b2 * v[i] + (S(1) - b2) * g[i] * g[i];
                    m[i] = mi;
                    v[i] = vi;
                    pp[i] -= lr_s * (mi * inv_bc1) / (std::sqrt(vi * inv_bc2) + eps_s);
                }
            }
        });
        nonfinite_ += bad;
        last_nonfinite_ = bad;
    }

    std::uint64_t last_nonfinite() const { return last_nonfinite_; }
    void restore_nonfinite(std::uint64_t n) { nonfinite_ = n; }

  private:
    double beta1_ = 0.9, beta2_ = 0.99, eps_ = 1e-15;
    std::vector<S> m_, v_;
    std::uint64_t nonfinite_ = 0, last_nonfinite_ = 0;
};

}  // namespace trf4d
