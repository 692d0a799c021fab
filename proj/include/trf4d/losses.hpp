#pragma once

#include <span>

#include "trf4d/common.hpp"

namespace trf4d {

inline constexpr double kDefaultHuberDelta = 0.01;  // Eq. 8
inline constexpr double kDefaultMaskBeta = 1e-3;    // Eq. 10
inline constexpr double kBceClampEps = 1e-6;

/// Per-channel Huber on |pred - gt|, averaged over the 3 channels (Eq. 8).
template <typename S>
S huber_loss(const S* pred, const S* gt, S delta) {
    require(delta > S(0), "huber_loss: delta must be positive");
    S sum = S(0);
    for (int c = 0; c < 3; ++c) {
        S l = std::abs(pred[c] - gt[c]);
        sum += l <= delta ? S(0.5) * l * l : delta * (l - S(0.5) * delta);
    }
    return sum / S(3);
}

/// d(huber)/d(pred), scaled by `upstream`.
template <typename S>
void huber_loss_backward(const S* pred, const S* gt, S delta, S upstream, S* d_pred) {
    for (int c = 0; c < 3; ++c) {
        S d = pred[c] - gt[c];
        S g = std::abs(d) <= delta ? d : (d > S(0) ? delta : -delta);
        d_pred[c] = upstream * g / S(3);
    }
}

/// Standard minimizing BCE between the accumulated weight M-hat and the
/// binary ground-truth mask (Eq. 9; the printed equation drops the leading
/// minus and repeats log(M-hat) — see the IDR-style mask loss it cites).
/// M-hat is clamped to [eps, 1-eps] before the logs.
template <typename S>
S bce_mask_loss(S acc_weight, S gt_mask) {
    S e = S(kBceClampEps);
    S m = std::min(S(1) - e, std::max(e, acc_weight));
    return -(gt_mask * std::log(m) + (S(1) - gt_mask) * std::log(S(1) - m));
}

/// d(bce)/d(acc_weight); zero where the clamp is active.
template <typename S>
S bce_mask_loss_backward(S acc_weight, S gt_mask) {
    S e = S(kBceClampEps);
    if (acc_weight <= e || acc_weight >= S(1) - e) return S(0);
    return -gt_mask / acc_weight + (S(1) - gt_mask) / (S(1) - acc_weight);
}

/// Eq. 10: mean Huber over rays + beta * mean BCE over rays.
template <typename S>
S total_loss(std::span<const S> huber_per_ray, std::span<const S> bce_per_ray, S beta) {
    require(!huber_per_ray.empty() && huber_per_ray.size() == bce_per_ray.size(),
            "total_loss: empty or mismatched batch");
    S h = S(0), b = S(0);
    for (S v : huber_per_ray) h += v;
    for (S v : bce_per_ray) b += v;
    S n = static_cast<S>(huber_per_ray.size());
    return h / n + beta * (b / n);
}

}  // namespace trf4d
