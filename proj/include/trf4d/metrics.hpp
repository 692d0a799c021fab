#pragma once

#include <iomanip>
#include <sstream>

#include "trf4d/dataset.hpp"
#include "trf4d/renderer.hpp"

namespace trf4d {

/// PSNR over ground-truth-foreground pixels only (all 3 channels, data range
/// 1.0). Identical images report the 99.0 sentinel. Empty foreground -> NaN
/// (callers skip and count those).
inline double psnr_foreground(const Image& pred, const Image& gt, const Image& gt_mask) {
    require(pred.width == gt.width && pred.height == gt.height && pred.channels == 3 &&
                gt.channels == 3 && gt_mask.channels == 1,
            "psnr_foreground: shape mismatch");
    double se = 0;
    std::size_t n = 0;
    for (int y = 0; y < gt.height; ++y)
        for (int x = 0; x < gt.width; ++x) {
            if (gt_mask.at(x, y) <= 0.5f) continue;
            for (int c = 0; c < 3; ++c) {
                double d = static_cast<double>(pred.at(x, y, c)) - gt.at(x, y, c);
                se += d * d;
            }
            n += 3;
        }
    if (n == 0) return std::numeric_limits<double>::quiet_NaN();
    double mse = se / static_cast<double>(n);
    if (mse == 0) return 99.0;
    return 10.0 * std::log10(1.0 / mse);
}

namespace detail {

inline std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> w(static_cast<std::size_t>(size) * size);
    double sum = 0;
    int h = size / 2;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double d2 = (x - h) * (x - h) + (y - h) * (y - h);
            w[y * size + x] = std::exp(-d2 / (2 * sigma * sigma));
            sum += w[y * size + x];
        }
    for (double& v : w) v /= sum;
    return w;
}

}  // namespace detail

/// SSIM with a Gaussian 11x11 window (sigma 1.5) and standard constants
/// C1=(0.01)^2, C2=(0.03)^2 for unit data range; per-channel maps averaged
/// over the valid (fully inside) window positions and the channels.
inline double ssim(const Image& a, const Image& b) {
    require(a.width == b.width && a.height == b.height && a.channels == b.channels,
            "ssim: shape mismatch");
    constexpr int kWin = 11;
    constexpr double kSigma = 1.5;
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    require(a.width >= kWin && a.height >= kWin, "ssim: image smaller than the window");
    static const std::vector<double> w = detail::gaussian_window(kWin, kSigma);

    double total = 0;
    std::size_t count = 0;
    for (int c = 0; c < a.channels; ++c)
        for (int y = 0; y + kWin <= a.height; ++y)
            for (int x = 0; x + kWin <= a.width; ++x) {
                double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
                for (int wy = 0; wy < kWin; ++wy)
                    for (int wx = 0; wx < kWin; ++wx) {
                        double wgt = w[wy * kWin + wx];
                        double pa = a.at(x + wx, y + wy, c);
                        double pb = b.at(x + wx, y + wy, c);
                        ma += wgt * pa;
                        mb += wgt * pb;
                        va += wgt * pa * pa;
                        vb += wgt * pb * pb;
                        cov += wgt * pa * pb;
                    }
                va -= ma * ma;
                vb -= mb * mb;
                cov -= ma * mb;
                total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                         ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++count;
            }
    return total / static_cast<double>(count);
}

/// Tight bounding box of mask > 0.5, expanded to at least min_size inside
/// the image. Returns false when the mask is empty.
inline bool mask_bbox(const Image& mask, int min_size, int* x0, int* y0, int* x1, int* y1) {
    int mnx = mask.width, mny = mask.height, mxx = -1, mxy = -1;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.at(x, y) > 0.5f) {
                mnx = std::min(mnx, x);
                mny = std::min(mny, y);
                mxx = std::max(mxx, x);
                mxy = std::max(mxy, y);
            }
    if (mxx < 0) return false;
    auto widen = [min_size](int lo, int hi, int limit) {
        while (hi - lo + 1 < min_size) {
            if (lo > 0) --lo;
            if (hi - lo + 1 < min_size && hi < limit - 1) ++hi;
            if (lo == 0 && hi == limit - 1) break;
        }
        return std::pair(lo, hi);
    };
    std::tie(mnx, mxx) = widen(mnx, mxx, mask.width);
    std::tie(mny, mxy) = widen(mny, mxy, mask.height);
    *x0 = mnx;
    *y0 = mny;
    *x1 = mxx;
    *y1 = mxy;
    return true;
}

inline Image crop(const Image& img, int x0, int y0, int x1, int y1) {
    Image out(x1 - x0 + 1, y1 - y0 + 1, img.channels);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x)
            for (int c = 0; c < img.channels; ++c) out.at(x - x0, y - y0, c) = img.at(x, y, c);
    return out;
}

/// SSIM on the tight crop around the ground-truth mask.
inline double ssim_crop(const Image& pred, const Image& gt, const Image& gt_mask) {
    int x0, y0, x1, y1;
    if (!mask_bbox(gt_mask, 11, &x0, &y0, &x1, &y1))
        return std::numeric_limits<double>::quiet_NaN();
    return ssim(crop(pred, x0, y0, x1, y1), crop(gt, x0, y0, x1, y1));
}

// ---------------------------------------------------------------------------
// Evaluation protocol: alternate the test cameras across the evaluated
// frames (k-th evaluated frame -> test camera k mod n), foreground PSNR and
// mask-crop SSIM per image.

struct EvalProtocol {
    Split split = Split::test;
    int frame_stride = 1;
    int n_steps = 256;
};

struct EvalRow {
    int camera = 0;
    int frame = 0;
    double psnr_fg = 0;
    double ssim_crop = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    int skipped_empty = 0;

    double mean_psnr() const {
        double s = 0;
        for (const auto& r : rows) s += r.psnr_fg;
        return rows.empty() ? 0 : s / rows.size();
    }
    double mean_ssim() const {
        double s = 0;
        for (const auto& r : rows) s += r.ssim_crop;
        return rows.empty() ? 0 : s / rows.size();
    }

    std::string to_csv() const {
        std::ostringstream os;
        os << "camera,frame,psnr_fg,ssim_crop\n" << std::setprecision(10);
        for (const auto& r : rows)
            os << r.camera << "," << r.frame << "," << r.psnr_fg << "," << r.ssim_crop << "\n";
        return os.str();
    }
};

template <typename S>
EvalReport evaluate(const TrainState<S>& model, const Dataset& data,
                    const std::vector<OccupancyGrid>& occ_per_frame, const EvalProtocol& proto,
                    ThreadPool* pool = nullptr) {
    std::vector<int> cams = data.cameras_in(proto.split);
    require(!cams.empty(), "evaluate: no cameras in the requested split");
    require(static_cast<int>(occ_per_frame.size()) == data.num_frames(),
            "evaluate: occupancy grids must cover all frames");
    EvalReport report;
    int k = 0;
    for (int frame = 0; frame < data.num_frames(); frame += proto.frame_stride, ++k) {
        int cam = cams[k % cams.size()];
        auto gt = data.images(cam, frame);
        auto [pred_rgb, pred_mask] = render_image(model, data.camera(cam), frame, data.box(),
                                                  &occ_per_frame[frame], proto.n_steps, pool);
        double psnr = psnr_foreground(pred_rgb, gt->rgb, gt->mask);
        if (std::isnan(psnr)) {
            ++report.skipped_empty;
            continue;
        }
        report.rows.push_back({cam, frame, psnr, ssim_crop(pred_rgb, gt->rgb, gt->mask)});
    }
    return report;
}

}  // namespace trf4d
