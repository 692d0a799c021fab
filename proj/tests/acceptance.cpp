// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. Exit code 0 only if all pass.

#include <chrono>
#include <fstream>
#include <iostream>

#include "oracle_helpers.hpp"
#include "trf4d/ablation.hpp"
#include "trf4d/trf4d.hpp"

using namespace trf4d;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
    std::cout << (pass ? "[PASS] " : "[FAIL] ") << name << " — " << detail << std::endl;
    if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::filesystem::path work_dir() {
    auto p = std::filesystem::temp_directory_path() / "trf4d_acceptance";
    std::filesystem::create_directories(p);
    return p;
}

int hw_threads() {
    unsigned n = std::thread::hardware_concurrency();
    return static_cast<int>(std::min(n == 0 ? 1u : n, 8u));
}

template <typename F>
double central_diff(double& x, double eps, F&& f) {
    double x0 = x;
    x = x0 + eps;
    double fp = f();
    x = x0 - eps;
    double fm = f();
    x = x0;
    return (fp - fm) / (2 * eps);
}

// ---------------------------------------------------------------------------
// 1. Oracle equivalence (exact / 1e-12, f64)

void criterion_oracle_equivalence() {
    auto t0 = Clock::now();
    bool ok = true;
    std::string why;

    // hash-grid trilinear vs brute-force corner sum
    {
        HashGridConfig c{3, 2, 4, 16, 8};
        HashGrid<3, double> g(c, 101);
        Pcg32 rng(1);
        for (int i = 0; i < 200 && ok; ++i) {
            double p[3] = {rng.next_double(), rng.next_double(), rng.next_double()};
            std::vector<double> out(c.feature_dim());
            g.encode(p, out.data());
            auto expect = oracle::hashgrid_encode(g, p);
            for (int k = 0; k < c.feature_dim(); ++k)
                if (std::abs(out[k] - expect[k]) > 1e-12) {
                    ok = false;
                    why = "hash-grid trilinear mismatch";
                }
        }
    }
    // 1D lerp vs scalar lerp
    {
        DenseGrid1D<double> g(9, 4, 22);
        Pcg32 rng(2);
        for (int i = 0; i < 200 && ok; ++i) {
            double x = rng.next_double();
            double out[4];
            g.sample(x, out);
            auto expect = oracle::dense1d_sample(g, x);
            for (int k = 0; k < 4; ++k)
                if (std::abs(out[k] - expect[k]) > 1e-12) {
                    ok = false;
                    why = "1D lerp mismatch";
                }
        }
    }
    // Eq. 1 evaluation vs compositional scalar oracle
    {
        FieldOptions opt;
        opt.grid = {2, 2, 4, 8, 8};
        opt.dense1d_spatial_res = 5;
        FeatureField4D<double> f(opt, {0, 4, 15}, 33);
        Pcg32 rng(3);
        for (int i = 0; i < 200 && ok; ++i) {
            double p[3] = {rng.next_double(), rng.next_double(), rng.next_double()};
            double t = rng.next_double();
            std::vector<double> out(f.feature_dim());
            f.query(p, t, out.data());
            auto expect = oracle::field4d_query(f, p, t);
            for (int k = 0; k < f.feature_dim(); ++k)
                if (std::abs(out[k] - expect[k]) > 1e-12) {
                    ok = false;
                    why = "4D decomposition mismatch";
                }
        }
    }
    // union / total occupancy vs exhaustive loops
    {
        Aabb box{{-1, -1, -1}, {1, 1, 1}};
        Pcg32 rng(4);
        std::vector<OccupancyGrid> grids;
        for (int i = 0; i < 5; ++i) {
            OccupancyGrid g(16, 16, 16, box);
            for (int z = 0; z < 16; ++z)
                for (int y = 0; y < 16; ++y)
                    for (int x = 0; x < 16; ++x)
                        if (rng.next_double() < 0.25) g.set(x, y, z, true);
            grids.push_back(g);
        }
        if (!(union_occupancy(grids) == oracle::union_grids(grids))) {
            ok = false;
            why = "union mismatch";
        }
        if (total_occupancy(grids[0]) != oracle::count_occupied(grids[0])) {
            ok = false;
            why = "total occupancy mismatch";
        }
    }
    // greedy partition vs independent greedy reimplementation
    {
        Aabb box{{-1, -1, -1}, {1, 1, 1}};
        std::vector<OccupancyGrid> frames;
        for (int f = 0; f < 30; ++f)
            frames.push_back(oracle::sphere_grid(20, box, {0, 0, 0}, 0.22 + 0.015 * f));
        if (!(partition_sequence(frames, 1.25) ==
              oracle::greedy_partition(frames, 1.25, default_segment_pool()))) {
            ok = false;
            why = "greedy partition mismatch";
        }
    }
    double dt = seconds_since(t0);
    if (ok && dt > 60) {
        ok = false;
        why = "runtime over 1 min";
    }
    report("oracle-equivalence", ok,
           ok ? "hash trilinear, 1D lerp, Eq.1, union/total, greedy partition all match (" +
                    std::to_string(dt) + "s)"
              : why);
}

// ---------------------------------------------------------------------------
// 2. Gradient suite: every backward vs central differences, rel < 1e-3 on
//    >= 99% of 200 sampled parameters each, f64

struct GradCheck {
    int checked = 0, ok = 0;
    void tally(double analytic, double fd, double rel = 1e-3) {
        ++checked;
        if (std::abs(analytic - fd) <= rel * std::max(1.0, std::abs(fd))) ++ok;
    }
    bool pass() const { return checked > 0 && ok >= (checked * 99 + 99) / 100; }
};

void criterion_gradient_suite() {
    auto t0 = Clock::now();
    std::string detail;
    bool all_ok = true;

    auto check_part = [&](const std::string& name, GradCheck& gc) {
        detail += name + " " + std::to_string(gc.ok) + "/" + std::to_string(gc.checked) + "; ";
        if (!gc.pass()) all_ok = false;
    };

    // hash grid
    {
        HashGridConfig c{3, 2, 4, 16, 8};
        HashGrid<3, double> g(c, 7);
        Pcg32 rng(11);
        GradCheck gc;
        for (int trial = 0; trial < 25; ++trial) {
            double p[3] = {rng.next_double(), rng.next_double(), rng.next_double()};
            std::vector<double> up(c.feature_dim());
            for (auto& v : up) v = rng.uniform(-1, 1);
            std::vector<double> grad(g.param_count(), 0.0);
            g.encode_backward(p, up.data(), grad);
            auto loss = [&] {
                std::vector<double> out(c.feature_dim());
                g.encode(p, out.data());
                double s = 0;
                for (int k = 0; k < c.feature_dim(); ++k) s += up[k] * out[k];
                return s;
            };
            for (std::size_t i = 0; i < grad.size() && gc.checked < 200; ++i) {
                if (grad[i] == 0.0) continue;
                gc.tally(grad[i], central_diff(g.params()[i], 1e-5, loss));
            }
            if (gc.checked >= 200) break;
        }
        check_part("hash-grid", gc);
    }
    // 1D grid
    {
        DenseGrid1D<double> g(11, 4, 13);
        Pcg32 rng(12);
        GradCheck gc;
        while (gc.checked < 200) {
            double x = rng.next_double();
            std::vector<double> up(4);
            for (auto& v : up) v = rng.uniform(-1, 1);
            std::vector<double> grad(g.param_count(), 0.0);
            g.sample_backward(x, up.data(), grad);
            auto loss = [&] {
                double out[4];
                g.sample(x, out);
                return up[0] * out[0] + up[1] * out[1] + up[2] * out[2] + up[3] * out[3];
            };
            for (std::size_t i = 0; i < grad.size() && gc.checked < 200; ++i) {
                if (grad[i] == 0.0) continue;
                gc.tally(grad[i], central_diff(g.params()[i], 1e-5, loss));
            }
        }
        check_part("1D-grid", gc);
    }
    // 4D field (all three backends pooled)
    {
        GradCheck gc;
        for (Backend b : {Backend::humanrf, Backend::hex4d, Backend::tngp}) {
            FieldOptions opt;
            opt.backend = b;
            opt.grid = {2, 2, 4, 8, 8};
            opt.dense1d_spatial_res = 5;
            FeatureField4D<double> f(opt, {0, 4, 15}, 14);
            Pcg32 rng(15);
            for (int trial = 0; trial < 8 && gc.checked < 200; ++trial) {
                double p[3] = {rng.next_double(), rng.next_double(), rng.next_double()};
                double t = rng.next_double();
                std::vector<double> up(f.feature_dim());
                for (auto& v : up) v = rng.uniform(-1, 1);
                std::vector<double> grad(f.param_count(), 0.0);
                f.backward(p, t, up.data(), grad);
                auto loss = [&] {
                    std::vector<double> out(f.feature_dim());
                    f.query(p, t, out.data());
                    double s = 0;
                    for (int k = 0; k < f.feature_dim(); ++k) s += up[k] * out[k];
                    return s;
                };
                std::size_t gi = 0;
                for (int comp = 0; comp < f.n_components() && gc.checked < 200; ++comp) {
                    auto& params = f.component_params(comp);
                    for (std::size_t i = 0; i < params.size() && gc.checked < 200; ++i, ++gi)
                        if (grad[gi] != 0.0) gc.tally(grad[gi], central_diff(params[i], 1e-5, loss));
                }
            }
        }
        check_part("4D-field", gc);
    }
    // both heads
    {
        Mlp<double> density = make_density_mlp<double>(8, 16);
        Mlp<double> radiance = make_radiance_mlp<double>(17);
        Pcg32 rng(18);
        std::vector<double> feat(8);
        for (auto& v : feat) v = rng.uniform(-0.5, 0.5);
        double sh[16];
        sh_encode(Vec3{0.2, -0.6, 0.7746}.normalized(), sh);
        auto loss = [&] {
            auto [sigma, geo] = density_head(density, std::span<const double>(feat));
            auto rgb = radiance_head(radiance, std::span<const double>(sh, 16),
                                     std::span<const double>(geo.data(), 15));
            return 0.3 * sigma + rgb[0] + 0.5 * rgb[1] - 0.2 * rgb[2];
        };
        // analytic grads
        std::vector<double> dctx(density.ctx_size()), rctx(radiance.ctx_size());
        std::vector<double> draw(16), rin(31), rraw(3);
        density.forward(feat.data(), draw.data(), dctx.data());
        double sigma = density_activation(draw[0]);
        for (int k = 0; k < 16; ++k) rin[k] = sh[k];
        for (int k = 0; k < 15; ++k) rin[16 + k] = draw[1 + k];
        radiance.forward(rin.data(), rraw.data(), rctx.data());
        std::vector<double> gr(radiance.param_count(), 0.0), dinr(31);
        double up[3] = {1.0, 0.5, -0.2};
        std::vector<double> drr(3);
        for (int c = 0; c < 3; ++c) {
            double s = sigmoid(rraw[c]);
            drr[c] = up[c] * s * (1 - s);
        }
        radiance.backward(rin.data(), rctx.data(), drr.data(), dinr.data(), gr);
        std::vector<double> gd(density.param_count(), 0.0);
        std::vector<double> ddraw(16);
        ddraw[0] = 0.3 * density_activation_grad(draw[0], sigma);
        for (int k = 0; k < 15; ++k) ddraw[1 + k] = dinr[16 + k];
        density.backward(feat.data(), dctx.data(), ddraw.data(), nullptr, gd);

        GradCheck gc;
        Pcg32 pick(19);
        for (int i = 0; i < 100; ++i) {
            std::size_t j = pick.next_below(static_cast<std::uint32_t>(density.param_count()));
            gc.tally(gd[j], central_diff(density.params()[j], 1e-5, loss));
            j = pick.next_below(static_cast<std::uint32_t>(radiance.param_count()));
            gc.tally(gr[j], central_diff(radiance.params()[j], 1e-5, loss));
        }
        check_part("heads", gc);
    }
    // compositing
    {
        Pcg32 rng(20);
        int n = 24;
        RaySampleSet s;
        s.hit = true;
        s.alpha_min = 0;
        s.alpha_max = 2;
        s.n_steps = n;
        for (int i = 0; i < n; ++i) {
            s.alphas.push_back(2.0 * i / n);
            s.deltas.push_back(2.0 / n);
            s.positions.push_back({0, 0, 0});
            s.skip_mask.push_back(1);
        }
        std::vector<double> sigma(n), rgb(3 * n);
        for (auto& v : sigma) v = rng.uniform(0.05, 2.5);
        for (auto& v : rgb) v = rng.uniform(0.1, 0.9);
        double dc[3] = {0.9, -0.4, 0.6}, dm = 0.8;
        auto r = composite<double>(s, sigma, rgb);
        std::vector<double> ds(n), drgb(3 * n);
        composite_backward<double>(s, sigma, rgb, r, dc, dm, ds, drgb);
        auto loss = [&] {
            auto rr = composite<double>(s, sigma, rgb);
            return dc[0] * rr.color[0] + dc[1] * rr.color[1] + dc[2] * rr.color[2] +
                   dm * rr.acc_weight;
        };
        GradCheck gc;
        for (int i = 0; i < n; ++i) gc.tally(ds[i], central_diff(sigma[i], 1e-6, loss));
        for (int i = 0; i < 3 * n; ++i) gc.tally(drgb[i], central_diff(rgb[i], 1e-6, loss));
        check_part("compositing", gc);
    }
    // full render -> loss pipeline
    {
        Aabb box{{-1, -1, -1}, {1, 1, 1}};
        FieldOptions opt;
        opt.grid = {2, 2, 4, 12, 9};
        opt.dense1d_spatial_res = 5;
        SegmentPlan plan;
        plan.segments = {{0, 3, 15}};
        TrainState<double> state(opt, plan, 21, false);
        OccupancyGrid occ = oracle::sphere_grid(16, box, {0, 0, 0}, 0.6);
        Camera cam = oracle::look_at_camera({0.2, 0.4, -2.6}, {0, 0, 0}, 24, 16);
        std::vector<Ray> rays;
        std::vector<double> gt = {0.3, 0.5, 0.7, 0.6, 0.4, 0.2, 0.8, 0.1, 0.5};
        std::vector<double> gtm = {1.0, 0.0, 1.0};
        for (int k = 0; k < 3; ++k) rays.push_back(cam.ray_for_pixel(6 + 2 * k, 8, 1));
        auto loss = [&] {
            double total = 0;
            for (std::size_t r = 0; r < rays.size(); ++r) {
                auto res = render_pixel(state, rays[r], box, &occ, 24);
                total += huber_loss(res.color.data(), gt.data() + 3 * r, 0.01) / 3.0;
                total += 1e-3 * bce_mask_loss(res.acc_weight, gtm[r]) / 3.0;
            }
            return total;
        };
        std::vector<double> grad(state.total_param_count(), 0.0);
        RenderWorkspace<double> ws;
        for (std::size_t r = 0; r < rays.size(); ++r) {
            render_ray(state, rays[r], box, &occ, 24, SampleMode::midpoint, 0, 0, 0, true, ws);
            double dcol[3];
            huber_loss_backward(ws.result.color.data(), gt.data() + 3 * r, 0.01, 1.0 / 3, dcol);
            double dacc = 1e-3 / 3 * bce_mask_loss_backward(ws.result.acc_weight, gtm[r]);
            render_ray_backward(state, rays[r], box, dcol, dacc, ws, std::span<double>(grad));
        }
        std::vector<std::pair<std::vector<double>*, std::size_t>> slots;
        state.for_each_param_array(
            [&](std::size_t off, std::vector<double>& p) { slots.push_back({&p, off}); });
        GradCheck gc;
        Pcg32 pick(22);
        int guard = 0;
        while (gc.checked < 200 && guard++ < 400000) {
            auto [vec, off] = slots[pick.next_below(static_cast<std::uint32_t>(slots.size()))];
            std::size_t i = pick.next_below(static_cast<std::uint32_t>(vec->size()));
            if (grad[off + i] == 0.0) continue;
            gc.tally(grad[off + i], central_diff((*vec)[i], 1e-4, loss));
        }
        check_part("render-to-loss", gc);
    }

    double dt = seconds_since(t0);
    if (dt > 300) all_ok = false;
    report("gradient-suite", all_ok, detail + "(" + std::to_string(dt) + "s)");
}

// ---------------------------------------------------------------------------
// 3. Analytic rendering

void criterion_analytic_rendering() {
    bool ok = true;
    std::string why;
    // homogeneous medium: sigma=1 over a unit interval, 512 steps
    {
        int n = 512;
        RaySampleSet s;
        s.hit = true;
        s.alpha_min = 0;
        s.alpha_max = 1;
        s.n_steps = n;
        for (int i = 0; i < n; ++i) {
            s.alphas.push_back(static_cast<double>(i) / n);
            s.deltas.push_back(1.0 / n);
            s.positions.push_back({0, 0, 0});
            s.skip_mask.push_back(1);
        }
        std::vector<double> sigma(n, 1.0), rgb(3 * n);
        for (int i = 0; i < n; ++i) {
            rgb[3 * i] = 0.25;
            rgb[3 * i + 1] = 0.5;
            rgb[3 * i + 2] = 0.75;
        }
        auto r = composite<double>(s, sigma, rgb);
        double expect = 1.0 - std::exp(-1.0);
        if (std::abs(r.acc_weight - expect) > 1e-3) {
            ok = false;
            why = "M-hat off: " + std::to_string(r.acc_weight);
        }
        for (int c = 0; c < 3 && ok; ++c)
            if (std::abs(r.color[c] - expect * (0.25 * (c + 1))) > 1e-3) {
                ok = false;
                why = "C-hat off";
            }
    }
    // zero-density scene renders exactly black with M-hat = 0
    if (ok) {
        Aabb box{{-1, -1, -1}, {1, 1, 1}};
        FieldOptions opt;
        opt.grid = {2, 2, 4, 8, 8};
        opt.dense1d_spatial_res = 4;
        SegmentPlan plan;
        plan.segments = {{0, 2, 15}};
        TrainState<double> state(opt, plan, 1, false);
        // raw0 bias at -40: exp clamps to e^-15, then force sigma = 0 via
        // the only exact zero route: empty occupancy
        OccupancyGrid empty(8, 8, 8, box, false);
        auto r = render_pixel(state, Ray{{0, 0, -3}, {0, 0, 1}, 0}, box, &empty, 64);
        if (r.color[0] != 0 || r.color[1] != 0 || r.color[2] != 0 || r.acc_weight != 0) {
            ok = false;
            why = "empty scene not exactly black";
        }
        // and a composite with sigma identically zero
        RaySampleSet s;
        s.hit = true;
        s.alpha_min = 0;
        s.alpha_max = 1;
        s.n_steps = 8;
        for (int i = 0; i < 8; ++i) {
            s.alphas.push_back(i / 8.0);
            s.deltas.push_back(1 / 8.0);
            s.positions.push_back({0, 0, 0});
            s.skip_mask.push_back(1);
        }
        std::vector<double> sigma(8, 0.0), rgb(24, 0.9);
        auto rr = composite<double>(s, sigma, rgb);
        if (rr.color[0] != 0 || rr.acc_weight != 0) {
            ok = false;
            why = "zero-density composite not exactly black";
        }
    }
    report("analytic-rendering", ok, ok ? "homogeneous medium within 1e-3 of 1-1/e; zero density exactly black" : why);
}

// ---------------------------------------------------------------------------
// 4. Loss arithmetic

void criterion_loss_arithmetic() {
    bool ok = true;
    std::string why;
    double p1[3] = {0.51, 0.2, 0.2}, g1[3] = {0.5, 0.2, 0.2};
    if (std::abs(huber_loss(p1, g1, 0.01) - 0.5e-4 / 3.0) > 1e-12) {
        ok = false;
        why = "huber quadratic branch";
    }
    double p2[3] = {0.52, 0.2, 0.2};
    if (std::abs(huber_loss(p2, g1, 0.01) - 5e-5) > 1e-12) {
        ok = false;
        why = "huber linear branch";
    }
    if (std::abs(bce_mask_loss(0.5, 1.0) - std::log(2.0)) > 1e-12 ||
        std::abs(bce_mask_loss(0.5, 0.0) - std::log(2.0)) > 1e-12) {
        ok = false;
        why = "bce ln2 values";
    }
    std::vector<double> h(4, 0.0), b(4, std::log(2.0));
    if (std::abs(total_loss<double>(h, b, kDefaultMaskBeta) - 1e-3 * std::log(2.0)) > 1e-12) {
        ok = false;
        why = "total loss beta scaling";
    }
    TrainConfig tc;
    RunConfig rc;
    if (tc.huber_delta != 0.01 || tc.beta_mask != 1e-3 || rc.huber_delta != 0.01 ||
        rc.beta_mask != 1e-3 || kDefaultHuberDelta != 0.01 || kDefaultMaskBeta != 1e-3) {
        ok = false;
        why = "defaults not wired";
    }
    report("loss-arithmetic", ok,
           ok ? "huber/bce closed forms to 1e-12; delta=0.01, beta=1e-3 wired as defaults" : why);
}

// ---------------------------------------------------------------------------
// 5. Partitioning behavior

void criterion_partitioning() {
    Aabb box{{-1, -1, -1}, {1, 1, 1}};
    // expanding sphere: threshold 1.25 vs 2.0
    std::vector<OccupancyGrid> frames;
    for (int f = 0; f < 48; ++f)
        frames.push_back(oracle::sphere_grid(32, box, {0, 0, 0}, 0.18 + 0.012 * f));
    SegmentPlan tight = partition_sequence(frames, 1.25);
    SegmentPlan loose = partition_sequence(frames, 2.0);
    double mean_tight = static_cast<double>(tight.num_frames()) / tight.segments.size();
    double mean_loose = static_cast<double>(loose.num_frames()) / loose.segments.size();
    bool ok = mean_tight < mean_loose;
    std::string detail = "mean segment length " + std::to_string(mean_tight) + " @1.25 vs " +
                         std::to_string(mean_loose) + " @2.0";
    // static corpus: max-size segments only
    std::vector<OccupancyGrid> static_frames(250, oracle::sphere_grid(16, box, {0, 0, 0}, 0.5));
    SegmentPlan st = partition_sequence(static_frames, 1.25);
    for (std::size_t i = 0; i + 1 < st.segments.size(); ++i)
        if (st.segments[i].length != 100) ok = false;
    if (st.segments.back().length != 50) ok = false;  // 250 = 100+100+50
    if (st.segments.front().hash_capacity_log2 != 19) ok = false;
    report("partitioning-behavior", ok, detail + "; static corpus: 100,100,50");
}

// ---------------------------------------------------------------------------
// 6. Parameter accounting

void criterion_parameter_accounting() {
    bool ok = true;
    std::string why;
    // size-100 segment at T=2^19, L=16, F=2 with every level hashed: 2^24
    {
        FieldOptions opt;
        opt.backend = Backend::humanrf;
        opt.grid = {16, 2, 128, 2048, 19};
        FeatureField4D<float> f(opt, {0, 100, 19}, 2);
        for (int i = 0; i < 4; ++i)
            if (f.hash3(i).param_count() != (std::size_t(1) << 24)) {
                ok = false;
                why = "3D grid not 2^24 parameters";
            }
    }
    // ablate compression ratio vs hand arithmetic on two configured models
    if (ok) {
        RunConfig cfg;  // desk defaults
        int frames = 16;
        SegmentPlan plan;
        plan.segments = {{0, 10, 16}, {10, 6, 15}};

        for (Backend b : {Backend::humanrf, Backend::tngp}) {
            FieldOptions o = matched_backend_options(cfg, b, 8);
            std::size_t pm = model_params(cfg, plan, b, o);
            std::size_t base = per_frame_ngp_params(cfg, frames);
            double got = compression_ratio(pm, base);

            // hand arithmetic, from the counting rules
            auto grid3 = [&](const HashGridConfig& c) {
                std::size_t n = 0;
                for (int l = 0; l < c.levels; ++l) {
                    std::uint64_t k1 = oracle::level_res(c, l) + 1;
                    n += std::min<std::uint64_t>(k1 * k1 * k1, 1ULL << c.table_size_log2) *
                         c.features_per_level;
                }
                return n;
            };
            std::size_t heads = (16 + 1) * 64 + (64 + 1) * 64 + (64 + 1) * 16  // density
                                + (31 + 1) * 64 + 2 * ((64 + 1) * 64) + (64 + 1) * 3;  // radiance
            std::size_t hand_model = heads;
            for (const Segment& s : plan.segments) {
                if (b == Backend::humanrf) {
                    hand_model += 4 * grid3(o.grid);
                    hand_model += static_cast<std::size_t>(std::max(s.length, 2)) * 16;  // T_t
                    hand_model += 3 * 64 * 16;  // T_x, T_y, T_z at R=64, m=16
                } else {
                    HashGridConfig c4 = o.tngp_config();
                    std::size_t n = 0;
                    for (int l = 0; l < c4.levels; ++l) {
                        std::uint64_t k1 = oracle::level_res(c4, l) + 1;
                        n += std::min<std::uint64_t>(k1 * k1 * k1 * k1, 1ULL << c4.table_size_log2) *
                             c4.features_per_level;
                    }
                    hand_model += n;
                }
            }
            std::size_t hand_base = frames * (grid3(cfg.field_options().grid) + heads);
            double hand = 1.0 - static_cast<double>(hand_model) / hand_base;
            if (pm != hand_model || base != hand_base || std::abs(got - hand) > 1e-9) {
                ok = false;
                why = std::string("compression ratio mismatch for ") + backend_name(b) + ": got " +
                      std::to_string(got) + " hand " + std::to_string(hand);
            }
        }
    }
    report("parameter-accounting", ok,
           ok ? "all-hashed grid reports 2^24; compression ratios match hand arithmetic to 1e-9"
              : why);
}

// ---------------------------------------------------------------------------
// 7. End-to-end desk training (the long criterion)

void criterion_desk_training() {
    auto t0 = Clock::now();
    auto dir = work_dir() / "desk";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);

    RunConfig cfg;  // desk defaults
    cfg.scene_kind = "pulsing_sphere";
    cfg.frames = 16;
    cfg.cameras = 16;
    cfg.image_size = 64;
    cfg.iterations = 5000;
    cfg.threads = hw_threads();
    cfg.deterministic = true;

    ThreadPool pool(cfg.threads);
    generate_dataset(cfg.scene_spec(), dir / "data", &pool);
    Dataset data(dir / "data" / "manifest.json");
    int train_cams = static_cast<int>(data.cameras_in(Split::train).size());
    int test_cams = static_cast<int>(data.cameras_in(Split::test).size());

    auto occ = carve_dataset_occupancy(data, cfg.occupancy_resolution, cfg.dilation_px, &pool);
    SegmentPlan plan = partition_sequence(occ, cfg.threshold, cfg.pool());

    auto run_once = [&](const std::filesystem::path& out) {
        std::filesystem::create_directories(out);
        TrainState<float> state(cfg.field_options(), plan, cfg.seed, cfg.table_from_plan);
        TrainConfig tc = cfg.train_config();
        tc.out_dir = out;
        Trainer<float> trainer(state, data, occ, tc, pool);
        std::ofstream log(out / "loss_log.csv");
        trainer.run(&log);
        return state;
    };

    auto t_train = Clock::now();
    TrainState<float> state = run_once(dir / "run1");
    double train_minutes = seconds_since(t_train) / 60.0;

    EvalReport rep = evaluate(state, data, occ, cfg.eval_protocol(), &pool);
    double psnr = rep.mean_psnr();

    // deterministic rerun must be bit-identical
    run_once(dir / "run2");
    auto slurp = [](const std::filesystem::path& p) {
        std::ifstream is(p, std::ios::binary);
        return std::vector<char>{std::istreambuf_iterator<char>(is),
                                 std::istreambuf_iterator<char>()};
    };
    bool identical = slurp(dir / "run1" / "ckpt_00005000.trf4d") ==
                         slurp(dir / "run2" / "ckpt_00005000.trf4d") &&
                     !slurp(dir / "run1" / "ckpt_00005000.trf4d").empty();

    double total_minutes = seconds_since(t0) / 60.0;
    bool ok = train_cams == 12 && test_cams == 2 && psnr >= 28.0 && train_minutes <= 30.0 &&
              identical;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "foreground PSNR %.2f dB on %d held-out cameras (floor 28); train %.1f min on %d "
                  "thread(s) (budget 30 on 8 cores); rerun bit-identical: %s; total %.1f min",
                  psnr, test_cams, train_minutes, cfg.threads, identical ? "yes" : "NO",
                  total_minutes);
    report("end-to-end-desk-training", ok, buf);
}

// ---------------------------------------------------------------------------
// 8. Ablation ordering on strong motion (single segment, matched budgets)

void criterion_ablation_ordering() {
    auto t0 = Clock::now();
    auto dir = work_dir() / "ablation";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);

    RunConfig cfg;
    cfg.scene_kind = "two_blobs_strong_motion";
    cfg.frames = 10;
    cfg.cameras = 10;
    cfg.image_size = 48;
    cfg.iterations = 1500;
    cfg.batch_max_samples = 16384;
    cfg.n_steps = 192;
    cfg.threads = hw_threads();

    ThreadPool pool(cfg.threads);
    generate_dataset(cfg.scene_spec(), dir / "data", &pool);
    Dataset data(dir / "data" / "manifest.json");
    auto occ = carve_dataset_occupancy(data, cfg.occupancy_resolution, cfg.dilation_px, &pool);

    // one segment over the whole sequence: the regime where the feature-grid
    // structure itself is what differs
    SegmentPlan plan;
    plan.segments = {{0, cfg.frames, 17}};

    std::map<std::string, double> psnr;
    for (Backend b : {Backend::humanrf, Backend::hex4d, Backend::tngp}) {
        FieldOptions o = matched_backend_options(cfg, b, cfg.frames);
        TrainState<float> state(o, plan, cfg.seed, false);
        TrainConfig tc = cfg.train_config();
        Trainer<float> trainer(state, data, occ, tc, pool);
        trainer.run(nullptr);
        EvalReport rep = evaluate(state, data, occ, cfg.eval_protocol(), &pool);
        psnr[backend_name(b)] = rep.mean_psnr();
    }

    bool ok = psnr["humanrf"] >= psnr["hex4d"] - 0.2 && psnr["humanrf"] >= psnr["tngp"] - 0.2;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "PSNR humanrf %.2f vs hex4d %.2f vs tngp %.2f (slack 0.2 dB) in %.1f min",
                  psnr["humanrf"], psnr["hex4d"], psnr["tngp"], seconds_since(t0) / 60.0);
    report("ablation-ordering", ok, buf);
}

// ---------------------------------------------------------------------------
// 9. Mask regularization prunes empty space

void criterion_mask_regularization() {
    auto dir = work_dir() / "maskreg";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    SceneSpec spec;
    spec.kind = SceneKind::pulsing_sphere;
    spec.frames = 2;
    spec.cameras = 6;
    spec.image_size = 32;
    spec.seed = 42;
    ThreadPool pool(hw_threads());
    generate_dataset(spec, dir / "data", &pool);
    Dataset data(dir / "data" / "manifest.json");
    auto occ = carve_dataset_occupancy(data, 64, 1, &pool);
    SegmentPlan plan = partition_sequence(occ, 1.25);

    FieldOptions opt;
    opt.grid = {4, 2, 8, 32, 12};
    opt.dense1d_spatial_res = 8;
    TrainState<float> state(opt, plan, 42, false);
    TrainConfig tc;
    tc.iterations = 500;
    tc.n_steps = 64;
    Trainer<float> trainer(state, data, occ, tc, pool);

    // foreground-piercing rays supervised as background (M = 0)
    const Camera& cam = data.camera(0);
    RayBatch<float> batch;
    batch.frames = {0};
    Pcg32 rng(5);
    while (batch.rays.size() < 96) {
        int x = rng.next_below(cam.width), y = rng.next_below(cam.height);
        Ray ray = cam.ray_for_pixel(x, y, 0);
        if (sample_ray(ray, data.box(), &occ[0], 64).size() == 0) continue;
        batch.rays.push_back(ray);
        batch.gt_color.insert(batch.gt_color.end(), {0.f, 0.f, 0.f});
        batch.gt_mask.push_back(0.f);
    }
    auto mean_acc = [&] {
        double acc = 0;
        for (const Ray& r : batch.rays)
            acc += render_pixel(state, r, data.box(), &occ[0], 64).acc_weight;
        return acc / batch.rays.size();
    };
    double before = mean_acc();
    for (int i = 0; i < 500; ++i) trainer.step_batch(batch);
    double after = mean_acc();
    bool ok = after < 0.01;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "mean M-hat %.3f -> %.5f after 500 iterations (threshold 0.01)",
                  before, after);
    report("mask-regularization", ok, buf);
}

}  // namespace

int main() {
    std::cout << "trf4d acceptance suite\n";
    auto guard = [](const char* name, auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            report(name, false, std::string("exception: ") + e.what());
        }
    };
    guard("oracle-equivalence", criterion_oracle_equivalence);
    guard("gradient-suite", criterion_gradient_suite);
    guard("analytic-rendering", criterion_analytic_rendering);
    guard("loss-arithmetic", criterion_loss_arithmetic);
    guard("partitioning-behavior", criterion_partitioning);
    guard("parameter-accounting", criterion_parameter_accounting);
    guard("end-to-end-desk-training", criterion_desk_training);
    guard("ablation-ordering", criterion_ablation_ordering);
    guard("mask-regularization", criterion_mask_regularization);
    std::cout << (g_failures == 0 ? "ALL CRITERIA PASSED" : "FAILURES: " + std::to_string(g_failures))
              << std::endl;
    return g_failures == 0 ? 0 : 1;
}
