#pragma once

#include <string>

#include "trf4d/geometry.hpp"

namespace trf4d {

enum class SceneKind { pulsing_sphere, orbiting_blob, two_blobs_strong_motion };

inline const char* scene_kind_name(SceneKind k) {
    switch (k) {
        case SceneKind::pulsing_sphere: return "pulsing_sphere";
        case SceneKind::orbiting_blob: return "orbiting_blob";
        case SceneKind::two_blobs_strong_motion: return "two_blobs_strong_motion";
    }
    return "?";
}

inline std::optional<SceneKind> scene_kind_from_name(const std::string& s) {
    if (s == "pulsing_sphere") return SceneKind::pulsing_sphere;
    if (s == "orbiting_blob") return SceneKind::orbiting_blob;
    if (s == "two_blobs_strong_motion") return SceneKind::two_blobs_strong_motion;
    return std::nullopt;
}

struct SceneSpec {
    SceneKind kind = SceneKind::pulsing_sphere;
    int frames = 16;
    int cameras = 16;
    int image_size = 64;
    std::uint64_t seed = 42;
};

// ---------------------------------------------------------------------------
// Analytic density/color fields. Density is a scaled logistic of the signed
// distance to the surface (smooth falloff keeps quadrature convergence
// meaningful); colors are smooth, view-independent spatial functions. The
// time parameter is periodic: phase = frame / frames.

class AnalyticScene {
  public:
    explicit AnalyticScene(const SceneSpec& spec) : spec_(spec) {
        box_ = Aabb{{-0.7, -0.7, -0.7}, {0.7, 0.7, 0.7}};
    }

    const SceneSpec& spec() const { return spec_; }
    const Aabb& box() const { return box_; }

    double phase(int frame) const { return static_cast<double>(frame) / spec_.frames; }

    double density(const Vec3& p, double t) const {
        switch (spec_.kind) {
            case SceneKind::pulsing_sphere:
                return blob_density(p, Vec3{0, 0, 0}, pulse_radius(t));
            case SceneKind::orbiting_blob:
                return blob_density(p, orbit_center(t), 0.30);
            case SceneKind::two_blobs_strong_motion: {
                Vec3 c = strong_center(t);
                return std::min(kSigmaMax,
                                blob_density(p, c, 0.22) + blob_density(p, c * -1.0, 0.22));
            }
        }
        return 0;
    }

    Vec3 color(const Vec3& p, double t) const {
        switch (spec_.kind) {
            case SceneKind::pulsing_sphere:
            case SceneKind::orbiting_blob:
                return palette(p);
            case SceneKind::two_blobs_strong_motion: {
                Vec3 c = strong_center(t);
                double d1 = (p - c).norm(), d2 = (p + c).norm();
                double blend = 1.0 / (1.0 + std::exp((d1 - d2) / 0.05));
                Vec3 base = palette(p);
                Vec3 warm{0.9, 0.45, 0.2}, cool{0.2, 0.5, 0.9};
                Vec3 tint = warm * blend + cool * (1.0 - blend);
                return base * 0.45 + tint * 0.55;
            }
        }
        return {0, 0, 0};
    }

    /// High-precision quadrature of the analytic field (f64, dense uniform
    /// steps, no occupancy, no termination). The ground-truth oracle.
    void integrate(const Ray& ray, int n_steps, double t, Vec3* color_out, double* acc_out) const {
        *color_out = Vec3{0, 0, 0};
        *acc_out = 0;
        auto span = intersect_aabb(ray, box_);
        if (!span) return;
        double h = (span->second - span->first) / n_steps;
        double T = 1.0;
        for (int i = 0; i < n_steps; ++i) {
            double a_mid = span->first + (i + 0.5) * h;
            Vec3 p = ray.point_at(a_mid);
            double sig = density(p, t);
            double a = 1.0 - std::exp(-sig * h);
            double w = T * a;
            if (w > 0) *color_out = *color_out + color(p, t) * w;
            *acc_out += w;
            T *= 1.0 - a;
            if (T < 1e-9) break;
        }
    }

    /// Reference RGB+mask render (1024-step f64 integration; mask is the
    /// thresholded accumulated weight).
    void render_reference(const Camera& cam, int frame, Image* rgb, Image* mask,
                          int n_steps = 1024) const {
        *rgb = Image(cam.width, cam.height, 3);
        *mask = Image(cam.width, cam.height, 1);
        double t = phase(frame);
        for (int y = 0; y < cam.height; ++y)
            for (int x = 0; x < cam.width; ++x) {
                Ray ray = cam.ray_for_pixel(x, y, frame);
                Vec3 c;
                double acc;
                integrate(ray, n_steps, t, &c, &acc);
                for (int k = 0; k < 3; ++k)
                    rgb->at(x, y, k) = static_cast<float>(std::min(1.0, std::max(0.0, c[k])));
                mask->at(x, y) = acc > 0.5 ? 1.f : 0.f;
            }
    }

    static constexpr double kSigmaMax = 40.0;
    static constexpr double kFalloff = 0.025;

  private:
    double pulse_radius(double t) const { return 0.42 + 0.10 * std::sin(2.0 * M_PI * t); }
    Vec3 orbit_center(double t) const {
        return {0.30 * std::cos(2.0 * M_PI * t), 0.0, 0.30 * std::sin(2.0 * M_PI * t)};
    }
    Vec3 strong_center(double t) const {
        return {0.38 * std::cos(2.0 * M_PI * t), 0.28 * std::sin(4.0 * M_PI * t),
                0.38 * std::sin(2.0 * M_PI * t)};
    }

    double blob_density(const Vec3& p, const Vec3& center, double radius) const {
        double sdf = (p - center).norm() - radius;
        return kSigmaMax / (1.0 + std::exp(sdf / kFalloff));
    }

    Vec3 palette(const Vec3& p) const {
        return {0.5 + 0.4 * std::sin(3.1 * p.x + 1.3 * p.y),
                0.5 + 0.4 * std::sin(2.3 * p.y + 2.9 * p.z + 1.7),
                0.5 + 0.4 * std::sin(2.7 * p.z + 1.9 * p.x + 3.4)};
    }

    SceneSpec spec_;
    Aabb box_;
};

// ---------------------------------------------------------------------------
// Camera rig: two stacked rings looking at the box center, shared focal
// length chosen so every frustum covers the whole box (tight visual hulls).

inline std::vector<Camera> make_camera_ring(const SceneSpec& spec, const Aabb& box) {
    require(spec.cameras >= 2, "make_camera_ring: need at least 2 cameras");
    int n = spec.cameras, size = spec.image_size;
    double ring_radius = 2.2, ring_height = 0.30;

    std::vector<Camera> cams(n);
    for (int i = 0; i < n; ++i) {
        double ang = 2.0 * M_PI * i / n;
        double hy = (i % 2 == 0) ? ring_height : -ring_height;
        Vec3 pos{ring_radius * std::cos(ang), hy, ring_radius * std::sin(ang)};
        Vec3 fwd = (box.center() - pos).normalized();
        Vec3 right = Vec3{0, 1, 0}.cross(fwd).normalized();
        Vec3 down = fwd.cross(right);
        Camera& c = cams[i];
        c.width = c.height = size;
        c.cx = c.cy = size / 2.0;
        for (int r = 0; r < 3; ++r) {
            c.rotation(r, 0) = right[r];
            c.rotation(r, 1) = down[r];
            c.rotation(r, 2) = fwd[r];
        }
        c.translation = pos;
    }

    // largest tan(angle to a box corner) over all cameras fixes the focal
    double max_tan = 0;
    for (const Camera& c : cams) {
        Mat3 rt = c.rotation.transposed();
        for (int corner = 0; corner < 8; ++corner) {
            Vec3 w{(corner & 1) ? box.max.x : box.min.x, (corner & 2) ? box.max.y : box.min.y,
                   (corner & 4) ? box.max.z : box.min.z};
            Vec3 pc = rt * (w - c.translation);
            require(pc.z > 0, "make_camera_ring: box corner behind a camera");
            max_tan = std::max({max_tan, std::abs(pc.x) / pc.z, std::abs(pc.y) / pc.z});
        }
    }
    double f = (size / 2.0 - 1.0) / max_tan;
    for (Camera& c : cams) {
        c.fx = c.fy = f;
        c.validate();
    }
    return cams;
}

}  // namespace trf4d
