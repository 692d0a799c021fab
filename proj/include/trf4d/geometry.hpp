#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "trf4d/common.hpp"

namespace trf4d {

// ---------------------------------------------------------------------------
// Axis-aligned scene box. Field grids are indexed over its [0,1]^3 image.

struct Aabb {
    Vec3 min{-1, -1, -1};
    Vec3 max{1, 1, 1};

    void validate() const {
        require(min.x < max.x && min.y < max.y && min.z < max.z,
                "Aabb: min must be componentwise below max");
    }

    Vec3 extent() const { return max - min; }
    Vec3 center() const { return (min + max) * 0.5; }

    /// Maps min -> (0,0,0) and max -> (1,1,1).
    Vec3 normalize(const Vec3& p) const { return (p - min).cwise_div(extent()); }
    Vec3 denormalize(const Vec3& u) const { return min + u.cwise_mul(extent()); }

    bool contains(const Vec3& p) const {
        return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z &&
               p.z <= max.z;
    }
};

// ---------------------------------------------------------------------------
// Rays. t_frame tags the ray with the time frame it samples.

struct Ray {
    Vec3 origin;
    Vec3 direction;  // unit length
    int t_frame = 0;

    Vec3 point_at(double alpha) const { return origin + direction * alpha; }
};

// ---------------------------------------------------------------------------
// Calibrated pinhole camera with a camera-to-world rigid transform.
// Looks along +z in camera space; pixel (i,j) is sampled at (i+0.5, j+0.5).

struct Camera {
    double fx = 1, fy = 1, cx = 0, cy = 0;
    int width = 0, height = 0;
    Mat3 rotation;     // camera-to-world
    Vec3 translation;  // camera position in world space

    void validate() const {
        require(fx > 0 && fy > 0, "Camera: focal lengths must be positive");
        require(cx >= 0 && cx < width && cy >= 0 && cy < height,
                "Camera: principal point outside image");
        require(rotation.orthonormality_error() < 1e-6, "Camera: rotation not orthonormal");
    }

    Vec3 position() const { return translation; }

    /// World ray through pixel (px, py); px/py may be fractional pixel indices.
    Ray ray_for_pixel(double px, double py, int frame = 0) const {
        require(px >= 0 && px < width && py >= 0 && py < height,
                "ray_for_pixel: pixel outside image bounds");
        double u = px + 0.5, v = py + 0.5;
        Vec3 dir_cam{(u - cx) / fx, (v - cy) / fy, 1.0};
        return Ray{translation, (rotation * dir_cam).normalized(), frame};
    }

    /// Inverse of ray_for_pixel: world point -> fractional pixel indices.
    /// Returns nullopt for points at or behind the camera plane.
    std::optional<std::pair<double, double>> project(const Vec3& p_world) const {
        Vec3 pc = rotation.transposed() * (p_world - translation);
        if (pc.z <= 1e-12) return std::nullopt;
        double u = fx * pc.x / pc.z + cx;
        double v = fy * pc.y / pc.z + cy;
        return std::make_pair(u - 0.5, v - 0.5);
    }

    /// True when the world point projects inside the image area (and in front).
    bool frustum_contains(const Vec3& p_world) const {
        auto px = project(p_world);
        if (!px) return false;
        double u = px->first + 0.5, v = px->second + 0.5;
        return u >= 0 && u < width && v >= 0 && v < height;
    }
};

/// Slab test, entry/exit clipped to alpha >= 0. Returns nullopt on miss.
inline std::optional<std::pair<double, double>> intersect_aabb(const Ray& ray, const Aabb& box) {
    double a_min = 0.0;
    double a_max = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 3; ++i) {
        double o = ray.origin[i], d = ray.direction[i];
        if (std::abs(d) < 1e-300) {
            if (o < box.min[i] || o > box.max[i]) return std::nullopt;
            continue;
        }
        double t0 = (box.min[i] - o) / d;
        double t1 = (box.max[i] - o) / d;
        if (t0 > t1) std::swap(t0, t1);
        a_min = std::max(a_min, t0);
        a_max = std::min(a_max, t1);
        if (a_min >= a_max) return std::nullopt;
    }
    if (!(a_min < a_max)) return std::nullopt;
    return std::make_pair(a_min, a_max);
}

// ---------------------------------------------------------------------------
// Images: row-major scalars in [0,1], 1 channel (mask) or 3 (RGB).

struct Image {
    int width = 0, height = 0, channels = 0;
    std::vector<float> data;

    Image() = default;
    Image(int w, int h, int c, float fill = 0.f)
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {
        require(c == 1 || c == 3, "Image: channels must be 1 or 3");
    }

    std::size_t index(int x, int y, int c = 0) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    float at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }
    float& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }

    void validate() const {
        require(data.size() == static_cast<std::size_t>(width) * height * channels,
                "Image: data length mismatch");
        for (float v : data)
            require(v >= 0.f && v <= 1.f, "Image: values must lie in [0,1]");
    }
};

}  // namespace trf4d
