#include <gtest/gtest.h>

#include "oracle_helpers.hpp"
#include "trf4d/geometry.hpp"

using namespace trf4d;

namespace {

Camera random_camera(Pcg32& rng, int size = 128) {
    // random rotation from a normalized quaternion
    double q[4];
    double n2 = 0;
    for (double& v : q) {
        v = rng.uniform(-1, 1);
        n2 += v * v;
    }
    double n = std::sqrt(n2);
    double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
    Camera c;
    c.rotation(0, 0) = 1 - 2 * (y * y + z * z);
    c.rotation(0, 1) = 2 * (x * y - w * z);
    c.rotation(0, 2) = 2 * (x * z + w * y);
    c.rotation(1, 0) = 2 * (x * y + w * z);
    c.rotation(1, 1) = 1 - 2 * (x * x + z * z);
    c.rotation(1, 2) = 2 * (y * z - w * x);
    c.rotation(2, 0) = 2 * (x * z - w * y);
    c.rotation(2, 1) = 2 * (y * z + w * x);
    c.rotation(2, 2) = 1 - 2 * (x * x + y * y);
    c.width = c.height = size;
    c.fx = rng.uniform(50, 200);
    c.fy = rng.uniform(50, 200);
    c.cx = rng.uniform(size * 0.25, size * 0.75);
    c.cy = rng.uniform(size * 0.25, size * 0.75);
    c.translation = {rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
    c.validate();
    return c;
}

Camera identity_camera() {
    Camera c;
    c.width = c.height = 64;
    c.fx = c.fy = 50;
    c.cx = c.cy = 32;
    c.translation = {0, 0, 0};
    return c;
}

}  // namespace

TEST(Camera, PrincipalAxisRay) {
    // cx=cy at the image center; the center pixel sample is (cx, cy) exactly
    Camera c = identity_camera();
    Ray r = c.ray_for_pixel(31.5, 31.5);
    EXPECT_NEAR(r.direction.x, 0, 1e-15);
    EXPECT_NEAR(r.direction.y, 0, 1e-15);
    EXPECT_NEAR(r.direction.z, 1, 1e-15);
}

TEST(Camera, OneFocalRightOfCenter) {
    Camera c = identity_camera();
    c.fx = c.fy = 25;  // keep center + fx inside the 64 px image
    Ray r = c.ray_for_pixel(31.5 + c.fx, 31.5);
    Vec3 expect = Vec3{1, 0, 1}.normalized();
    EXPECT_NEAR(r.direction.x, expect.x, 1e-12);
    EXPECT_NEAR(r.direction.y, expect.y, 1e-12);
    EXPECT_NEAR(r.direction.z, expect.z, 1e-12);
}

TEST(Camera, OutOfBoundsPixelThrows) {
    Camera c = identity_camera();
    EXPECT_THROW(c.ray_for_pixel(-1, 0), DomainError);
    EXPECT_THROW(c.ray_for_pixel(0, 64), DomainError);
}

TEST(Camera, ValidateRejectsBadRotation) {
    Camera c = identity_camera();
    c.rotation(0, 0) = 1.01;
    EXPECT_THROW(c.validate(), DomainError);
}

TEST(Camera, ProjectRayRoundTrip) {
    // 1e4 random (camera, pixel) pairs: re-projecting a point on the ray
    // recovers the pixel within 1e-4 px
    Pcg32 rng(7);
    for (int i = 0; i < 10000; ++i) {
        Camera c = random_camera(rng);
        double px = rng.uniform(0, c.width - 1e-6);
        double py = rng.uniform(0, c.height - 1e-6);
        Ray r = c.ray_for_pixel(px, py);
        double alpha = rng.uniform(0.1, 50.0);
        auto proj = c.project(r.point_at(alpha));
        ASSERT_TRUE(proj.has_value());
        EXPECT_NEAR(proj->first, px, 1e-4);
        EXPECT_NEAR(proj->second, py, 1e-4);
    }
}

TEST(IntersectAabb, AxisAligned) {
    Aabb box{{-1, -1, -1}, {1, 1, 1}};
    auto hit = intersect_aabb(Ray{{0, 0, -2}, {0, 0, 1}}, box);
    ASSERT_TRUE(hit.has_value());
    EXPECT_DOUBLE_EQ(hit->first, 1.0);
    EXPECT_DOUBLE_EQ(hit->second, 3.0);
}

TEST(IntersectAabb, OriginInsideClipsToZero) {
    Aabb box{{-1, -1, -1}, {1, 1, 1}};
    auto hit = intersect_aabb(Ray{{0.25, 0, 0}, {0, 0, 1}}, box);
    ASSERT_TRUE(hit.has_value());
    EXPECT_DOUBLE_EQ(hit->first, 0.0);
    EXPECT_DOUBLE_EQ(hit->second, 1.0);
}

TEST(IntersectAabb, ParallelOutsideSlabMisses) {
    Aabb box{{-1, -1, -1}, {1, 1, 1}};
    EXPECT_FALSE(intersect_aabb(Ray{{0, 2, -5}, {0, 0, 1}}, box).has_value());
}

TEST(IntersectAabb, MatchesIndicatorScan) {
    // brute-force 512-step sign-change scan of the box indicator
    Aabb box{{-0.8, -0.5, -1.2}, {0.4, 0.9, 0.7}};
    Pcg32 rng(11);
    int hits = 0;
    for (int i = 0; i < 10000; ++i) {
        Vec3 origin{rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4)};
        Vec3 dir = Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        if (dir.norm() < 1e-3) continue;
        Ray ray{origin, dir.normalized()};

        constexpr int kSteps = 512;
        constexpr double kFar = 16.0;
        double step = kFar / kSteps;
        double scan_entry = -1, scan_exit = -1;
        bool prev_inside = box.contains(ray.origin);
        if (prev_inside) scan_entry = 0;
        for (int s = 1; s <= kSteps; ++s) {
            bool inside = box.contains(ray.point_at(s * step));
            if (inside && !prev_inside) scan_entry = s * step;
            if (!inside && prev_inside) scan_exit = s * step;
            prev_inside = inside;
        }
        auto hit = intersect_aabb(ray, box);
        if (scan_entry < 0) {
            // the scan can miss grazing hits narrower than one step; the
            // analytic result must then also be narrower than one step
            if (hit) EXPECT_LT(hit->second - hit->first, step);
            continue;
        }
        ASSERT_TRUE(hit.has_value());
        ++hits;
        EXPECT_NEAR(hit->first, scan_entry, step);
        if (scan_exit >= 0) EXPECT_NEAR(hit->second, scan_exit, step);
    }
    EXPECT_GT(hits, 100);  // the scan actually exercised intersections
}

TEST(Aabb, NormalizeMapsCorners) {
    Aabb box{{-2, 1, 0}, {4, 3, 5}};
    box.validate();
    Vec3 lo = box.normalize(box.min), hi = box.normalize(box.max);
    EXPECT_EQ(lo.x, 0);
    EXPECT_EQ(lo.y, 0);
    EXPECT_EQ(lo.z, 0);
    EXPECT_EQ(hi.x, 1);
    EXPECT_EQ(hi.y, 1);
    EXPECT_EQ(hi.z, 1);
    EXPECT_THROW((Aabb{{0, 0, 0}, {0, 1, 1}}.validate()), DomainError);
}

TEST(Image, Invariants) {
    Image img(4, 3, 3, 0.5f);
    img.validate();
    img.data[5] = 1.5f;
    EXPECT_THROW(img.validate(), DomainError);
    img.data[5] = 0.5f;
    img.data.pop_back();
    EXPECT_THROW(img.validate(), DomainError);
    EXPECT_THROW(Image(2, 2, 4), DomainError);
}
