#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace trf4d {

// ---------------------------------------------------------------------------
// Errors

/// Contract violation on an input (bad dimensions, out-of-range pixel, ...).
struct DomainError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Filesystem-level failure (missing file, unwritable directory).
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A file exists but its contents cannot be decoded (corrupt PNG, bad magic).
struct DecodeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Manifest is parseable but inconsistent with the files it references.
struct ManifestError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw DomainError(msg);
}

// ---------------------------------------------------------------------------
// Small fixed vectors (geometry is double throughout; fields are templated)

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    double& operator[](int i) { return (&x)[i]; }
    double operator[](int i) const { return (&x)[i]; }

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3 cwise_mul(const Vec3& o) const { return {x * o.x, y * o.y, z * o.z}; }
    Vec3 cwise_div(const Vec3& o) const { return {x / o.x, y / o.y, z / o.z}; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const { return *this / norm(); }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

/// Row-major 3x3 matrix, used for camera rotations.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    double operator()(int r, int c) const { return m[3 * r + c]; }
    double& operator()(int r, int c) { return m[3 * r + c]; }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Mat3 transposed() const {
        Mat3 t;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) t(r, c) = (*this)(c, r);
        return t;
    }
    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0;
                for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
                r(i, j) = s;
            }
        return r;
    }

    /// Max abs element of R^T R - I; 0 for exactly orthonormal matrices.
    double orthonormality_error() const {
        Mat3 g = transposed() * (*this);
        double e = 0;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                e = std::max(e, std::abs(g(r, c) - (r == c ? 1.0 : 0.0)));
        return e;
    }
};

// ---------------------------------------------------------------------------
// RNG: pcg32 (O'Neill). Two u64 words of state, trivially serializable, and
// identical output on every platform, which std::uniform_* does not give us.

class Pcg32 {
  public:
    Pcg32() : Pcg32(0x853c49e6748fea9bULL) {}
    explicit Pcg32(std::uint64_t seed, std::uint64_t seq = 0xda3e39cb94b95bdbULL) {
        state_ = 0;
        inc_ = (seq << 1u) | 1u;
        next_u32();
        state_ += seed;
        next_u32();
    }

    std::uint32_t next_u32() {
        std::uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
    }

    /// Uniform in [0, 1).
    double next_double() { return next_u32() * 0x1.0p-32; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    /// Uniform integer in [0, n).
    std::uint32_t next_below(std::uint32_t n) {
        // Lemire-style rejection-free enough for our n << 2^32 uses.
        return static_cast<std::uint32_t>((std::uint64_t(next_u32()) * n) >> 32);
    }

    std::uint64_t state_word() const { return state_; }
    std::uint64_t inc_word() const { return inc_; }
    void restore(std::uint64_t state, std::uint64_t inc) {
        state_ = state;
        inc_ = inc;
    }

  private:
    std::uint64_t state_;
    std::uint64_t inc_;
};

/// splitmix64; used to derive independent component seeds from a master seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Stateless per-(iteration, ray) jitter in [0,1): keeps parallel ray batches
/// deterministic without sharing RNG state across threads.
inline double hash_jitter(std::uint64_t seed, std::uint64_t iteration, std::uint64_t ray,
                          std::uint64_t salt = 0) {
    std::uint64_t h = mix_seed(seed ^ mix_seed(iteration ^ mix_seed(ray ^ (salt * 0x9e3779b97f4a7c15ULL))));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace trf4d
