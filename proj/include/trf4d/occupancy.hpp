#pragma once

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "trf4d/geometry.hpp"

namespace trf4d {

// ---------------------------------------------------------------------------
// Binary voxelization of the foreground for one frame (or a frame-set union).

class OccupancyGrid {
  public:
    OccupancyGrid() = default;
    OccupancyGrid(int nx, int ny, int nz, const Aabb& box, bool fill = false)
        : nx_(nx), ny_(ny), nz_(nz), box_(box),
          words_((static_cast<std::size_t>(nx) * ny * nz + 63) / 64,
                 fill ? ~0ULL : 0ULL) {
        require(nx >= 1 && ny >= 1 && nz >= 1, "OccupancyGrid: resolution components must be >= 1");
        box.validate();
        // clear padding bits so popcounts stay exact
        std::size_t n = voxel_count();
        if (fill && n % 64) words_.back() = (1ULL << (n % 64)) - 1;
    }

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    int nz() const { return nz_; }
    const Aabb& box() const { return box_; }
    std::size_t voxel_count() const { return static_cast<std::size_t>(nx_) * ny_ * nz_; }

    std::size_t voxel_index(int x, int y, int z) const {
        return (static_cast<std::size_t>(z) * ny_ + y) * nx_ + x;
    }

    bool get(int x, int y, int z) const {
        std::size_t i = voxel_index(x, y, z);
        return (words_[i >> 6] >> (i & 63)) & 1ULL;
    }
    void set(int x, int y, int z, bool v) {
        std::size_t i = voxel_index(x, y, z);
        if (v)
            words_[i >> 6] |= 1ULL << (i & 63);
        else
            words_[i >> 6] &= ~(1ULL << (i & 63));
    }

    Vec3 voxel_center(int x, int y, int z) const {
        Vec3 e = box_.extent();
        return {box_.min.x + (x + 0.5) * e.x / nx_, box_.min.y + (y + 0.5) * e.y / ny_,
                box_.min.z + (z + 0.5) * e.z / nz_};
    }

    /// Occupancy at a world-space point; points outside the box are empty.
    /// The far faces belong to the last voxel along each axis.
    bool occupied_at(const Vec3& p) const {
        Vec3 u = box_.normalize(p);
        if (u.x < 0 || u.y < 0 || u.z < 0 || u.x > 1 || u.y > 1 || u.z > 1) return false;
        int x = std::min(static_cast<int>(u.x * nx_), nx_ - 1);
        int y = std::min(static_cast<int>(u.y * ny_), ny_ - 1);
        int z = std::min(static_cast<int>(u.z * nz_), nz_ - 1);
        return get(x, y, z);
    }

    bool same_layout(const OccupancyGrid& o) const {
        return nx_ == o.nx_ && ny_ == o.ny_ && nz_ == o.nz_ &&
               (box_.min - o.box_.min).norm() == 0 && (box_.max - o.box_.max).norm() == 0;
    }

    void union_with(const OccupancyGrid& o) {
        require(same_layout(o), "union: grids must share resolution and box");
        for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= o.words_[i];
    }

    /// Number of occupied voxels (Eq. 3's delta).
    std::size_t popcount() const {
        std::size_t n = 0;
        for (std::uint64_t w : words_) n += std::popcount(w);
        return n;
    }

    const std::vector<std::uint64_t>& words() const { return words_; }

    bool operator==(const OccupancyGrid& o) const {
        return same_layout(o) && words_ == o.words_;
    }

  private:
    int nx_ = 0, ny_ = 0, nz_ = 0;
    Aabb box_;
    std::vector<std::uint64_t> words_;
};

// ---------------------------------------------------------------------------
// Space carving from multi-view foreground masks.

namespace detail {

/// Chebyshev dilation by r pixels; keeps thin structures alive under aliasing.
inline Image dilate_mask(const Image& m, int r) {
    if (r <= 0) return m;
    Image horiz(m.width, m.height, 1), out(m.width, m.height, 1);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            float v = 0.f;
            for (int dx = -r; dx <= r; ++dx) {
                int xx = x + dx;
                if (xx >= 0 && xx < m.width) v = std::max(v, m.at(xx, y));
            }
            horiz.at(x, y) = v;
        }
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            float v = 0.f;
            for (int dy = -r; dy <= r; ++dy) {
                int yy = y + dy;
                if (yy >= 0 && yy < m.height) v = std::max(v, horiz.at(x, yy));
            }
            out.at(x, y) = v;
        }
    return out;
}

}  // namespace detail

/// A voxel stays occupied unless some camera sees background at its center.
/// Voxels outside every frustum are kept (conservative visual hull).
inline OccupancyGrid carve_occupancy(const std::vector<Image>& masks,
                                     const std::vector<Camera>& cameras, const Aabb& box,
                                     int nx, int ny, int nz, int dilation_px = 1) {
    require(masks.size() == cameras.size(), "carve_occupancy: mask/camera count mismatch");
    std::vector<Image> dilated;
    dilated.reserve(masks.size());
    for (std::size_t i = 0; i < masks.size(); ++i) {
        require(masks[i].channels == 1, "carve_occupancy: masks must be single channel");
        require(masks[i].width == cameras[i].width && masks[i].height == cameras[i].height,
                "carve_occupancy: mask size does not match camera");
        dilated.push_back(detail::dilate_mask(masks[i], dilation_px));
    }

    OccupancyGrid grid(nx, ny, nz, box, /*fill=*/true);
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                Vec3 c = grid.voxel_center(x, y, z);
                for (std::size_t k = 0; k < cameras.size(); ++k) {
                    auto px = cameras[k].project(c);
                    if (!px) continue;
                    int u = static_cast<int>(std::floor(px->first + 0.5));
                    int v = static_cast<int>(std::floor(px->second + 0.5));
                    if (u < 0 || u >= cameras[k].width || v < 0 || v >= cameras[k].height)
                        continue;  // outside this frustum: no carving evidence
                    if (dilated[k].at(u, v) <= 0.5f) {
                        grid.set(x, y, z, false);
                        break;
                    }
                }
            }
    return grid;
}

/// Logical OR over a frame set (Eq. 2).
inline OccupancyGrid union_occupancy(const std::vector<OccupancyGrid>& grids) {
    require(!grids.empty(), "union_occupancy: empty grid list");
    OccupancyGrid out = grids[0];
    for (std::size_t i = 1; i < grids.size(); ++i) out.union_with(grids[i]);
    return out;
}

/// delta(T): number of occupied voxels (Eq. 3).
inline std::size_t total_occupancy(const OccupancyGrid& grid) { return grid.popcount(); }

/// phi(T) = delta(union over frames) / delta(first frame) (Eq. 4).
inline double expansion_factor(const std::vector<OccupancyGrid>& per_frame) {
    require(!per_frame.empty(), "expansion_factor: empty frame list");
    std::size_t first = total_occupancy(per_frame[0]);
    require(first > 0, "expansion_factor: first frame has no occupied voxels");
    return static_cast<double>(total_occupancy(union_occupancy(per_frame))) /
           static_cast<double>(first);
}

// ---------------------------------------------------------------------------
// Adaptive temporal partitioning.

struct PoolEntry {
    int size;            // maximum frames for this class
    int capacity_log2;   // per-level hash table size, log2
};

/// Segment sizes 6,12,25,50,100 paired with hash sizes 2^15..2^19.
inline std::vector<PoolEntry> default_segment_pool() {
    return {{6, 15}, {12, 16}, {25, 17}, {50, 18}, {100, 19}};
}

struct Segment {
    int start = 0;
    int length = 0;
    int hash_capacity_log2 = 0;

    bool operator==(const Segment&) const = default;
};

struct SegmentPlan {
    std::vector<Segment> segments;

    int num_frames() const {
        int n = 0;
        for (const auto& s : segments) n += s.length;
        return n;
    }

    /// Index of the segment containing the frame, or -1.
    int segment_for_frame(int frame) const {
        for (std::size_t i = 0; i < segments.size(); ++i)
            if (frame >= segments[i].start && frame < segments[i].start + segments[i].length)
                return static_cast<int>(i);
        return -1;
    }

    void validate() const {
        int next = segments.empty() ? 0 : segments[0].start;
        for (const auto& s : segments) {
            require(s.start == next && s.length >= 1, "SegmentPlan: segments must tile contiguously");
            next = s.start + s.length;
        }
    }

    bool operator==(const SegmentPlan&) const = default;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["segments"] = nlohmann::json::array();
        for (const auto& s : segments)
            j["segments"].push_back(
                {{"start", s.start}, {"length", s.length}, {"capacity_log2", s.hash_capacity_log2}});
        return j;
    }

    static SegmentPlan from_json(const nlohmann::json& j) {
        SegmentPlan plan;
        for (const auto& s : j.at("segments"))
            plan.segments.push_back(
                {s.at("start").get<int>(), s.at("length").get<int>(), s.at("capacity_log2").get<int>()});
        plan.validate();
        return plan;
    }
};

/// Greedy left-to-right scan: grow a segment while phi <= threshold and the
/// run fits the largest pool size, then assign the smallest pool capacity
/// whose size covers the run.
inline SegmentPlan partition_sequence(const std::vector<OccupancyGrid>& per_frame,
                                      double threshold,
                                      const std::vector<PoolEntry>& pool = default_segment_pool()) {
    require(threshold > 1.0, "partition_sequence: threshold must exceed 1");
    require(!pool.empty(), "partition_sequence: empty pool");
    require(!per_frame.empty(), "partition_sequence: empty frame list");
    for (std::size_t i = 1; i < pool.size(); ++i)
        require(pool[i - 1].size < pool[i].size, "partition_sequence: pool must be sorted by size");
    int max_size = pool.back().size;

    SegmentPlan plan;
    int n = static_cast<int>(per_frame.size());
    int s = 0;
    while (s < n) {
        OccupancyGrid acc = per_frame[s];
        std::size_t base = total_occupancy(acc);
        require(base > 0, "partition_sequence: segment start frame has no occupied voxels");
        int run = 1;
        while (s + run < n && run + 1 <= max_size) {
            OccupancyGrid grown = acc;
            grown.union_with(per_frame[s + run]);
            double phi = static_cast<double>(total_occupancy(grown)) / static_cast<double>(base);
            if (phi > threshold) break;
            acc = std::move(grown);
            ++run;
        }
        int cap = pool.back().capacity_log2;
        for (const auto& e : pool)
            if (e.size >= run) {
                cap = e.capacity_log2;
                break;
            }
        plan.segments.push_back({s, run, cap});
        s += run;
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Raw bitset serialization: 24-byte header (nx, ny, nz as u64 LE), then the
// voxel bits packed LSB-first in x-fastest order, zero-padded to a byte.

namespace detail {

inline void put_u64_le(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64_le(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace detail

inline void save_occupancy(const OccupancyGrid& g, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    detail::put_u64_le(os, g.nx());
    detail::put_u64_le(os, g.ny());
    detail::put_u64_le(os, g.nz());
    std::size_t nbytes = (g.voxel_count() + 7) / 8;
    std::vector<unsigned char> bytes(nbytes, 0);
    for (std::size_t i = 0; i < g.voxel_count(); ++i) {
        bool bit = (g.words()[i >> 6] >> (i & 63)) & 1ULL;
        if (bit) bytes[i >> 3] |= static_cast<unsigned char>(1u << (i & 7));
    }
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(nbytes));
    if (!os) throw IoError("write failed: " + path.string());
}

inline OccupancyGrid load_occupancy(const std::filesystem::path& path, const Aabb& box) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path.string());
    int nx = static_cast<int>(detail::get_u64_le(is));
    int ny = static_cast<int>(detail::get_u64_le(is));
    int nz = static_cast<int>(detail::get_u64_le(is));
    if (!is || nx < 1 || ny < 1 || nz < 1)
        throw DecodeError("bad occupancy header: " + path.string());
    OccupancyGrid g(nx, ny, nz, box);
    std::size_t nbytes = (g.voxel_count() + 7) / 8;
    std::vector<unsigned char> bytes(nbytes);
    is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(nbytes));
    if (!is) throw DecodeError("truncated occupancy bitset: " + path.string());
    for (std::size_t i = 0; i < g.voxel_count(); ++i)
        if ((bytes[i >> 3] >> (i & 7)) & 1u) {
            int x = static_cast<int>(i % nx);
            int y = static_cast<int>((i / nx) % ny);
            int z = static_cast<int>(i / (static_cast<std::size_t>(nx) * ny));
            g.set(x, y, z, true);
        }
    return g;
}

}  // namespace trf4d
