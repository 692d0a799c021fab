#pragma once

#include <atomic>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "trf4d/png_io.hpp"
#include "trf4d/scene.hpp"
#include "trf4d/threading.hpp"

namespace trf4d {

enum class Split { train, val, test };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

inline std::optional<Split> split_from_name(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    return std::nullopt;
}

/// 75/10/15 train/val/test by evenly spaced camera indices (rounded at small
/// counts; vals shift past collisions with test slots). 16 cameras -> 12/2/2.
inline std::vector<Split> assign_splits(int n_cameras) {
    std::vector<Split> splits(n_cameras, Split::train);
    int n_test = std::max(1, static_cast<int>(std::lround(0.15 * n_cameras)));
    int n_val = std::max(1, static_cast<int>(std::lround(0.10 * n_cameras)));
    require(n_test + n_val < n_cameras, "assign_splits: too few cameras for disjoint splits");
    for (int k = 0; k < n_test; ++k)
        splits[static_cast<int>((k + 0.5) * n_cameras / n_test)] = Split::test;
    for (int k = 0; k < n_val; ++k) {
        int i = static_cast<int>((k + 0.5) * n_cameras / n_val);
        while (splits[i] != Split::train) i = (i + 1) % n_cameras;
        splits[i] = Split::val;
    }
    return splits;
}

// ---------------------------------------------------------------------------
// On-disk layout: manifest.json (version 1) + PNGs under
// {split}/cam{cam:03}/frame{frame:05}_{rgb|mask}.png

struct DatasetManifest {
    int version = 1;
    Aabb box;
    int frames = 0;
    int width = 0, height = 0;
    SceneSpec scene;
    std::vector<Camera> cameras;
    std::vector<Split> splits;

    std::string image_path(int cam, int frame, bool rgb) const {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%s/cam%03d/frame%05d_%s.png",
                      split_name(splits[cam]), cam, frame, rgb ? "rgb" : "mask");
        return buf;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["version"] = version;
        j["box"] = {{"min", {box.min.x, box.min.y, box.min.z}},
                    {"max", {box.max.x, box.max.y, box.max.z}}};
        j["frames"] = frames;
        j["image"] = {{"width", width}, {"height", height}};
        j["path_template"] = "{split}/cam{cam:03}/frame{frame:05}_{rgb|mask}.png";
        j["scene"] = {{"kind", scene_kind_name(scene.kind)},
                      {"frames", scene.frames},
                      {"cameras", scene.cameras},
                      {"image_size", scene.image_size},
                      {"seed", scene.seed}};
        j["cameras"] = nlohmann::json::array();
        for (std::size_t i = 0; i < cameras.size(); ++i) {
            const Camera& c = cameras[i];
            nlohmann::json jc;
            jc["index"] = i;
            jc["split"] = split_name(splits[i]);
            jc["fx"] = c.fx;
            jc["fy"] = c.fy;
            jc["cx"] = c.cx;
            jc["cy"] = c.cy;
            jc["width"] = c.width;
            jc["height"] = c.height;
            jc["rotation"] = c.rotation.m;
            jc["translation"] = {c.translation.x, c.translation.y, c.translation.z};
            j["cameras"].push_back(jc);
        }
        return j;
    }

    static DatasetManifest from_json(const nlohmann::json& j) {
        DatasetManifest m;
        m.version = j.at("version").get<int>();
        if (m.version != 1) throw ManifestError("unsupported manifest version");
        auto jb = j.at("box");
        for (int i = 0; i < 3; ++i) {
            m.box.min[i] = jb.at("min")[i].get<double>();
            m.box.max[i] = jb.at("max")[i].get<double>();
        }
        m.box.validate();
        m.frames = j.at("frames").get<int>();
        m.width = j.at("image").at("width").get<int>();
        m.height = j.at("image").at("height").get<int>();
        auto js = j.at("scene");
        auto kind = scene_kind_from_name(js.at("kind").get<std::string>());
        if (!kind) throw ManifestError("unknown scene kind in manifest");
        m.scene = {*kind, js.at("frames").get<int>(), js.at("cameras").get<int>(),
                   js.at("image_size").get<int>(), js.at("seed").get<std::uint64_t>()};
        for (const auto& jc : j.at("cameras")) {
            Camera c;
            c.fx = jc.at("fx").get<double>();
            c.fy = jc.at("fy").get<double>();
            c.cx = jc.at("cx").get<double>();
            c.cy = jc.at("cy").get<double>();
            c.width = jc.at("width").get<int>();
            c.height = jc.at("height").get<int>();
            for (int i = 0; i < 9; ++i) c.rotation.m[i] = jc.at("rotation")[i].get<double>();
            for (int i = 0; i < 3; ++i) c.translation[i] = jc.at("translation")[i].get<double>();
            c.validate();
            m.cameras.push_back(c);
            auto sp = split_from_name(jc.at("split").get<std::string>());
            if (!sp) throw ManifestError("unknown split tag in manifest");
            m.splits.push_back(*sp);
        }
        require(static_cast<int>(m.cameras.size()) >= 2, "manifest: need at least 2 cameras");
        return m;
    }
};

/// Renders the whole synthetic dataset to out_dir (1024-step f64 reference
/// integration per pixel, masks from thresholded accumulated weight) and
/// writes the manifest. Deterministic for a given spec.
inline DatasetManifest generate_dataset(const SceneSpec& spec, const std::filesystem::path& out_dir,
                                        ThreadPool* pool = nullptr) {
    require(spec.frames >= 1 && spec.cameras >= 2, "generate_dataset: need frames >= 1, cameras >= 2");
    AnalyticScene scene(spec);
    DatasetManifest man;
    man.box = scene.box();
    man.frames = spec.frames;
    man.width = man.height = spec.image_size;
    man.scene = spec;
    man.cameras = make_camera_ring(spec, scene.box());
    man.splits = assign_splits(spec.cameras);

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create dataset directory: " + out_dir.string());

    std::size_t total = static_cast<std::size_t>(spec.cameras) * spec.frames;
    auto render_one = [&](std::size_t job) {
        int cam = static_cast<int>(job / spec.frames);
        int frame = static_cast<int>(job % spec.frames);
        Image rgb, mask;
        scene.render_reference(man.cameras[cam], frame, &rgb, &mask);
        auto rgb_path = out_dir / man.image_path(cam, frame, true);
        std::filesystem::create_directories(rgb_path.parent_path());
        write_png(rgb_path, rgb);
        write_png(out_dir / man.image_path(cam, frame, false), mask);
    };
    if (pool)
        pool->parallel_chunks(total, [&](int, std::size_t b, std::size_t e) {
            for (std::size_t j = b; j < e; ++j) render_one(j);
        });
    else
        for (std::size_t j = 0; j < total; ++j) render_one(j);

    std::ofstream os(out_dir / "manifest.json");
    if (!os) throw IoError("cannot write manifest: " + (out_dir / "manifest.json").string());
    os << man.to_json().dump(2) << "\n";
    return man;
}

// ---------------------------------------------------------------------------
// Loader with a bounded image pool. Readers take immutable snapshots
// (shared_ptr), so a concurrent refill can never tear an image.

struct ImagePair {
    Image rgb;
    Image mask;
};

class Dataset {
  public:
    Dataset(const std::filesystem::path& manifest_path, std::size_t pool_capacity = 64,
            bool background_refill = false)
        : root_(manifest_path.parent_path()), pool_capacity_(std::max<std::size_t>(1, pool_capacity)) {
        std::ifstream is(manifest_path);
        if (!is) throw IoError("cannot open manifest: " + manifest_path.string());
        nlohmann::json j;
        try {
            is >> j;
        } catch (const nlohmann::json::exception& e) {
            throw DecodeError("manifest is not valid JSON: " + manifest_path.string() + ": " + e.what());
        }
        man_ = DatasetManifest::from_json(j);
        // every referenced (camera, frame) must resolve to existing files
        for (int c = 0; c < static_cast<int>(man_.cameras.size()); ++c)
            for (int f = 0; f < man_.frames; ++f)
                for (bool rgb : {true, false}) {
                    auto p = root_ / man_.image_path(c, f, rgb);
                    if (!std::filesystem::exists(p))
                        throw ManifestError("manifest references missing file: " + p.string());
                }
        if (background_refill) start_refill_worker();
    }

    ~Dataset() { stop_refill_worker(); }
    Dataset(const Dataset&) = delete;
    Dataset& operator=(const Dataset&) = delete;

    const DatasetManifest& manifest() const { return man_; }
    const Aabb& box() const { return man_.box; }
    int num_frames() const { return man_.frames; }
    int num_cameras() const { return static_cast<int>(man_.cameras.size()); }
    const Camera& camera(int i) const { return man_.cameras[i]; }
    Split split(int i) const { return man_.splits[i]; }

    std::vector<int> cameras_in(Split s) const {
        std::vector<int> out;
        for (int i = 0; i < num_cameras(); ++i)
            if (man_.splits[i] == s) out.push_back(i);
        return out;
    }

    /// Pool-backed random access; loads on miss and evicts FIFO.
    std::shared_ptr<const ImagePair> images(int cam, int frame) const {
        require(cam >= 0 && cam < num_cameras() && frame >= 0 && frame < man_.frames,
                "Dataset::images: index out of range");
        std::uint64_t key = static_cast<std::uint64_t>(cam) * man_.frames + frame;
        {
            std::scoped_lock lk(mu_);
            auto it = pool_.find(key);
            if (it != pool_.end()) return it->second;
        }
        auto pair = load_pair(cam, frame);
        {
            std::scoped_lock lk(mu_);
            auto [it, inserted] = pool_.emplace(key, pair);
            if (inserted) {
                fifo_.push_back(key);
                while (pool_.size() > pool_capacity_) {
                    pool_.erase(fifo_.front());
                    fifo_.pop_front();
                }
            }
            return it->second;
        }
    }

    std::size_t pool_size() const {
        std::scoped_lock lk(mu_);
        return pool_.size();
    }

  private:
    std::shared_ptr<const ImagePair> load_pair(int cam, int frame) const {
        auto pair = std::make_shared<ImagePair>();
        pair->rgb = read_png(root_ / man_.image_path(cam, frame, true));
        pair->mask = read_png(root_ / man_.image_path(cam, frame, false));
        const Camera& c = man_.cameras[cam];
        if (pair->rgb.width != c.width || pair->rgb.height != c.height || pair->rgb.channels != 3 ||
            pair->mask.width != c.width || pair->mask.height != c.height || pair->mask.channels != 1)
            throw ManifestError("image shape does not match manifest for " +
                                man_.image_path(cam, frame, true));
        return pair;
    }

    void start_refill_worker() {
        refill_stop_ = false;
        refill_ = std::thread([this] {
            Pcg32 rng(man_.scene.seed ^ 0x9e3779b9ULL);
            while (!refill_stop_.load(std::memory_order_relaxed)) {
                int cam = static_cast<int>(rng.next_below(num_cameras()));
                int frame = static_cast<int>(rng.next_below(man_.frames));
                try {
                    images(cam, frame);
                } catch (...) {
                    break;  // surfaced on the next foreground access
                }
                std::this_thread::sleep_for(std::chrono::milliseconds(1));
            }
        });
    }

    void stop_refill_worker() {
        if (refill_.joinable()) {
            refill_stop_ = true;
            refill_.join();
        }
    }

    std::filesystem::path root_;
    DatasetManifest man_;
    std::size_t pool_capacity_;
    mutable std::mutex mu_;
    mutable std::map<std::uint64_t, std::shared_ptr<const ImagePair>> pool_;
    mutable std::deque<std::uint64_t> fifo_;
    std::thread refill_;
    std::atomic<bool> refill_stop_{false};
};

}  // namespace trf4d
