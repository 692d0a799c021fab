#pragma once

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "trf4d/dataset.hpp"
#include "trf4d/feature_field.hpp"
#include "trf4d/metrics.hpp"
#include "trf4d/train.hpp"

namespace trf4d {

// ---------------------------------------------------------------------------
// TOML-backed run configuration. Every knob defaults to the values the rest
// of the library uses; unknown keys are rejected. The subset understood here
// is flat [section] tables with string/int/float/bool values and integer
// arrays, which covers the whole schema below.

struct RunConfig {
    // [run]
    std::uint64_t seed = 42;
    int threads = 1;
    bool deterministic = true;

    // [scene]
    std::string scene_kind = "pulsing_sphere";
    int frames = 16;
    int cameras = 16;
    int image_size = 64;

    // [grid]
    std::string preset = "desk";  // desk | paper
    std::string backend = "humanrf";
    int levels = 8;
    int features_per_level = 2;
    int coarsest = 16;
    int finest = 256;
    int table_size_log2 = 15;
    bool table_from_plan = false;
    int dense1d_spatial_res = 64;
    int hex2d_finest = 0;
    int tngp_table_log2 = 0;

    // [occupancy]
    int occupancy_resolution = 128;
    int dilation_px = 1;
    double threshold = 1.25;
    std::vector<int> pool_sizes = {6, 12, 25, 50, 100};
    std::vector<int> pool_capacity_log2 = {15, 16, 17, 18, 19};

    // [render]
    int n_steps = 256;

    // [train]
    int iterations = 0;  // 0 -> frames * 300
    int batch_max_samples = 65536;
    int frames_per_batch = 8;
    double lr_start = 1e-2;
    double lr_end = 5e-3;
    double huber_delta = kDefaultHuberDelta;
    double beta_mask = kDefaultMaskBeta;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.99;
    double adam_eps = 1e-15;
    int checkpoint_every = 0;
    int initial_rays = 0;

    // [eval]
    std::string eval_split = "test";
    int eval_frame_stride = 1;

    void apply_preset() {
        if (preset == "desk") return;
        require(preset == "paper", "config: preset must be 'desk' or 'paper'");
        levels = 16;
        coarsest = 32;
        finest = 2048;
        table_from_plan = true;
    }

    SceneSpec scene_spec() const {
        auto kind = scene_kind_from_name(scene_kind);
        require(kind.has_value(), "config: unknown scene kind '" + scene_kind + "'");
        return {*kind, frames, cameras, image_size, seed};
    }

    FieldOptions field_options() const {
        auto b = backend_from_name(backend);
        require(b.has_value(), "config: unknown backend '" + backend + "'");
        FieldOptions o;
        o.backend = *b;
        o.grid = {levels, features_per_level, coarsest, finest, table_size_log2};
        o.dense1d_spatial_res = dense1d_spatial_res;
        o.hex2d_finest = hex2d_finest;
        o.tngp_table_log2 = tngp_table_log2;
        return o;
    }

    std::vector<PoolEntry> pool() const {
        require(pool_sizes.size() == pool_capacity_log2.size() && !pool_sizes.empty(),
                "config: pool_sizes and pool_capacity_log2 must align");
        std::vector<PoolEntry> p;
        for (std::size_t i = 0; i < pool_sizes.size(); ++i)
            p.push_back({pool_sizes[i], pool_capacity_log2[i]});
        return p;
    }

    TrainConfig train_config() const {
        TrainConfig t;
        t.iterations = iterations;
        t.batch_max_samples = batch_max_samples;
        t.frames_per_batch = frames_per_batch;
        t.n_steps = n_steps;
        t.lr_start = lr_start;
        t.lr_end = lr_end;
        t.huber_delta = huber_delta;
        t.beta_mask = beta_mask;
        t.adam_beta1 = adam_beta1;
        t.adam_beta2 = adam_beta2;
        t.adam_eps = adam_eps;
        t.deterministic = deterministic;
        t.checkpoint_every = checkpoint_every;
        t.initial_rays = initial_rays;
        return t;
    }

    EvalProtocol eval_protocol() const {
        auto s = split_from_name(eval_split);
        require(s.has_value(), "config: unknown eval split '" + eval_split + "'");
        return {*s, eval_frame_stride, n_steps};
    }
};

// ---------------------------------------------------------------------------
// TOML subset IO

namespace toml_detail {

struct Value {
    std::string raw;
    int line = 0;
};

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::string strip_comment(const std::string& line) {
    bool in_str = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_str = !in_str;
        if (line[i] == '#' && !in_str) return line.substr(0, i);
    }
    return line;
}

inline std::map<std::string, Value> parse_toml(std::istream& is) {
    std::map<std::string, Value> kv;
    std::string section, line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = trim(strip_comment(line));
        if (t.empty()) continue;
        if (t.front() == '[') {
            require(t.back() == ']', "toml: malformed section header at line " + std::to_string(lineno));
            section = trim(t.substr(1, t.size() - 2));
            require(!section.empty(), "toml: empty section name at line " + std::to_string(lineno));
            continue;
        }
        std::size_t eq = t.find('=');
        require(eq != std::string::npos, "toml: expected key = value at line " + std::to_string(lineno));
        std::string key = trim(t.substr(0, eq));
        std::string val = trim(t.substr(eq + 1));
        require(!key.empty() && !val.empty(), "toml: empty key or value at line " + std::to_string(lineno));
        std::string full = section.empty() ? key : section + "." + key;
        require(!kv.count(full), "toml: duplicate key '" + full + "'");
        kv[full] = {val, lineno};
    }
    return kv;
}

inline std::string parse_string(const Value& v) {
    require(v.raw.size() >= 2 && v.raw.front() == '"' && v.raw.back() == '"',
            "toml: expected a quoted string at line " + std::to_string(v.line));
    return v.raw.substr(1, v.raw.size() - 2);
}

inline bool parse_bool(const Value& v) {
    if (v.raw == "true") return true;
    if (v.raw == "false") return false;
    throw DomainError("toml: expected true/false at line " + std::to_string(v.line));
}

inline double parse_number(const Value& v) {
    std::size_t pos = 0;
    double d;
    try {
        d = std::stod(v.raw, &pos);
    } catch (const std::exception&) {
        throw DomainError("toml: expected a number at line " + std::to_string(v.line));
    }
    require(pos == v.raw.size(), "toml: trailing characters after number at line " + std::to_string(v.line));
    return d;
}

inline long long parse_int(const Value& v) {
    double d = parse_number(v);
    long long i = static_cast<long long>(d);
    require(static_cast<double>(i) == d, "toml: expected an integer at line " + std::to_string(v.line));
    return i;
}

inline std::vector<int> parse_int_array(const Value& v) {
    require(v.raw.size() >= 2 && v.raw.front() == '[' && v.raw.back() == ']',
            "toml: expected an array at line " + std::to_string(v.line));
    std::vector<int> out;
    std::string body = v.raw.substr(1, v.raw.size() - 2);
    std::stringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        out.push_back(static_cast<int>(parse_int({item, v.line})));
    }
    return out;
}

}  // namespace toml_detail

inline RunConfig parse_run_config(std::istream& is) {
    namespace td = toml_detail;
    auto kv = td::parse_toml(is);
    RunConfig c;
    if (auto it = kv.find("grid.preset"); it != kv.end()) c.preset = td::parse_string(it->second);
    c.apply_preset();

    std::map<std::string, std::function<void(const td::Value&)>> schema = {
        {"run.seed", [&](auto& v) { c.seed = static_cast<std::uint64_t>(td::parse_int(v)); }},
        {"run.threads", [&](auto& v) { c.threads = static_cast<int>(td::parse_int(v)); }},
        {"run.deterministic", [&](auto& v) { c.deterministic = td::parse_bool(v); }},
        {"scene.kind", [&](auto& v) { c.scene_kind = td::parse_string(v); }},
        {"scene.frames", [&](auto& v) { c.frames = static_cast<int>(td::parse_int(v)); }},
        {"scene.cameras", [&](auto& v) { c.cameras = static_cast<int>(td::parse_int(v)); }},
        {"scene.image_size", [&](auto& v) { c.image_size = static_cast<int>(td::parse_int(v)); }},
        {"grid.preset", [&](auto&) {}},  // consumed above
        {"grid.backend", [&](auto& v) { c.backend = td::parse_string(v); }},
        {"grid.levels", [&](auto& v) { c.levels = static_cast<int>(td::parse_int(v)); }},
        {"grid.features_per_level",
         [&](auto& v) { c.features_per_level = static_cast<int>(td::parse_int(v)); }},
        {"grid.coarsest", [&](auto& v) { c.coarsest = static_cast<int>(td::parse_int(v)); }},
        {"grid.finest", [&](auto& v) { c.finest = static_cast<int>(td::parse_int(v)); }},
        {"grid.table_size_log2",
         [&](auto& v) { c.table_size_log2 = static_cast<int>(td::parse_int(v)); }},
        {"grid.table_from_plan", [&](auto& v) { c.table_from_plan = td::parse_bool(v); }},
        {"grid.dense1d_spatial_res",
         [&](auto& v) { c.dense1d_spatial_res = static_cast<int>(td::parse_int(v)); }},
        {"grid.hex2d_finest", [&](auto& v) { c.hex2d_finest = static_cast<int>(td::parse_int(v)); }},
        {"grid.tngp_table_log2",
         [&](auto& v) { c.tngp_table_log2 = static_cast<int>(td::parse_int(v)); }},
        {"occupancy.resolution",
         [&](auto& v) { c.occupancy_resolution = static_cast<int>(td::parse_int(v)); }},
        {"occupancy.dilation_px", [&](auto& v) { c.dilation_px = static_cast<int>(td::parse_int(v)); }},
        {"occupancy.threshold", [&](auto& v) { c.threshold = td::parse_number(v); }},
        {"occupancy.pool_sizes", [&](auto& v) { c.pool_sizes = td::parse_int_array(v); }},
        {"occupancy.pool_capacity_log2",
         [&](auto& v) { c.pool_capacity_log2 = td::parse_int_array(v); }},
        {"render.n_steps", [&](auto& v) { c.n_steps = static_cast<int>(td::parse_int(v)); }},
        {"train.iterations", [&](auto& v) { c.iterations = static_cast<int>(td::parse_int(v)); }},
        {"train.batch_max_samples",
         [&](auto& v) { c.batch_max_samples = static_cast<int>(td::parse_int(v)); }},
        {"train.frames_per_batch",
         [&](auto& v) { c.frames_per_batch = static_cast<int>(td::parse_int(v)); }},
        {"train.lr_start", [&](auto& v) { c.lr_start = td::parse_number(v); }},
        {"train.lr_end", [&](auto& v) { c.lr_end = td::parse_number(v); }},
        {"train.huber_delta", [&](auto& v) { c.huber_delta = td::parse_number(v); }},
        {"train.beta_mask", [&](auto& v) { c.beta_mask = td::parse_number(v); }},
        {"train.adam_beta1", [&](auto& v) { c.adam_beta1 = td::parse_number(v); }},
        {"train.adam_beta2", [&](auto& v) { c.adam_beta2 = td::parse_number(v); }},
        {"train.adam_eps", [&](auto& v) { c.adam_eps = td::parse_number(v); }},
        {"train.checkpoint_every",
         [&](auto& v) { c.checkpoint_every = static_cast<int>(td::parse_int(v)); }},
        {"train.initial_rays", [&](auto& v) { c.initial_rays = static_cast<int>(td::parse_int(v)); }},
        {"eval.split", [&](auto& v) { c.eval_split = td::parse_string(v); }},
        {"eval.frame_stride",
         [&](auto& v) { c.eval_frame_stride = static_cast<int>(td::parse_int(v)); }},
    };
    for (const auto& [key, value] : kv) {
        auto it = schema.find(key);
        require(it != schema.end(), "config: unknown key '" + key + "'");
        it->second(value);
    }
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config: " + path.string());
    return parse_run_config(is);
}

inline std::string run_config_to_toml(const RunConfig& c) {
    std::ostringstream os;
    os.precision(17);
    auto arr = [](const std::vector<int>& v) {
        std::string s = "[";
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
        return s + "]";
    };
    os << "[run]\n"
       << "seed = " << c.seed << "\n"
       << "threads = " << c.threads << "\n"
       << "deterministic = " << (c.deterministic ? "true" : "false") << "\n\n";
    os << "[scene]\n"
       << "kind = \"" << c.scene_kind << "\"\n"
       << "frames = " << c.frames << "\n"
       << "cameras = " << c.cameras << "\n"
       << "image_size = " << c.image_size << "\n\n";
    os << "[grid]\n"
       << "preset = \"" << c.preset << "\"\n"
       << "backend = \"" << c.backend << "\"\n"
       << "levels = " << c.levels << "\n"
       << "features_per_level = " << c.features_per_level << "\n"
       << "coarsest = " << c.coarsest << "\n"
       << "finest = " << c.finest << "\n"
       << "table_size_log2 = " << c.table_size_log2 << "\n"
       << "table_from_plan = " << (c.table_from_plan ? "true" : "false") << "\n"
       << "dense1d_spatial_res = " << c.dense1d_spatial_res << "\n"
       << "hex2d_finest = " << c.hex2d_finest << "\n"
       << "tngp_table_log2 = " << c.tngp_table_log2 << "\n\n";
    os << "[occupancy]\n"
       << "resolution = " << c.occupancy_resolution << "\n"
       << "dilation_px = " << c.dilation_px << "\n"
       << "threshold = " << c.threshold << "\n"
       << "pool_sizes = " << arr(c.pool_sizes) << "\n"
       << "pool_capacity_log2 = " << arr(c.pool_capacity_log2) << "\n\n";
    os << "[render]\n"
       << "n_steps = " << c.n_steps << "\n\n";
    os << "[train]\n"
       << "iterations = " << c.iterations << "\n"
       << "batch_max_samples = " << c.batch_max_samples << "\n"
       << "frames_per_batch = " << c.frames_per_batch << "\n"
       << "lr_start = " << c.lr_start << "\n"
       << "lr_end = " << c.lr_end << "\n"
       << "huber_delta = " << c.huber_delta << "\n"
       << "beta_mask = " << c.beta_mask << "\n"
       << "adam_beta1 = " << c.adam_beta1 << "\n"
       << "adam_beta2 = " << c.adam_beta2 << "\n"
       << "adam_eps = " << c.adam_eps << "\n"
       << "checkpoint_every = " << c.checkpoint_every << "\n"
       << "initial_rays = " << c.initial_rays << "\n\n";
    os << "[eval]\n"
       << "split = \"" << c.eval_split << "\"\n"
       << "frame_stride = " << c.eval_frame_stride << "\n";
    return os.str();
}

inline void save_run_config(const RunConfig& c, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write config: " + path.string());
    os << run_config_to_toml(c);
}

}  // namespace trf4d
