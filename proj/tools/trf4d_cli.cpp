// trf4d command line: synthesize data, partition, train, render, evaluate,
// and run the backend / segmentation ablation sweeps.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "trf4d/trf4d.hpp"
#include "trf4d/ablation.hpp"

namespace {

using namespace trf4d;

struct CommonArgs {
    std::string config_path;
    std::uint64_t seed = 42;
    int threads = 1;
    bool deterministic = true;
};

RunConfig resolve_config(const CommonArgs& args) {
    RunConfig cfg;
    if (!args.config_path.empty()) cfg = load_run_config(args.config_path);
    cfg.seed = args.seed;
    cfg.threads = args.threads;
    cfg.deterministic = args.deterministic;
    return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "TOML config; flags override its values");
    cmd->add_option("--seed", args.seed, "master random seed")->default_val(42);
    cmd->add_option("--threads", args.threads, "worker threads")->default_val(1);
    cmd->add_flag("--deterministic,!--no-deterministic", args.deterministic,
                  "fixed-order gradient accumulation (default on)");
}

void echo_config(const RunConfig& cfg, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    save_run_config(cfg, out_dir / "resolved.toml");
}

struct Prepared {
    SegmentPlan plan;
    std::vector<OccupancyGrid> occ;
};

Prepared prepare(const Dataset& data, const RunConfig& cfg, ThreadPool& pool,
                 const SegmentPlan* fixed_plan = nullptr) {
    Prepared p;
    p.occ = carve_dataset_occupancy(data, cfg.occupancy_resolution, cfg.dilation_px, &pool);
    p.plan = fixed_plan ? *fixed_plan : partition_sequence(p.occ, cfg.threshold, cfg.pool());
    return p;
}

TrainState<float> run_training(const Dataset& data, const RunConfig& cfg, const Prepared& prep,
                               ThreadPool& pool, const std::filesystem::path& out_dir,
                               bool quiet = false) {
    TrainState<float> state(cfg.field_options(), prep.plan, cfg.seed, cfg.table_from_plan);
    TrainConfig tc = cfg.train_config();
    tc.out_dir = out_dir;
    Trainer<float> trainer(state, data, prep.occ, tc, pool);
    std::ofstream log;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        log.open(out_dir / "loss_log.csv");
    }
    if (!quiet)
        std::cout << "training " << trainer.total_iterations() << " iterations over "
                  << data.num_frames() << " frames, " << prep.plan.segments.size()
                  << " segment(s), " << state.total_param_count() << " parameters\n";
    trainer.run(log.is_open() ? &log : nullptr);
    return state;
}

// ---------------------------------------------------------------------------

int cmd_synth(const CommonArgs& common, RunConfig cfg, const std::string& out,
              const std::string& scene, int frames, int cameras, int size) {
    if (!scene.empty()) cfg.scene_kind = scene;
    if (frames > 0) cfg.frames = frames;
    if (cameras > 0) cfg.cameras = cameras;
    if (size > 0) cfg.image_size = size;
    ThreadPool pool(common.threads);
    DatasetManifest man = generate_dataset(cfg.scene_spec(), out, &pool);
    echo_config(cfg, out);
    std::cout << "wrote " << man.cameras.size() << " cameras x " << man.frames << " frames to "
              << out << "\n";
    return 0;
}

int cmd_partition(const CommonArgs& common, RunConfig cfg, const std::string& masks_dir,
                  double threshold, int resolution, const std::string& out,
                  const std::string& grids_out) {
    if (threshold > 0) cfg.threshold = threshold;
    if (resolution > 0) cfg.occupancy_resolution = resolution;
    Dataset data(std::filesystem::path(masks_dir) / "manifest.json");
    ThreadPool pool(common.threads);
    auto occ = carve_dataset_occupancy(data, cfg.occupancy_resolution, cfg.dilation_px, &pool);
    SegmentPlan plan = partition_sequence(occ, cfg.threshold, cfg.pool());
    std::string json = plan.to_json().dump(2);
    if (!out.empty()) {
        std::ofstream os(out);
        if (!os) throw IoError("cannot write plan: " + out);
        os << json << "\n";
    }
    if (!grids_out.empty()) {
        std::filesystem::create_directories(grids_out);
        for (std::size_t f = 0; f < occ.size(); ++f) {
            char name[64];
            std::snprintf(name, sizeof(name), "occ_frame%05zu.bin", f);
            save_occupancy(occ[f], std::filesystem::path(grids_out) / name);
        }
    }
    std::cout << json << "\n";
    return 0;
}

int cmd_train(const CommonArgs& common, RunConfig cfg, const std::string& data_dir,
              const std::string& out, int iters, const std::string& backend, int batch_samples,
              double threshold) {
    if (iters >= 0) cfg.iterations = iters;
    if (!backend.empty()) cfg.backend = backend;
    if (batch_samples > 0) cfg.batch_max_samples = batch_samples;
    if (threshold > 0) cfg.threshold = threshold;
    Dataset data(std::filesystem::path(data_dir) / "manifest.json");
    ThreadPool pool(common.threads);
    echo_config(cfg, out);
    Prepared prep = prepare(data, cfg, pool);
    {
        std::ofstream os(std::filesystem::path(out) / "plan.json");
        os << prep.plan.to_json().dump(2) << "\n";
    }
    TrainState<float> state = run_training(data, cfg, prep, pool, out);
    std::cout << "final checkpoint: "
              << (std::filesystem::path(out) /
                  [&] {
                      char n[64];
                      std::snprintf(n, sizeof(n), "ckpt_%08llu.trf4d",
                                    static_cast<unsigned long long>(state.iteration));
                      return std::string(n);
                  }())
                     .string()
              << "\n";
    return 0;
}

int cmd_render(const CommonArgs& common, RunConfig cfg, const std::string& ckpt,
               const std::string& data_dir, int camera, int frame, const std::string& out_prefix,
               int steps) {
    if (steps > 0) cfg.n_steps = steps;
    Checkpoint loaded = load_checkpoint(ckpt);
    Dataset data(std::filesystem::path(data_dir) / "manifest.json");
    ThreadPool pool(common.threads);
    require(camera >= 0 && camera < data.num_cameras(), "render: camera index out of range");
    auto occ = carve_dataset_occupancy(data, cfg.occupancy_resolution, cfg.dilation_px, &pool);
    require(frame >= 0 && frame < data.num_frames(), "render: frame out of range");
    auto [rgb, mask] = render_image(loaded.state, data.camera(camera), frame, data.box(),
                                    &occ[frame], cfg.n_steps, &pool);
    write_png(out_prefix + "_rgb.png", rgb);
    write_png(out_prefix + "_mask.png", mask);
    std::cout << "wrote " << out_prefix << "_rgb.png and _mask.png\n";
    return 0;
}

int cmd_eval(const CommonArgs& common, RunConfig cfg, const std::string& ckpt,
             const std::string& data_dir, const std::string& out, const std::string& split,
             int stride, int steps) {
    if (!split.empty()) cfg.eval_split = split;
    if (stride > 0) cfg.eval_frame_stride = stride;
    if (steps > 0) cfg.n_steps = steps;
    Checkpoint loaded = load_checkpoint(ckpt);
    Dataset data(std::filesystem::path(data_dir) / "manifest.json");
    ThreadPool pool(common.threads);
    auto occ = carve_dataset_occupancy(data, cfg.occupancy_resolution, cfg.dilation_px, &pool);
    EvalReport report = evaluate(loaded.state, data, occ, cfg.eval_protocol(), &pool);
    if (!out.empty()) {
        std::ofstream os(out);
        if (!os) throw IoError("cannot write report: " + out);
        os << report.to_csv();
    }
    std::cout << report.to_csv();
    std::cout << "mean psnr_fg " << report.mean_psnr() << ", mean ssim_crop " << report.mean_ssim()
              << ", skipped_empty " << report.skipped_empty << "\n";
    return 0;
}

int cmd_ablate(const CommonArgs& common, RunConfig cfg, const std::string& data_dir,
               const std::string& out, const std::string& suite, int iters,
               std::vector<int> fixed_sizes, std::vector<double> thresholds) {
    Dataset data(std::filesystem::path(data_dir) / "manifest.json");
    ThreadPool pool(common.threads);
    if (iters > 0) cfg.iterations = iters;
    std::filesystem::create_directories(out);
    echo_config(cfg, out);
    Prepared prep = prepare(data, cfg, pool);
    int typical_len = std::max(1, prep.plan.num_frames() /
                                      static_cast<int>(prep.plan.segments.size()));
    bool all = suite == "all";

    if (all || suite == "compression") {
        // Fig. 10 analogue: ratio = 1 - P_M / P_I-NGP against per-frame NGP
        std::ofstream os(std::filesystem::path(out) / "compression.csv");
        os << "backend,params_model,params_per_frame_ngp,compression_ratio\n";
        double base = static_cast<double>(per_frame_ngp_params(cfg, data.num_frames()));
        for (Backend b : {Backend::humanrf, Backend::hex4d, Backend::tngp}) {
            FieldOptions o = matched_backend_options(cfg, b, typical_len);
            double pm = static_cast<double>(model_params(cfg, prep.plan, b, o));
            os.precision(12);
            os << backend_name(b) << "," << static_cast<std::size_t>(pm) << ","
               << static_cast<std::size_t>(base) << "," << (1.0 - pm / base) << "\n";
        }
        std::cout << "wrote compression.csv\n";
    }

    if (all || suite == "backends") {
        // Table 3 analogue: the three feature-grid variants at matched budgets
        std::ofstream os(std::filesystem::path(out) / "backends.csv");
        os << "backend,params,psnr_fg,ssim_crop\n";
        for (Backend b : {Backend::humanrf, Backend::hex4d, Backend::tngp}) {
            RunConfig run = cfg;
            run.backend = backend_name(b);
            FieldOptions o = matched_backend_options(cfg, b, typical_len);
            run.hex2d_finest = o.hex2d_finest;
            run.tngp_table_log2 = o.tngp_table_log2;
            TrainState<float> state = run_training(data, run, prep, pool, "", /*quiet=*/true);
            EvalReport rep = evaluate(state, data, prep.occ, run.eval_protocol(), &pool);
            os.precision(10);
            os << backend_name(b) << "," << state.total_param_count() << "," << rep.mean_psnr()
               << "," << rep.mean_ssim() << "\n";
            std::cout << backend_name(b) << ": psnr " << rep.mean_psnr() << " ssim "
                      << rep.mean_ssim() << "\n";
        }
        std::cout << "wrote backends.csv\n";
    }

    if (all || suite == "segments") {
        // Fig. 5 analogue: fixed segment sizes vs. adaptive partitioning
        std::ofstream os(std::filesystem::path(out) / "segments.csv");
        os << "mode,segment_size,n_segments,mean_segment_length,params,psnr_fg\n";
        auto run_plan = [&](const std::string& mode, int size, const SegmentPlan& plan) {
            Prepared p{plan, prep.occ};
            TrainState<float> state = run_training(data, cfg, p, pool, "", /*quiet=*/true);
            EvalReport rep = evaluate(state, data, prep.occ, cfg.eval_protocol(), &pool);
            double mean_len = static_cast<double>(plan.num_frames()) / plan.segments.size();
            os.precision(10);
            os << mode << "," << size << "," << plan.segments.size() << "," << mean_len << ","
               << state.total_param_count() << "," << rep.mean_psnr() << "\n";
            std::cout << mode << " size=" << size << ": psnr " << rep.mean_psnr() << "\n";
        };
        auto pool_entries = cfg.pool();
        for (int size : fixed_sizes) {
            SegmentPlan plan;
            for (int s = 0; s < data.num_frames(); s += size) {
                int len = std::min(size, data.num_frames() - s);
                int cap = pool_entries.back().capacity_log2;
                for (const auto& e : pool_entries)
                    if (e.size >= len) {
                        cap = e.capacity_log2;
                        break;
                    }
                plan.segments.push_back({s, len, cap});
            }
            run_plan("fixed", size, plan);
        }
        run_plan("adaptive", 0, prep.plan);
        std::cout << "wrote segments.csv\n";
    }

    if (all || suite == "thresholds") {
        // Fig. 8 analogue: expansion-factor threshold vs. mean segment size
        std::ofstream os(std::filesystem::path(out) / "thresholds.csv");
        os << "threshold,n_segments,mean_segment_length\n";
        for (double th : thresholds) {
            SegmentPlan plan = partition_sequence(prep.occ, th, cfg.pool());
            os.precision(10);
            os << th << "," << plan.segments.size() << ","
               << static_cast<double>(plan.num_frames()) / plan.segments.size() << "\n";
        }
        std::cout << "wrote thresholds.csv\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"trf4d: 4D space-time radiance fields with adaptive temporal partitioning"};
    app.require_subcommand(1);

    CommonArgs common;

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic multi-view dataset");
    std::string synth_out, synth_scene;
    int synth_frames = 0, synth_cameras = 0, synth_size = 0;
    add_common(synth, common);
    synth->add_option("--out", synth_out, "output dataset directory")->required();
    synth->add_option("--scene", synth_scene, "pulsing_sphere | orbiting_blob | two_blobs_strong_motion");
    synth->add_option("--frames", synth_frames, "number of frames");
    synth->add_option("--cameras", synth_cameras, "number of cameras");
    synth->add_option("--size", synth_size, "image width/height in pixels");

    // partition
    auto* part = app.add_subcommand("partition", "carve occupancy and build the segment plan");
    std::string part_masks, part_out, part_grids;
    double part_threshold = 0;
    int part_resolution = 0;
    add_common(part, common);
    part->add_option("--masks", part_masks, "dataset directory (uses its masks)")->required();
    part->add_option("--threshold", part_threshold, "expansion factor threshold");
    part->add_option("--resolution", part_resolution, "carving grid resolution");
    part->add_option("--out", part_out, "write the plan JSON here");
    part->add_option("--save-grids", part_grids, "directory for per-frame occupancy bitsets");

    // train
    auto* train = app.add_subcommand("train", "train a model on a dataset");
    std::string train_data, train_out, train_backend;
    int train_iters = -1, train_batch = 0;
    double train_threshold = 0;
    add_common(train, common);
    train->add_option("--data", train_data, "dataset directory")->required();
    train->add_option("--out", train_out, "run output directory")->required();
    train->add_option("--iters", train_iters, "iterations (default frames x 300)");
    train->add_option("--backend", train_backend, "humanrf | hex4d | tngp");
    train->add_option("--batch-samples", train_batch, "per-iteration sample budget");
    train->add_option("--threshold", train_threshold, "partitioning threshold");

    // render
    auto* render = app.add_subcommand("render", "render one view from a checkpoint");
    std::string render_ckpt, render_data, render_out;
    int render_cam = 0, render_frame = 0, render_steps = 0;
    add_common(render, common);
    render->add_option("--ckpt", render_ckpt, "checkpoint file")->required();
    render->add_option("--data", render_data, "dataset directory")->required();
    render->add_option("--camera", render_cam, "camera index")->required();
    render->add_option("--frame", render_frame, "frame index")->required();
    render->add_option("--out", render_out, "output path prefix")->required();
    render->add_option("--steps", render_steps, "samples per ray");

    // eval
    auto* ev = app.add_subcommand("eval", "foreground PSNR / crop SSIM over a camera split");
    std::string eval_ckpt, eval_data, eval_out, eval_split;
    int eval_stride = 0, eval_steps = 0;
    add_common(ev, common);
    ev->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
    ev->add_option("--data", eval_data, "dataset directory")->required();
    ev->add_option("--out", eval_out, "metric report CSV");
    ev->add_option("--split", eval_split, "train | val | test");
    ev->add_option("--stride", eval_stride, "evaluate every Nth frame");
    ev->add_option("--steps", eval_steps, "samples per ray");

    // ablate
    auto* abl = app.add_subcommand("ablate", "backend / segment-size / threshold sweeps");
    std::string abl_data, abl_out, abl_suite = "all";
    int abl_iters = 0;
    std::vector<int> abl_sizes = {1, 4, 8};
    std::vector<double> abl_thresholds = {1.1, 1.25, 1.5, 2.0};
    add_common(abl, common);
    abl->add_option("--data", abl_data, "dataset directory")->required();
    abl->add_option("--out", abl_out, "output directory for the CSVs")->required();
    abl->add_option("--suite", abl_suite, "backends | segments | thresholds | compression | all");
    abl->add_option("--iters", abl_iters, "training iterations per sweep entry");
    abl->add_option("--sizes", abl_sizes, "fixed segment sizes for the segments suite");
    abl->add_option("--thresholds", abl_thresholds, "thresholds for the thresholds suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // usage text, exit 0
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        RunConfig cfg = resolve_config(common);
        if (synth->parsed())
            return cmd_synth(common, cfg, synth_out, synth_scene, synth_frames, synth_cameras,
                             synth_size);
        if (part->parsed())
            return cmd_partition(common, cfg, part_masks, part_threshold, part_resolution, part_out,
                                 part_grids);
        if (train->parsed())
            return cmd_train(common, cfg, train_data, train_out, train_iters, train_backend,
                             train_batch, train_threshold);
        if (render->parsed())
            return cmd_render(common, cfg, render_ckpt, render_data, render_cam, render_frame,
                              render_out, render_steps);
        if (ev->parsed())
            return cmd_eval(common, cfg, eval_ckpt, eval_data, eval_out, eval_split, eval_stride,
                            eval_steps);
        if (abl->parsed())
            return cmd_ablate(common, cfg, abl_data, abl_out, abl_suite, abl_iters, abl_sizes,
                              abl_thresholds);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
