// Command-line pipeline: simulate a drifting SLAM scan, reconstruct it under
// a pose-update strategy, evaluate checkpoints against time-dependent ground
// truth, and summarize pose stream statistics.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>
#include <json.hpp>

#include "recon/errors.hpp"
#include "recon/featvol.hpp"
#include "recon/pipeline.hpp"
#include "recon/pose_filter.hpp"
#include "recon/simulator.hpp"
#include "recon/tsdf.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace recon;

namespace {

struct CommonOpts {
    ExperimentConfig config;
    int threads = 0;
};

void add_config_options(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--voxel-size", o.config.voxel_size, "Voxel size in meters");
    cmd->add_option("--truncation-voxels", o.config.truncation_voxels,
                    "TSDF truncation in voxels");
    cmd->add_option("--bundle-size", o.config.bundle_size, "Keyframes per bundle (K)");
    cmd->add_option("--update-distance", o.config.update_distance,
                    "Summed drift in meters that triggers a bundle refresh (d)");
    cmd->add_option("--keyframe-translation", o.config.keyframe_translation,
                    "Keyframe translation threshold in meters");
    cmd->add_option("--keyframe-rotation", o.config.keyframe_rotation_deg,
                    "Keyframe rotation threshold in degrees");
    cmd->add_option("--inlier-threshold", o.config.inlier_threshold,
                    "Metric inlier threshold in meters");
    cmd->add_option("--seed", o.config.seed, "Seed for all randomized steps");
    const auto vec3_option = [](Vec3& target) {
        return [&target](const std::vector<std::string>& vals) {
            try {
                target = {std::stod(vals[0]), std::stod(vals[1]), std::stod(vals[2])};
            } catch (const std::exception&) {
                return false;  // CLI11 reports a parse error
            }
            return true;
        };
    };
    cmd->add_option("--grid-min", vec3_option(o.config.grid_min),
                    "Reconstruction volume lower corner (meters)")
        ->expected(3);
    cmd->add_option("--grid-max", vec3_option(o.config.grid_max),
                    "Reconstruction volume upper corner (meters)")
        ->expected(3);
    cmd->add_option("--eval-samples", o.config.eval_samples, "Surface samples per mesh");
    cmd->add_option("--threads", o.threads, "Worker thread cap (0 = hardware default)");
}

void apply_threads(int threads) {
#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#else
    (void)threads;
#endif
}

void write_run_metadata(const std::string& path, const std::string& command,
                        const ExperimentConfig& cfg,
                        const std::map<std::string, std::string>& inputs,
                        const std::map<std::string, std::string>& extra = {}) {
    json j;
    j["version"] = kVersion;
    j["command"] = command;
    j["config"] = json::parse(config_to_json(cfg));
    j["seed"] = cfg.seed;
    json in = json::object();
    for (const auto& [p, digest] : inputs) in[p] = digest;
    j["inputs"] = in;
    for (const auto& [k, v] : extra) j[k] = v;
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

std::string checkpoint_name(int ordinal, int64_t time) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "checkpoint_%04d_t%lld.ply", ordinal, (long long)time);
    return buf;
}

// ---------------------------------------------------------------- simulate

struct SimulateOpts {
    CommonOpts common;
    std::string scene_path;
    std::string trajectory_path;
    std::string out_dir;
    int frames = 300;
    double sigma_t = 0.002;
    double sigma_r = 0.0;
    std::vector<std::string> closures;
    bool no_loop_closure = false;
    Intrinsics camera{277.0, 277.0, 160.0, 120.0, 320, 240};
    double orbit_radius = 2.4;
    double orbit_height = 1.5;
};

int run_simulate(const SimulateOpts& o) {
    apply_threads(o.common.threads);
    fs::create_directories(o.out_dir);
    validate(o.camera);

    Scene scene;
    std::map<std::string, std::string> inputs;
    if (!o.scene_path.empty()) {
        scene = read_scene(o.scene_path);
        inputs[o.scene_path] = file_digest(o.scene_path);
    } else {
        scene = default_room_scene();
    }
    write_scene(o.out_dir + "/scene.json", scene);

    std::vector<Pose> trajectory;
    if (!o.trajectory_path.empty()) {
        trajectory = read_trajectory(o.trajectory_path);
        inputs[o.trajectory_path] = file_digest(o.trajectory_path);
    } else {
        trajectory = orbit_trajectory(o.frames, {0.0, 0.0, 0.9}, o.orbit_radius, o.orbit_height);
    }

    DriftConfig drift;
    drift.seed = o.common.config.seed;
    drift.sigma_translation = o.sigma_t;
    drift.sigma_rotation_deg = o.sigma_r;
    if (!o.no_loop_closure) {
        if (o.closures.empty()) {
            // Default closure lands at the 90% mark: the remaining bundles
            // integrate after the correction, so checkpoints can observe how
            // each strategy responded.
            drift.loop_closures.push_back({int64_t(trajectory.size()) * 9 / 10, 1.0});
        } else {
            for (const std::string& s : o.closures) {
                const size_t colon = s.find(':');
                if (colon == std::string::npos)
                    throw UsageError("--loop-closure expects TICK:FRACTION, got " + s);
                drift.loop_closures.push_back(
                    {std::stoll(s.substr(0, colon)), std::stod(s.substr(colon + 1))});
            }
        }
    }

    const SimulationResult sim = simulate_stream(trajectory, drift);
    write_trajectory(o.out_dir + "/trajectory.jsonl", sim.true_poses);
    write_pose_stream(o.out_dir + "/stream.jsonl", sim.stream);
    write_camera(o.out_dir + "/camera.json", o.camera);

    for (size_t t = 0; t < sim.true_poses.size(); ++t) {
        const DepthImage depth = render_depth(scene, sim.true_poses[t], o.camera);
        write_depth(o.out_dir + "/frame_" + std::to_string(t) + ".dpt", depth);
    }

    write_run_metadata(o.out_dir + "/run.json", "simulate", o.common.config, inputs,
                       {{"frames", std::to_string(sim.true_poses.size())}});
    std::printf("simulated %zu frames, %zu stream events -> %s\n", sim.true_poses.size(),
                sim.stream.events.size(), o.out_dir.c_str());
    return 0;
}

// -------------------------------------------------------------- reconstruct

struct ReconstructOpts {
    CommonOpts common;
    std::string stream_path;
    std::string depth_dir;
    std::string out_dir;
    std::string camera_path;
    std::string scene_path;
    std::string strategy = "deintegrate";
    std::string representation = "tsdf";
    bool recompute_depth = false;
};

int run_reconstruct(const ReconstructOpts& o) {
    apply_threads(o.common.threads);
    fs::create_directories(o.out_dir);

    ExperimentConfig cfg = o.common.config;
    cfg.recompute_depth = o.recompute_depth;
    const Strategy strategy = parse_strategy(o.strategy);
    const Representation repr = parse_representation(o.representation);
    const std::string camera_path =
        o.camera_path.empty() ? o.depth_dir + "/camera.json" : o.camera_path;
    const Intrinsics camera = read_camera(camera_path);

    Scene scene;
    const Scene* scene_ptr = nullptr;
    if (cfg.recompute_depth) {
        if (o.scene_path.empty())
            throw UsageError("--recompute-depth requires --scene");
        scene = read_scene(o.scene_path);
        scene_ptr = &scene;
    }

    const PoseStream stream = read_pose_stream(o.stream_path);
    DepthStore store(o.depth_dir);
    auto backend = make_backend(repr, cfg.grid(), cfg.truncation());

    std::ofstream actions_out(o.out_dir + "/actions.jsonl");
    if (!actions_out) throw DataError("cannot open for writing: " + o.out_dir + "/actions.jsonl");
    int ordinal = 0;

    ReplayHooks hooks;
    hooks.on_action = [&](const ReconAction& action) {
        json frames = json::array();
        for (int64_t f : action.bundle.member_frames) frames.push_back(f);
        json poses = json::object();
        for (const auto& [frame, pose] : action.bundle.poses) {
            json m = json::array();
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 4; ++c)
                    m.push_back(c < 3 ? pose.rotation.at(r, c)
                                      : (r == 0 ? pose.translation.x
                                                : r == 1 ? pose.translation.y
                                                         : pose.translation.z));
            for (int c = 0; c < 4; ++c) m.push_back(c == 3 ? 1.0 : 0.0);
            poses[std::to_string(frame)] = m;
        }
        actions_out << json{{"action", to_string(action.kind)},
                            {"t", action.time},
                            {"bundle", action.bundle.bundle_id},
                            {"frames", frames},
                            {"poses", poses}}
                           .dump()
                    << "\n";
    };
    hooks.on_checkpoint = [&](int64_t time, const std::map<int64_t, Pose>&) {
        write_mesh_ply(o.out_dir + "/" + checkpoint_name(ordinal, time), backend->mesh());
        ++ordinal;
    };

    replay_stream(stream, cfg, strategy, *backend, store, camera, hooks, scene_ptr);

    backend->write_snapshot(o.out_dir + (repr == Representation::Tsdf ? "/volume_final.tsd1"
                                                                      : "/volume_final.fvl1"));
    write_run_metadata(o.out_dir + "/run.json", "reconstruct", cfg,
                       {{o.stream_path, file_digest(o.stream_path)},
                        {camera_path, file_digest(camera_path)}},
                       {{"strategy", o.strategy},
                        {"representation", o.representation},
                        {"depth_dir", o.depth_dir}});
    std::printf("reconstructed %d checkpoints -> %s\n", ordinal, o.out_dir.c_str());
    return 0;
}

// ----------------------------------------------------------------- evaluate

struct EvaluateOpts {
    CommonOpts common;
    std::string pred_dir;
    std::string stream_path;
    std::string depth_dir;
    std::string camera_path;
    std::string out_path = "report.jsonl";
    std::string csv_path;
    std::string gt_mesh_dir;
};

struct CheckpointFile {
    int ordinal = 0;
    int64_t time = 0;
    std::string path;
};

std::vector<CheckpointFile> list_checkpoints(const std::string& dir) {
    std::vector<CheckpointFile> files;
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        int ordinal;
        long long time;
        if (std::sscanf(name.c_str(), "checkpoint_%d_t%lld.ply", &ordinal, &time) == 2)
            files.push_back({ordinal, time, entry.path().string()});
    }
    std::sort(files.begin(), files.end(),
              [](const CheckpointFile& a, const CheckpointFile& b) { return a.ordinal < b.ordinal; });
    return files;
}

int run_evaluate(const EvaluateOpts& o) {
    apply_threads(o.common.threads);
    const ExperimentConfig& cfg = o.common.config;
    const std::string camera_path =
        o.camera_path.empty() ? o.depth_dir + "/camera.json" : o.camera_path;
    const Intrinsics camera = read_camera(camera_path);
    const PoseStream stream = read_pose_stream(o.stream_path);
    DepthStore store(o.depth_dir);

    const std::vector<CheckpointFile> files = list_checkpoints(o.pred_dir);
    if (files.empty()) throw DataError("no checkpoint meshes in " + o.pred_dir);

    // The stream determines the expected checkpoint set.
    std::vector<int64_t> expected;
    for (const ReconAction& a : plan_actions(stream, cfg.filter()))
        if (a.kind == ActionKind::Integrate) expected.push_back(a.time);
    if (expected.size() != files.size()) {
        std::string msg = "checkpoint set mismatch: stream plans " +
                          std::to_string(expected.size()) + " checkpoints, found " +
                          std::to_string(files.size()) + " in " + o.pred_dir;
        throw DataError(msg);
    }
    for (size_t i = 0; i < files.size(); ++i)
        if (files[i].time != expected[i])
            throw DataError("checkpoint " + std::to_string(i) + " is at t=" +
                            std::to_string(files[i].time) + ", stream plans t=" +
                            std::to_string(expected[i]));

    std::string strategy = "unknown";
    if (fs::exists(o.pred_dir + "/run.json")) {
        std::ifstream in(o.pred_dir + "/run.json");
        try {
            json j = json::parse(in);
            strategy = j.value("strategy", strategy);
        } catch (...) {
        }
    }

    if (!o.gt_mesh_dir.empty()) fs::create_directories(o.gt_mesh_dir);

    // Replay poses once, fusing ground truth at each checkpoint tick.
    const GridSpec grid = cfg.grid();
    const EvalParams eval_params = cfg.eval_params();
    std::vector<CheckpointEval> results;
    std::map<int64_t, Pose> poses;
    size_t ev = 0;
    for (size_t i = 0; i < files.size(); ++i) {
        while (ev < stream.events.size() && stream.events[ev].time <= files[i].time) {
            poses[stream.events[ev].frame_id] = stream.events[ev].pose;
            ++ev;
        }
        std::vector<DepthView> views;
        views.reserve(poses.size());
        for (const auto& [frame, pose] : poses) views.push_back({&store.frame(frame), pose});
        const TriangleMesh gt = ground_truth_at(views, camera, grid, cfg.truncation());
        if (!o.gt_mesh_dir.empty())
            write_mesh_ply(o.gt_mesh_dir + "/" + checkpoint_name(int(i), files[i].time), gt);

        CheckpointEval ce;
        ce.time = files[i].time;
        if (!gt.empty()) {
            const TriangleMesh pred = read_mesh_ply(files[i].path);
            ce.report = evaluate(pred, gt, eval_params);
            ce.evaluated = true;
        }
        results.push_back(ce);
    }

    write_report_jsonl(o.out_path, strategy, results);
    const std::string csv = o.csv_path.empty() ? o.out_path + ".csv" : o.csv_path;
    write_report_csv(csv, results);
    write_run_metadata(o.out_path + ".run.json", "evaluate", cfg,
                       {{o.stream_path, file_digest(o.stream_path)}},
                       {{"pred_dir", o.pred_dir}, {"strategy", strategy}});

    if (!results.empty() && results.back().evaluated) {
        const MetricsReport& r = results.back().report;
        std::printf("final checkpoint: acc %.4f comp %.4f chamfer %.4f prec %.3f recall %.3f fscore %.3f\n",
                    r.accuracy, r.completeness, r.chamfer, r.precision, r.recall, r.fscore);
    }
    return 0;
}

// -------------------------------------------------------------------- stats

struct StatsOpts {
    std::string stream_path;
    std::string out_path = "hist.csv";
    double bin_width = 0.05;
};

int run_stats(const StatsOpts& o) {
    const PoseStream stream = read_pose_stream(o.stream_path);
    const StreamStats stats = stream_stats(stream, o.bin_width);

    std::ofstream out(o.out_path);
    if (!out) throw DataError("cannot open for writing: " + o.out_path);
    out << "bin_lower_m,count\n";
    char buf[64];
    for (size_t b = 0; b < stats.histogram.size(); ++b) {
        std::snprintf(buf, sizeof(buf), "%.2f,%lld\n", double(b) * stats.bin_width,
                      (long long)stats.histogram[b]);
        out << buf;
    }

    json summary{{"frames", stats.frame_count},
                 {"fraction_updated", stats.fraction_updated},
                 {"fraction_over_0.5m", stats.fraction_over_half_m},
                 {"fraction_over_2m", stats.fraction_over_two_m}};
    std::ofstream sum_out(o.out_path + ".summary.json");
    if (!sum_out) throw DataError("cannot open for writing: " + o.out_path + ".summary.json");
    sum_out << summary.dump(2) << "\n";

    std::printf("%lld frames, %.1f%% updated\n", (long long)stats.frame_count,
                100.0 * stats.fraction_updated);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Online TSDF reconstruction with pose-update de-integration"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string("recon ") + kVersion);

    SimulateOpts sim;
    CLI::App* c_sim = app.add_subcommand("simulate", "Render a drifting synthetic scan");
    add_config_options(c_sim, sim.common);
    c_sim->add_option("--scene", sim.scene_path, "Scene JSON (default: built-in room)");
    c_sim->add_option("--trajectory", sim.trajectory_path, "Trajectory JSONL (default: orbit)");
    c_sim->add_option("--out", sim.out_dir, "Output directory")->required();
    c_sim->add_option("--frames", sim.frames, "Trajectory length in frames");
    c_sim->add_option("--drift-sigma-t", sim.sigma_t, "Translation drift, meters/step");
    c_sim->add_option("--drift-sigma-r", sim.sigma_r, "Rotation drift, degrees/step");
    c_sim->add_option("--loop-closure", sim.closures,
                      "Loop closure as TICK:FRACTION (default: last tick, 1.0)");
    c_sim->add_flag("--no-loop-closure", sim.no_loop_closure, "Disable loop closures");
    c_sim->add_option("--width", sim.camera.width);
    c_sim->add_option("--height", sim.camera.height);
    c_sim->add_option("--fx", sim.camera.fx);
    c_sim->add_option("--fy", sim.camera.fy);
    c_sim->add_option("--cx", sim.camera.cx);
    c_sim->add_option("--cy", sim.camera.cy);
    c_sim->add_option("--orbit-radius", sim.orbit_radius);
    c_sim->add_option("--orbit-height", sim.orbit_height);

    ReconstructOpts rec;
    CLI::App* c_rec = app.add_subcommand("reconstruct", "Fuse a stream under a strategy");
    add_config_options(c_rec, rec.common);
    c_rec->add_option("--stream", rec.stream_path, "Pose stream JSONL")->required();
    c_rec->add_option("--depth-dir", rec.depth_dir, "Directory of frame_<t>.dpt files")
        ->required();
    c_rec->add_option("--out", rec.out_dir, "Output directory")->required();
    c_rec->add_option("--camera", rec.camera_path, "Camera JSON (default: depth dir)");
    c_rec->add_option("--strategy", rec.strategy,
                      "no-updates | reintegrate-only | deintegrate");
    c_rec->add_option("--representation", rec.representation, "tsdf | featvol");
    c_rec->add_flag("--recompute-depth", rec.recompute_depth,
                    "Re-render depth from updated poses before re-integration");
    c_rec->add_option("--scene", rec.scene_path, "Scene JSON, required with --recompute-depth");

    EvaluateOpts eval;
    CLI::App* c_eval = app.add_subcommand("evaluate", "Score checkpoints against ground truth");
    add_config_options(c_eval, eval.common);
    c_eval->add_option("--pred-dir", eval.pred_dir, "Reconstruction output directory")
        ->required();
    c_eval->add_option("--stream", eval.stream_path, "Pose stream JSONL")->required();
    c_eval->add_option("--depth-dir", eval.depth_dir, "Directory of frame_<t>.dpt files")
        ->required();
    c_eval->add_option("--camera", eval.camera_path, "Camera JSON (default: depth dir)");
    c_eval->add_option("--out", eval.out_path, "Report JSONL path");
    c_eval->add_option("--csv", eval.csv_path, "Aggregate CSV path (default: <out>.csv)");
    c_eval->add_option("--write-gt-meshes", eval.gt_mesh_dir,
                       "Also write ground-truth meshes to this directory");

    StatsOpts stats;
    CLI::App* c_stats = app.add_subcommand("stats", "Pose update statistics");
    c_stats->add_option("--stream", stats.stream_path, "Pose stream JSONL")->required();
    c_stats->add_option("--out", stats.out_path, "Histogram CSV path");
    c_stats->add_option("--bin-width", stats.bin_width, "Histogram bin width in meters");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (c_sim->parsed()) return run_simulate(sim);
        if (c_rec->parsed()) return run_reconstruct(rec);
        if (c_eval->parsed()) return run_evaluate(eval);
        if (c_stats->parsed()) return run_stats(stats);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const ProtocolViolation& e) {
        std::fprintf(stderr, "protocol violation: %s\n", e.what());
        return 3;
    } catch (const DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
