#include "recon/pipeline.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "recon/errors.hpp"
#include "recon/rng.hpp"

namespace recon {

using nlohmann::json;

Strategy parse_strategy(const std::string& name) {
    if (name == "no-updates") return Strategy::NoUpdates;
    if (name == "reintegrate-only") return Strategy::ReintegrateOnly;
    if (name == "deintegrate") return Strategy::Deintegrate;
    throw UsageError("unknown strategy: " + name +
                     " (expected no-updates | reintegrate-only | deintegrate)");
}

Representation parse_representation(const std::string& name) {
    if (name == "tsdf") return Representation::Tsdf;
    if (name == "featvol") return Representation::FeatVol;
    throw UsageError("unknown representation: " + name + " (expected tsdf | featvol)");
}

const char* to_string(Strategy s) {
    switch (s) {
        case Strategy::NoUpdates: return "no-updates";
        case Strategy::ReintegrateOnly: return "reintegrate-only";
        case Strategy::Deintegrate: return "deintegrate";
    }
    return "?";
}

const char* to_string(Representation r) {
    return r == Representation::Tsdf ? "tsdf" : "featvol";
}

EvalParams ExperimentConfig::eval_params() const {
    EvalParams p;
    p.inlier_threshold = inlier_threshold;
    p.samples = eval_samples;
    p.clip = eval_clip;
    p.pred_seed = hash_combine(seed, 0xA11CE);
    p.gt_seed = hash_combine(seed, 0xB0B);
    return p;
}

std::string config_to_json(const ExperimentConfig& c) {
    json j{{"voxel_size", c.voxel_size},
           {"truncation_voxels", c.truncation_voxels},
           {"bundle_size", c.bundle_size},
           {"update_distance", c.update_distance},
           {"keyframe_translation", c.keyframe_translation},
           {"keyframe_rotation_deg", c.keyframe_rotation_deg},
           {"inlier_threshold", c.inlier_threshold},
           {"seed", c.seed},
           {"grid_min", {c.grid_min.x, c.grid_min.y, c.grid_min.z}},
           {"grid_max", {c.grid_max.x, c.grid_max.y, c.grid_max.z}},
           {"eval_samples", c.eval_samples},
           {"eval_clip", c.eval_clip},
           {"recompute_depth", c.recompute_depth}};
    return j.dump(2);
}

ExperimentConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw DataError(std::string("config: ") + e.what());
    }
    ExperimentConfig c;
    c.voxel_size = j.value("voxel_size", c.voxel_size);
    c.truncation_voxels = j.value("truncation_voxels", c.truncation_voxels);
    c.bundle_size = j.value("bundle_size", c.bundle_size);
    c.update_distance = j.value("update_distance", c.update_distance);
    c.keyframe_translation = j.value("keyframe_translation", c.keyframe_translation);
    c.keyframe_rotation_deg = j.value("keyframe_rotation_deg", c.keyframe_rotation_deg);
    c.inlier_threshold = j.value("inlier_threshold", c.inlier_threshold);
    c.seed = j.value("seed", c.seed);
    if (j.contains("grid_min"))
        c.grid_min = {j["grid_min"][0], j["grid_min"][1], j["grid_min"][2]};
    if (j.contains("grid_max"))
        c.grid_max = {j["grid_max"][0], j["grid_max"][1], j["grid_max"][2]};
    c.eval_samples = j.value("eval_samples", c.eval_samples);
    c.eval_clip = j.value("eval_clip", c.eval_clip);
    c.recompute_depth = j.value("recompute_depth", c.recompute_depth);
    return c;
}

void write_camera(const std::string& path, const Intrinsics& k) {
    json j{{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy},
           {"width", k.width}, {"height", k.height}};
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

Intrinsics read_camera(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw DataError(path + ": " + e.what());
    }
    Intrinsics k;
    try {
        k.fx = j.at("fx").get<double>();
        k.fy = j.at("fy").get<double>();
        k.cx = j.at("cx").get<double>();
        k.cy = j.at("cy").get<double>();
        k.width = j.at("width").get<int>();
        k.height = j.at("height").get<int>();
    } catch (const json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
    validate(k);
    return k;
}

std::string DepthStore::path_of(int64_t frame_id) const {
    return dir_ + "/frame_" + std::to_string(frame_id) + ".dpt";
}

const DepthImage& DepthStore::frame(int64_t frame_id) {
    const auto it = cache_.find(frame_id);
    if (it != cache_.end()) return it->second;
    const std::string path = path_of(frame_id);
    try {
        return cache_.emplace(frame_id, read_depth(path)).first->second;
    } catch (const DataError&) {
        throw DataError("missing depth for frame " + std::to_string(frame_id) + ": " + path);
    }
}

namespace {

class TsdfBackend final : public VolumeBackend {
public:
    TsdfBackend(const GridSpec& grid, double truncation) : vol_(grid, truncation) {}
    void integrate_frame(const DepthImage& depth, const Pose& pose, const Intrinsics& k,
                         int sign) override {
        vol_.integrate(depth, pose, k, sign);
    }
    TriangleMesh mesh() const override { return extract_mesh(vol_); }
    void write_snapshot(const std::string& path) const override {
        write_tsdf_snapshot(path, vol_);
    }
    size_t voxel_count() const override { return vol_.grid().count(); }
    bool observed(size_t idx) const override { return vol_.observed(idx); }
    double exposed(size_t idx) const override { return vol_.tsdf_at(idx); }

private:
    TsdfVolume vol_;
};

class FeatVolBackend final : public VolumeBackend {
public:
    FeatVolBackend(const GridSpec& grid, double truncation)
        : vol_(grid, 1), truncation_(truncation) {}
    void integrate_frame(const DepthImage& depth, const Pose& pose, const Intrinsics& k,
                         int sign) override {
        vol_.integrate_tsdf_samples(depth, pose, k, sign, truncation_);
    }
    TriangleMesh mesh() const override { return extract_mesh(vol_, 0); }
    void write_snapshot(const std::string& path) const override {
        write_featvol_snapshot(path, vol_);
    }
    size_t voxel_count() const override { return vol_.grid().count(); }
    bool observed(size_t idx) const override { return vol_.observed(idx); }
    double exposed(size_t idx) const override { return vol_.feature_at(idx, 0); }

private:
    FeatureVolume vol_;
    double truncation_;
};

bool strategy_applies(Strategy s, ActionKind kind) {
    switch (kind) {
        case ActionKind::Integrate: return true;
        case ActionKind::Deintegrate: return s == Strategy::Deintegrate;
        case ActionKind::Reintegrate: return s != Strategy::NoUpdates;
    }
    return false;
}

}  // namespace

std::unique_ptr<VolumeBackend> make_backend(Representation repr, const GridSpec& grid,
                                            double truncation) {
    if (repr == Representation::Tsdf) return std::make_unique<TsdfBackend>(grid, truncation);
    return std::make_unique<FeatVolBackend>(grid, truncation);
}

void replay_stream(const PoseStream& stream, const ExperimentConfig& cfg, Strategy strategy,
                   VolumeBackend& backend, DepthStore& store, const Intrinsics& k,
                   const ReplayHooks& hooks, const Scene* scene) {
    if (cfg.recompute_depth && !scene)
        throw UsageError("recompute-depth requires the scene that produced the stream");

    ActionPlanner planner(cfg.filter());
    // Depth actually fused per frame; diverges from the store only when
    // re-rendering on re-integration.
    std::unordered_map<int64_t, DepthImage> recomputed;

    const auto depth_of = [&](int64_t frame) -> const DepthImage& {
        const auto it = recomputed.find(frame);
        return it != recomputed.end() ? it->second : store.frame(frame);
    };

    const auto apply_tick = [&](std::vector<ReconAction>& actions) {
        if (actions.empty()) return;
        const int64_t tick = actions.front().time;
        int integrates = 0;
        for (const ReconAction& action : actions) {
            if (!strategy_applies(strategy, action.kind)) continue;
            if (action.kind == ActionKind::Reintegrate && cfg.recompute_depth) {
                for (int64_t frame : action.bundle.member_frames)
                    recomputed[frame] =
                        render_depth(*scene, action.bundle.poses.at(frame), k);
            }
            const int sign = action.kind == ActionKind::Deintegrate ? -1 : +1;
            for (int64_t frame : action.bundle.member_frames)
                backend.integrate_frame(depth_of(frame), action.bundle.poses.at(frame), k, sign);
            if (hooks.on_action) hooks.on_action(action);
            if (action.kind == ActionKind::Integrate) ++integrates;
        }
        if (hooks.on_checkpoint)
            for (int i = 0; i < integrates; ++i) hooks.on_checkpoint(tick, planner.current_poses());
        actions.clear();
    };

    std::vector<ReconAction> pending;
    for (size_t i = 0; i < stream.events.size(); ++i) {
        planner.process_event(stream.events[i], pending);
        const bool tick_ends =
            i + 1 == stream.events.size() || stream.events[i + 1].time != stream.events[i].time;
        if (tick_ends) {
            planner.end_tick(pending);
            apply_tick(pending);
        }
    }
    planner.finish(pending);
    apply_tick(pending);
}

ExperimentOutput run_experiment(const PoseStream& stream, DepthStore& store, Strategy strategy,
                                Representation repr, const ExperimentConfig& cfg,
                                const Intrinsics& k, GroundTruthCache* gt_cache,
                                const Scene* scene) {
    const GridSpec grid = cfg.grid();
    const double truncation = cfg.truncation();
    ExperimentOutput out;
    out.final_volume = make_backend(repr, grid, truncation);
    GroundTruthCache local_cache;
    GroundTruthCache& cache = gt_cache ? *gt_cache : local_cache;
    const EvalParams eval_params = cfg.eval_params();

    ReplayHooks hooks;
    hooks.on_checkpoint = [&](int64_t time, const std::map<int64_t, Pose>& poses) {
        auto gt_it = cache.find(time);
        if (gt_it == cache.end()) {
            std::vector<DepthView> views;
            views.reserve(poses.size());
            for (const auto& [frame, pose] : poses) views.push_back({&store.frame(frame), pose});
            gt_it = cache.emplace(time, std::make_shared<const TriangleMesh>(ground_truth_at(
                                            views, k, grid, truncation)))
                        .first;
        }
        CheckpointEval ce;
        ce.time = time;
        if (!gt_it->second->empty()) {
            ce.report = evaluate(out.final_volume->mesh(), *gt_it->second, eval_params);
            ce.evaluated = true;
        }
        out.checkpoints.push_back(std::move(ce));
    };

    replay_stream(stream, cfg, strategy, *out.final_volume, store, k, hooks, scene);
    return out;
}

void write_report_jsonl(const std::string& path, const std::string& strategy,
                        const std::vector<CheckpointEval>& checkpoints) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    for (const CheckpointEval& c : checkpoints) {
        if (!c.evaluated) {
            out << json{{"t", c.time}, {"strategy", strategy}, {"skipped", true}}.dump() << "\n";
            continue;
        }
        json j{{"t", c.time},
               {"strategy", strategy},
               {"accuracy", c.report.accuracy},
               {"completeness", c.report.completeness},
               {"chamfer", c.report.chamfer},
               {"precision", c.report.precision},
               {"recall", c.report.recall},
               {"fscore", c.report.fscore}};
        out << j.dump() << "\n";
    }
}

void write_report_csv(const std::string& path, const std::vector<CheckpointEval>& checkpoints) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << "t,accuracy,completeness,chamfer,precision,recall,fscore\n";
    char buf[256];
    for (const CheckpointEval& c : checkpoints) {
        if (!c.evaluated) continue;
        std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                      (long long)c.time, c.report.accuracy, c.report.completeness,
                      c.report.chamfer, c.report.precision, c.report.recall, c.report.fscore);
        out << buf;
    }
}

std::string file_digest(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw DataError("cannot open: " + path);
    uint64_t h = 0xCBF29CE484222325ull;
    unsigned char buf[1 << 16];
    size_t n;
    while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0)
        for (size_t i = 0; i < n; ++i) h = (h ^ buf[i]) * 0x100000001B3ull;
    std::fclose(f);
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", (unsigned long long)h);
    return hex;
}

}  // namespace recon
