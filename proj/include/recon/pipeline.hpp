#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "recon/featvol.hpp"
#include "recon/geometry.hpp"
#include "recon/metrics.hpp"
#include "recon/pose_filter.hpp"
#include "recon/simulator.hpp"
#include "recon/tsdf.hpp"

namespace recon {

/// How pose updates reach the volume. NoUpdates drops de-integration and
/// re-integration; ReintegrateOnly drops de-integration; Deintegrate applies
/// the full plan.
enum class Strategy { NoUpdates, ReintegrateOnly, Deintegrate };
enum class Representation { Tsdf, FeatVol };

Strategy parse_strategy(const std::string& name);
Representation parse_representation(const std::string& name);
const char* to_string(Strategy s);
const char* to_string(Representation r);

struct ExperimentConfig {
    double voxel_size = 0.04;
    int truncation_voxels = 3;
    int bundle_size = 9;
    double update_distance = 0.45;
    double keyframe_translation = 0.10;
    double keyframe_rotation_deg = 15.0;
    double inlier_threshold = 0.05;
    uint64_t seed = 7;
    Vec3 grid_min{-3.0, -3.0, -0.2};
    Vec3 grid_max{3.0, 3.0, 2.8};
    int eval_samples = 200000;
    double eval_clip = 1.0;
    bool recompute_depth = false;

    FilterConfig filter() const {
        return {bundle_size, update_distance, keyframe_translation, keyframe_rotation_deg};
    }
    GridSpec grid() const { return GridSpec::from_bounds(grid_min, grid_max, voxel_size); }
    double truncation() const { return truncation_voxels * voxel_size; }
    EvalParams eval_params() const;
};

std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const std::string& text);

// Camera sidecar: JSON {"fx","fy","cx","cy","width","height"}.
void write_camera(const std::string& path, const Intrinsics& k);
Intrinsics read_camera(const std::string& path);

/// Lazily loaded per-frame depth maps named frame_<id>.dpt.
class DepthStore {
public:
    explicit DepthStore(std::string dir) : dir_(std::move(dir)) {}
    /// Throws DataError naming the frame id when the file is missing.
    const DepthImage& frame(int64_t frame_id);
    std::string path_of(int64_t frame_id) const;

private:
    std::string dir_;
    std::unordered_map<int64_t, DepthImage> cache_;
};

/// Reconstruction state behind the strategy driver; both representations
/// expose the same per-frame integrate/de-integrate surface.
class VolumeBackend {
public:
    virtual ~VolumeBackend() = default;
    virtual void integrate_frame(const DepthImage& depth, const Pose& camera_pose,
                                 const Intrinsics& k, int sign) = 0;
    virtual TriangleMesh mesh() const = 0;
    virtual void write_snapshot(const std::string& path) const = 0;
    virtual size_t voxel_count() const = 0;
    virtual bool observed(size_t idx) const = 0;
    virtual double exposed(size_t idx) const = 0;
};

std::unique_ptr<VolumeBackend> make_backend(Representation repr, const GridSpec& grid,
                                            double truncation);

struct ReplayHooks {
    /// Every applied action, in order.
    std::function<void(const ReconAction&)> on_action;
    /// After all actions of a tick: once per Integrate in that tick, with the
    /// pose estimates current at that tick.
    std::function<void(int64_t time, const std::map<int64_t, Pose>& poses)> on_checkpoint;
};

/// Replays a pose stream through the filter, applies the strategy-filtered
/// action plan to the backend, and fires checkpoint hooks. When
/// recompute_depth is set, member depths are re-rendered from the fresh poses
/// (requires scene) before each re-integration.
void replay_stream(const PoseStream& stream, const ExperimentConfig& cfg, Strategy strategy,
                   VolumeBackend& backend, DepthStore& store, const Intrinsics& k,
                   const ReplayHooks& hooks, const Scene* scene = nullptr);

struct CheckpointEval {
    int64_t time = 0;
    bool evaluated = false;  // false when the ground truth mesh was empty
    MetricsReport report;
};

/// Ground-truth meshes shared across strategies of the same stream.
using GroundTruthCache = std::map<int64_t, std::shared_ptr<const TriangleMesh>>;

struct ExperimentOutput {
    std::vector<CheckpointEval> checkpoints;
    std::unique_ptr<VolumeBackend> final_volume;
};

/// Full experiment: plan, reconstruct under the strategy, checkpoint at every
/// bundle integration, and evaluate each checkpoint against ground truth
/// fused from scratch with the poses current at that tick.
ExperimentOutput run_experiment(const PoseStream& stream, DepthStore& store, Strategy strategy,
                                Representation repr, const ExperimentConfig& cfg,
                                const Intrinsics& k, GroundTruthCache* gt_cache = nullptr,
                                const Scene* scene = nullptr);

// Report output: one JSON object per checkpoint plus an aggregate CSV.
void write_report_jsonl(const std::string& path, const std::string& strategy,
                        const std::vector<CheckpointEval>& checkpoints);
void write_report_csv(const std::string& path, const std::vector<CheckpointEval>& checkpoints);

/// FNV-1a digest of a file, for run metadata.
std::string file_digest(const std::string& path);

inline constexpr const char* kVersion = "0.1.0";

}  // namespace recon
