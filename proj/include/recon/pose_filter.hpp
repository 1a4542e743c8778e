#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "recon/geometry.hpp"

namespace recon {

/// One record of the dynamic SLAM output: either a newly tracked frame or a
/// revised pose estimate for a past frame.
struct PoseEvent {
    int64_t time = 0;
    int64_t frame_id = 0;
    Pose pose;
    bool is_new_frame = true;
    int64_t source_line = 0;  // 1-based position in the stream, for error reports
};

struct PoseStream {
    std::vector<PoseEvent> events;
};

// Pose stream file: JSON Lines, one event per line:
//   {"t": int, "frame": int, "new": bool, "pose": [16 floats, row-major 4x4,
//    world-from-camera, meters]}
// Events sorted by t; ties broken by line order. Rotations are revalidated on
// load.
PoseStream read_pose_stream(const std::string& path);
void write_pose_stream(const std::string& path, const PoseStream& stream);

struct FilterConfig {
    int bundle_size = 9;                  // keyframes per bundle
    double update_distance = 0.45;        // meters of summed drift that triggers a refresh
    double keyframe_translation = 0.10;   // meters
    double keyframe_rotation_deg = 15.0;  // degrees
};

/// A group of keyframes processed as one unit, with the pose estimates that
/// were current when it was (re)integrated.
struct Bundle {
    int64_t bundle_id = 0;
    int64_t created_at = 0;
    std::vector<int64_t> member_frames;   // acquisition order
    std::map<int64_t, Pose> poses;        // snapshot, keyed by frame id
};

enum class ActionKind { Integrate, Deintegrate, Reintegrate };

const char* to_string(ActionKind kind);

/// One step of the reconstruction plan. Deintegrate carries the exact pose
/// snapshot of the bundle's most recent (re)integration and is always
/// immediately followed by the matching Reintegrate with fresh poses.
struct ReconAction {
    ActionKind kind = ActionKind::Integrate;
    int64_t time = 0;
    Bundle bundle;
};

/// Keyframe subsampling rule: accept when there is no previous keyframe or
/// the pose moved at least the configured translation or rotation.
bool keyframe_accept(const Pose& pose, const std::optional<Pose>& last_keyframe,
                     const FilterConfig& cfg);

/// Summed per-frame translation drift of a bundle against current estimates;
/// a value >= cfg.update_distance means the bundle needs a refresh.
double bundle_drift(const Bundle& bundle, const std::map<int64_t, Pose>& current_poses);

/// Incremental planner. Feed events in stream order, call end_tick() after
/// the last event of each time tick, and finish() at end of stream. Emitted
/// actions must be applied in order.
class ActionPlanner {
public:
    explicit ActionPlanner(const FilterConfig& cfg) : cfg_(cfg) {}

    void process_event(const PoseEvent& event, std::vector<ReconAction>& out);
    void end_tick(std::vector<ReconAction>& out);
    void finish(std::vector<ReconAction>& out);

    const std::map<int64_t, Pose>& current_poses() const { return current_poses_; }

private:
    Bundle make_bundle(int64_t now);

    FilterConfig cfg_;
    std::map<int64_t, Pose> current_poses_;
    std::optional<Pose> last_keyframe_pose_;
    std::vector<int64_t> pending_keyframes_;
    std::vector<Bundle> integrated_;  // creation order; poses track the latest snapshot
    int64_t next_bundle_id_ = 0;
    int64_t current_time_ = 0;
    bool saw_event_ = false;
    bool tick_open_ = false;
    bool finished_ = false;
};

/// Full deterministic plan for a well-formed stream. Malformed streams (time
/// regression, update before first sighting) raise DataError naming the
/// offending event.
std::vector<ReconAction> plan_actions(const PoseStream& stream, const FilterConfig& cfg);

struct StreamStats {
    std::map<int64_t, double> total_update_distance;  // per frame, meters
    std::vector<int64_t> histogram;                   // bins of bin_width, last bin clipped
    double bin_width = 0.05;
    double clip = 2.0;
    int64_t frame_count = 0;
    double fraction_updated = 0.0;       // frames with at least one update
    double fraction_over_half_m = 0.0;   // total displacement >= 0.5 m
    double fraction_over_two_m = 0.0;    // total displacement >= 2 m
};

/// Per-frame total update distance: sum of translation steps between
/// consecutive estimates of the same frame, clipped into the histogram.
StreamStats stream_stats(const PoseStream& stream, double bin_width = 0.05, double clip = 2.0);

}  // namespace recon
