#include "recon/pose_filter.hpp"

#include <cstdio>
#include <fstream>
#include <memory>

#include <json.hpp>

#include "recon/errors.hpp"

namespace recon {

using nlohmann::json;

namespace {

json pose_to_json(const Pose& p) {
    json m = json::array();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c)
            m.push_back(c < 3 ? p.rotation.at(r, c)
                              : (r == 0 ? p.translation.x : r == 1 ? p.translation.y
                                                                   : p.translation.z));
    for (int c = 0; c < 4; ++c) m.push_back(c == 3 ? 1.0 : 0.0);
    return m;
}

Pose pose_from_json(const json& m, const std::string& where) {
    if (!m.is_array() || m.size() != 16)
        throw DataError(where + ": pose must be an array of 16 numbers");
    Pose p;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) p.rotation.at(r, c) = m[r * 4 + c].get<double>();
        const double t = m[r * 4 + 3].get<double>();
        (r == 0 ? p.translation.x : r == 1 ? p.translation.y : p.translation.z) = t;
    }
    if (!is_rigid(p))
        throw DataError(where + ": rotation is not orthonormal with determinant +1");
    return p;
}

}  // namespace

PoseStream read_pose_stream(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open: " + path);
    PoseStream stream;
    std::string line;
    int64_t line_no = 0;
    int64_t last_time = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(line_no);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError(where + ": " + e.what());
        }
        PoseEvent ev;
        try {
            ev.time = j.at("t").get<int64_t>();
            ev.frame_id = j.at("frame").get<int64_t>();
            ev.is_new_frame = j.at("new").get<bool>();
            ev.pose = pose_from_json(j.at("pose"), where);
        } catch (const json::exception& e) {
            throw DataError(where + ": " + e.what());
        }
        ev.source_line = line_no;
        if (!first && ev.time < last_time)
            throw DataError(where + ": time regression (events must be sorted by t)");
        last_time = ev.time;
        first = false;
        stream.events.push_back(std::move(ev));
    }
    return stream;
}

void write_pose_stream(const std::string& path, const PoseStream& stream) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    for (const PoseEvent& ev : stream.events) {
        json j{{"t", ev.time}, {"frame", ev.frame_id}, {"new", ev.is_new_frame},
               {"pose", pose_to_json(ev.pose)}};
        out << j.dump() << "\n";
    }
}

const char* to_string(ActionKind kind) {
    switch (kind) {
        case ActionKind::Integrate: return "integrate";
        case ActionKind::Deintegrate: return "deintegrate";
        case ActionKind::Reintegrate: return "reintegrate";
    }
    return "?";
}

bool keyframe_accept(const Pose& pose, const std::optional<Pose>& last_keyframe,
                     const FilterConfig& cfg) {
    if (!last_keyframe) return true;
    return translation_distance(pose, *last_keyframe) >= cfg.keyframe_translation ||
           rotation_angle_deg(pose, *last_keyframe) >= cfg.keyframe_rotation_deg;
}

double bundle_drift(const Bundle& bundle, const std::map<int64_t, Pose>& current_poses) {
    // Compensated summation: decimal boundary cases (nine 0.05m displacements
    // summing to the 0.45m threshold) must not round below the threshold.
    double sum = 0.0, carry = 0.0;
    for (int64_t frame : bundle.member_frames) {
        const auto it = current_poses.find(frame);
        if (it == current_poses.end()) continue;
        const double term = translation_distance(bundle.poses.at(frame), it->second) - carry;
        const double next = sum + term;
        carry = (next - sum) - term;
        sum = next;
    }
    return sum;
}

Bundle ActionPlanner::make_bundle(int64_t now) {
    Bundle b;
    b.bundle_id = next_bundle_id_++;
    b.created_at = now;
    b.member_frames = pending_keyframes_;
    for (int64_t frame : b.member_frames) b.poses[frame] = current_poses_.at(frame);
    pending_keyframes_.clear();
    return b;
}

void ActionPlanner::process_event(const PoseEvent& event, std::vector<ReconAction>& out) {
    const std::string where = "event at line " + std::to_string(event.source_line);
    if (finished_) throw DataError(where + ": planner already finished");
    if (saw_event_ && event.time < current_time_)
        throw DataError(where + ": time regression");
    if (tick_open_ && event.time != current_time_)
        throw DataError(where + ": end_tick was not called before a new tick");
    const bool seen = current_poses_.count(event.frame_id) > 0;
    if (event.is_new_frame && seen)
        throw DataError(where + ": duplicate new-frame for frame " +
                        std::to_string(event.frame_id));
    if (!event.is_new_frame && !seen)
        throw DataError(where + ": update for unknown frame " + std::to_string(event.frame_id));

    current_time_ = event.time;
    saw_event_ = true;
    tick_open_ = true;
    current_poses_[event.frame_id] = event.pose;

    if (event.is_new_frame && keyframe_accept(event.pose, last_keyframe_pose_, cfg_)) {
        pending_keyframes_.push_back(event.frame_id);
        last_keyframe_pose_ = event.pose;
        if (int(pending_keyframes_.size()) == cfg_.bundle_size) {
            integrated_.push_back(make_bundle(event.time));
            out.push_back({ActionKind::Integrate, event.time, integrated_.back()});
        }
    }
}

void ActionPlanner::end_tick(std::vector<ReconAction>& out) {
    if (!tick_open_) return;
    tick_open_ = false;
    for (Bundle& bundle : integrated_) {
        if (bundle_drift(bundle, current_poses_) < cfg_.update_distance) continue;
        ReconAction stale{ActionKind::Deintegrate, current_time_, bundle};
        Bundle fresh = bundle;
        for (int64_t frame : fresh.member_frames) fresh.poses[frame] = current_poses_.at(frame);
        bundle.poses = fresh.poses;  // future drift is measured against this snapshot
        out.push_back(std::move(stale));
        out.push_back({ActionKind::Reintegrate, current_time_, std::move(fresh)});
    }
}

void ActionPlanner::finish(std::vector<ReconAction>& out) {
    if (finished_) return;
    end_tick(out);
    finished_ = true;
    if (!pending_keyframes_.empty()) {
        integrated_.push_back(make_bundle(current_time_));
        out.push_back({ActionKind::Integrate, current_time_, integrated_.back()});
    }
}

std::vector<ReconAction> plan_actions(const PoseStream& stream, const FilterConfig& cfg) {
    ActionPlanner planner(cfg);
    std::vector<ReconAction> actions;
    for (size_t i = 0; i < stream.events.size(); ++i) {
        planner.process_event(stream.events[i], actions);
        const bool tick_ends =
            i + 1 == stream.events.size() || stream.events[i + 1].time != stream.events[i].time;
        if (tick_ends) planner.end_tick(actions);
    }
    planner.finish(actions);
    return actions;
}

StreamStats stream_stats(const PoseStream& stream, double bin_width, double clip) {
    if (!(bin_width > 0) || !(clip > 0)) throw DataError("stream_stats: bad bin configuration");
    StreamStats stats;
    stats.bin_width = bin_width;
    stats.clip = clip;

    std::map<int64_t, Pose> last_pose;
    std::map<int64_t, int64_t> update_count;
    for (const PoseEvent& ev : stream.events) {
        const auto it = last_pose.find(ev.frame_id);
        if (it == last_pose.end()) {
            if (!ev.is_new_frame)
                throw DataError("stream_stats: update for unknown frame at line " +
                                std::to_string(ev.source_line));
            last_pose[ev.frame_id] = ev.pose;
            stats.total_update_distance[ev.frame_id] = 0.0;
            update_count[ev.frame_id] = 0;
        } else {
            stats.total_update_distance[ev.frame_id] +=
                translation_distance(it->second, ev.pose);
            it->second = ev.pose;
            ++update_count[ev.frame_id];
        }
    }

    const int n_bins = int(std::llround(clip / bin_width)) + 1;  // last bin holds >= clip
    stats.histogram.assign(size_t(n_bins), 0);
    stats.frame_count = int64_t(stats.total_update_distance.size());
    int64_t updated = 0, over_half = 0, over_two = 0;
    for (const auto& [frame, total] : stats.total_update_distance) {
        const double clipped = std::min(total, clip);
        // Decimal totals like 0.3 + 0.4 land a few ulps below their bin edge;
        // nudge so an exact boundary total falls in the upper bin.
        int bin = int(std::floor(clipped / bin_width + 1e-9));
        bin = std::min(bin, n_bins - 1);
        ++stats.histogram[size_t(bin)];
        if (update_count[frame] > 0) ++updated;
        if (total >= 0.5) ++over_half;
        if (total >= 2.0) ++over_two;
    }
    if (stats.frame_count > 0) {
        stats.fraction_updated = double(updated) / double(stats.frame_count);
        stats.fraction_over_half_m = double(over_half) / double(stats.frame_count);
        stats.fraction_over_two_m = double(over_two) / double(stats.frame_count);
    }
    return stats;
}

}  // namespace recon
