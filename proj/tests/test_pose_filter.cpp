#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "recon/errors.hpp"
#include "recon/pose_filter.hpp"
#include "recon/rng.hpp"

using namespace recon;

namespace {

const std::string kData = RECON_TEST_DATA;

PoseEvent new_frame(int64_t t, int64_t frame, const Pose& pose) {
    return {t, frame, pose, true, t + 1};
}
PoseEvent update(int64_t t, int64_t frame, const Pose& pose) {
    return {t, frame, pose, false, t + 1};
}

std::vector<int64_t> integrate_ticks(const std::vector<ReconAction>& actions) {
    std::vector<int64_t> ticks;
    for (const ReconAction& a : actions)
        if (a.kind == ActionKind::Integrate) ticks.push_back(a.time);
    return ticks;
}

std::string serialize_plan(const std::vector<ReconAction>& actions) {
    std::ostringstream os;
    for (const ReconAction& a : actions) {
        os << to_string(a.kind) << " t=" << a.time << " b=" << a.bundle.bundle_id << " [";
        for (int64_t f : a.bundle.member_frames) {
            os << f << ":";
            const Pose& p = a.bundle.poses.at(f);
            os.precision(17);
            os << p.translation.x << "," << p.translation.y << "," << p.translation.z << " ";
        }
        os << "]\n";
    }
    return os.str();
}

}  // namespace

TEST_CASE("keyframe rule: first frame, thresholds inclusive") {
    const FilterConfig cfg;
    CHECK(keyframe_accept(Pose::identity(), std::nullopt, cfg));

    const Pose kf = Pose::identity();
    // 0.05m and 5 degrees: both below threshold
    Pose small{rotation_z(5.0 * std::numbers::pi / 180.0), {0.05, 0, 0}};
    CHECK_FALSE(keyframe_accept(small, kf, cfg));
    // 0.02m but exactly 15 degrees: rotation alone qualifies
    Pose rot15{rotation_z(15.000001 * std::numbers::pi / 180.0), {0.02, 0, 0}};
    CHECK(keyframe_accept(rot15, kf, cfg));
    // translation exactly at 0.10m qualifies
    CHECK(keyframe_accept(Pose::translate(0.1, 0, 0), kf, cfg));
    CHECK_FALSE(keyframe_accept(Pose::translate(0.0999999, 0, 0), kf, cfg));
}

TEST_CASE("golden stream: translation boundary keyframes") {
    const PoseStream s = read_pose_stream(kData + "/kf_translation_boundary.jsonl");
    const auto actions = plan_actions(s, FilterConfig{});
    REQUIRE(actions.size() == 1);  // flush bundle at end of stream
    CHECK(actions[0].kind == ActionKind::Integrate);
    CHECK(actions[0].bundle.member_frames == std::vector<int64_t>{0, 2, 4});
}

TEST_CASE("golden stream: rotation boundary keyframes") {
    const PoseStream s = read_pose_stream(kData + "/kf_rotation_boundary.jsonl");
    const auto actions = plan_actions(s, FilterConfig{});
    REQUIRE(actions.size() == 1);
    CHECK(actions[0].bundle.member_frames == std::vector<int64_t>{0, 2});
}

TEST_CASE("golden stream: bundles close at exactly K keyframes") {
    const PoseStream s = read_pose_stream(kData + "/bundle_k9.jsonl");
    const auto actions = plan_actions(s, FilterConfig{});
    REQUIRE(actions.size() == 2);
    CHECK(actions[0].kind == ActionKind::Integrate);
    CHECK(actions[0].time == 8);  // completes on the 9th keyframe
    CHECK(actions[0].bundle.member_frames.size() == 9);
    CHECK(actions[1].time == 9);  // short final bundle flushed at end of stream
    CHECK(actions[1].bundle.member_frames == std::vector<int64_t>{9});
}

TEST_CASE("golden stream: drift boundary at d") {
    const PoseStream below = read_pose_stream(kData + "/update_boundary_0449.jsonl");
    const auto a_below = plan_actions(below, FilterConfig{});
    REQUIRE(a_below.size() == 1);  // only the initial integrate
    CHECK(a_below[0].kind == ActionKind::Integrate);

    const PoseStream at = read_pose_stream(kData + "/update_boundary_0450.jsonl");
    const auto a_at = plan_actions(at, FilterConfig{});
    REQUIRE(a_at.size() == 3);
    CHECK(a_at[0].kind == ActionKind::Integrate);
    CHECK(a_at[1].kind == ActionKind::Deintegrate);
    CHECK(a_at[1].time == 9);
    CHECK(a_at[2].kind == ActionKind::Reintegrate);
    CHECK(a_at[2].bundle.bundle_id == a_at[1].bundle.bundle_id);
    // stale snapshot carries the pose of the original integration, bitwise
    CHECK(a_at[1].bundle.poses.at(0).translation.x == 0.0);
    CHECK(a_at[2].bundle.poses.at(0).translation.x == 0.45);
}

TEST_CASE("bundle drift sums per-frame displacement against the threshold") {
    Bundle b;
    std::map<int64_t, Pose> current;
    for (int64_t f = 0; f < 9; ++f) {
        b.member_frames.push_back(f);
        b.poses[f] = Pose::translate(0.15 * double(f), 0, 0);
        current[f] = b.poses[f];
    }
    const FilterConfig cfg;
    CHECK(bundle_drift(b, current) == 0.0);

    // nine frames displaced 0.04m each: 0.36 stays below d
    for (auto& [f, pose] : current)
        pose = Pose::translate(0.15 * double(f), 0.04, 0);
    CHECK(bundle_drift(b, current) == doctest::Approx(0.36).epsilon(1e-12));
    CHECK(bundle_drift(b, current) < cfg.update_distance);

    // 0.05m each reaches exactly d = 0.45 and must fire
    for (auto& [f, pose] : current)
        pose = Pose::translate(0.15 * double(f), 0.05, 0);
    CHECK(bundle_drift(b, current) >= cfg.update_distance);

    // a single frame moving 0.50m also crosses
    for (auto& [f, pose] : current) pose = b.poses.at(f);
    current[3] = Pose::translate(0.15 * 3, 0.5, 0);
    CHECK(bundle_drift(b, current) >= cfg.update_distance);
}

TEST_CASE("keyframe rule never accepts inside both gates") {
    Rng rng(47);
    const FilterConfig cfg;
    const Pose kf = Pose::identity();
    for (int i = 0; i < 500; ++i) {
        const double dist = rng.next_double() * 0.0999;
        const double angle_deg = rng.next_double() * 14.99;
        const Vec3 dir = rng.next_unit_vector();
        Pose candidate{rotation_axis_angle(rng.next_unit_vector(),
                                           angle_deg * std::numbers::pi / 180.0),
                       dir * dist};
        CHECK_FALSE(keyframe_accept(candidate, kf, cfg));
    }
}

TEST_CASE("zero-drift stream plans integrates only") {
    const PoseStream s = read_pose_stream(kData + "/zero_drift.jsonl");
    const auto actions = plan_actions(s, FilterConfig{});
    for (const ReconAction& a : actions) CHECK(a.kind == ActionKind::Integrate);
}

TEST_CASE("eight pending keyframes never assemble") {
    PoseStream s;
    for (int i = 0; i < 8; ++i) s.events.push_back(new_frame(i, i, Pose::translate(0.15 * i, 0, 0)));
    const auto actions = plan_actions(s, FilterConfig{});
    REQUIRE(actions.size() == 1);  // flush only, no full bundle
    CHECK(actions[0].bundle.member_frames.size() == 8);
}

TEST_CASE("second drift crossing measures from the refreshed snapshot") {
    PoseStream s;
    for (int i = 0; i < 9; ++i) s.events.push_back(new_frame(i, i, Pose::translate(0.15 * i, 0, 0)));
    // first crossing: frame 0 moves 0.5m
    s.events.push_back(update(9, 0, Pose::translate(0.5, 0, 0)));
    // then a further 0.3m: below d measured from the refreshed snapshot
    s.events.push_back(update(10, 0, Pose::translate(0.8, 0, 0)));
    // and another 0.2m on a different frame: 0.2 + 0.3 crosses again
    s.events.push_back(update(11, 1, Pose::translate(0.15 + 0.25, 0, 0)));

    const auto actions = plan_actions(s, FilterConfig{});
    std::vector<ActionKind> kinds;
    std::vector<int64_t> times;
    for (const auto& a : actions) {
        kinds.push_back(a.kind);
        times.push_back(a.time);
    }
    REQUIRE(kinds == std::vector<ActionKind>{ActionKind::Integrate, ActionKind::Deintegrate,
                                             ActionKind::Reintegrate, ActionKind::Deintegrate,
                                             ActionKind::Reintegrate});
    CHECK(times == std::vector<int64_t>{8, 9, 9, 11, 11});
    // the second stale snapshot is the first refresh, bitwise
    CHECK(actions[3].bundle.poses.at(0).translation.x == 0.5);
    CHECK(actions[3].bundle.poses.at(1).translation.x == 0.15);
}

TEST_CASE("action plans satisfy pairing and snapshot fidelity on random streams") {
    Rng rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        PoseStream s;
        int64_t t = 0;
        double x = 0.0;
        std::vector<int64_t> frames;
        for (int i = 0; i < 40; ++i) {
            x += 0.1 + rng.next_double() * 0.1;
            s.events.push_back(new_frame(t, i, Pose::translate(x, 0, 0)));
            frames.push_back(i);
            if (!frames.empty() && rng.next_double() < 0.3) {
                const int64_t victim = frames[size_t(rng.next_u64() % frames.size())];
                s.events.push_back(update(
                    t, victim,
                    Pose::translate(rng.next_double() * 2.0, rng.next_double() * 0.5, 0)));
            }
            ++t;
        }
        const auto actions = plan_actions(s, FilterConfig{});

        // Balance: every Deintegrate follows an unmatched (Re)Integrate of the
        // same bundle and is immediately followed by its Reintegrate.
        std::map<int64_t, int> live;
        for (size_t i = 0; i < actions.size(); ++i) {
            const ReconAction& a = actions[i];
            if (a.kind == ActionKind::Integrate) {
                CHECK(live[a.bundle.bundle_id] == 0);
                live[a.bundle.bundle_id] = 1;
            } else if (a.kind == ActionKind::Deintegrate) {
                CHECK(live[a.bundle.bundle_id] == 1);
                live[a.bundle.bundle_id] = 0;
                REQUIRE(i + 1 < actions.size());
                CHECK(actions[i + 1].kind == ActionKind::Reintegrate);
                CHECK(actions[i + 1].bundle.bundle_id == a.bundle.bundle_id);
                // de-integration carries the exact snapshot last integrated
                for (int64_t f : a.bundle.member_frames) {
                    bool found = false;
                    for (size_t j = i; j-- > 0;) {
                        const ReconAction& prev = actions[j];
                        if (prev.bundle.bundle_id != a.bundle.bundle_id) continue;
                        if (prev.kind == ActionKind::Deintegrate) continue;
                        CHECK(prev.bundle.poses.at(f).translation.x ==
                              a.bundle.poses.at(f).translation.x);
                        found = true;
                        break;
                    }
                    CHECK(found);
                }
            } else {
                CHECK(live[a.bundle.bundle_id] == 0);
                live[a.bundle.bundle_id] = 1;
            }
        }

        // Drift oracle: replay poses brute-force and recompute pair count.
        std::map<int64_t, Pose> poses;
        std::vector<Bundle> bundles;
        size_t ai = 0;
        std::vector<ReconAction> expect;
        size_t ev = 0;
        while (ev < s.events.size()) {
            const int64_t tick = s.events[ev].time;
            while (ev < s.events.size() && s.events[ev].time == tick) {
                poses[s.events[ev].frame_id] = s.events[ev].pose;
                // bundle assembly is validated through the planner's own output
                ++ev;
            }
            // bundles integrated this tick join the scan with their creation
            // snapshot, exactly as the planner tracks them
            while (ai < actions.size() && actions[ai].time == tick) {
                if (actions[ai].kind == ActionKind::Integrate)
                    bundles.push_back(actions[ai].bundle);
                ++ai;
            }
            for (Bundle& b : bundles) {
                double drift = 0;
                for (int64_t f : b.member_frames)
                    drift += translation_distance(b.poses.at(f), poses.at(f));
                if (drift >= 0.45) {
                    for (int64_t f : b.member_frames) b.poses[f] = poses.at(f);
                    expect.push_back({ActionKind::Deintegrate, tick, b});
                }
            }
        }
        size_t dein_count = 0;
        for (const auto& a : actions)
            if (a.kind == ActionKind::Deintegrate) ++dein_count;
        CHECK(dein_count == expect.size());
    }
}

TEST_CASE("plans are deterministic") {
    const PoseStream s = read_pose_stream(kData + "/update_boundary_0450.jsonl");
    const std::string a = serialize_plan(plan_actions(s, FilterConfig{}));
    const std::string b = serialize_plan(plan_actions(s, FilterConfig{}));
    CHECK(a == b);
    CHECK(!a.empty());
}

TEST_CASE("malformed streams are rejected with their position") {
    CHECK_THROWS_WITH_AS(
        (void)plan_actions(read_pose_stream(kData + "/malformed_update_first.jsonl"),
                           FilterConfig{}),
        doctest::Contains("line 1"), DataError);

    CHECK_THROWS_WITH_AS((void)read_pose_stream(kData + "/malformed_time_regression.jsonl"),
                         doctest::Contains(":2"), DataError);

    PoseStream dup;
    dup.events.push_back(new_frame(0, 7, Pose::identity()));
    dup.events.push_back(new_frame(1, 7, Pose::identity()));
    CHECK_THROWS_AS((void)plan_actions(dup, FilterConfig{}), DataError);
}

TEST_CASE("stream stats totals, clipping, and fractions") {
    const PoseStream none = read_pose_stream(kData + "/zero_drift.jsonl");
    const StreamStats s0 = stream_stats(none);
    CHECK(s0.fraction_updated == 0.0);
    for (const auto& [frame, total] : s0.total_update_distance) CHECK(total == 0.0);
    CHECK(s0.histogram[0] == s0.frame_count);

    const PoseStream fix = read_pose_stream(kData + "/stats_fixture.jsonl");
    const StreamStats st = stream_stats(fix);
    CHECK(st.frame_count == 3);
    CHECK(st.total_update_distance.at(0) == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(st.total_update_distance.at(1) == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(st.total_update_distance.at(2) == 0.0);
    // frame 0 lands in bin [0.70, 0.75)
    CHECK(st.histogram[14] == 1);
    // frame 1 exceeds the 2m clip and lands in the final bin
    CHECK(st.histogram.back() == 1);
    CHECK(st.fraction_updated == doctest::Approx(2.0 / 3.0));
    CHECK(st.fraction_over_half_m == doctest::Approx(2.0 / 3.0));
    CHECK(st.fraction_over_two_m == doctest::Approx(1.0 / 3.0));

    // consecutive estimate steps add up
    PoseStream steps;
    steps.events.push_back(new_frame(0, 0, Pose::identity()));
    steps.events.push_back(update(1, 0, Pose::translate(0.1, 0, 0)));
    steps.events.push_back(update(2, 0, Pose::translate(0.3, 0, 0)));
    CHECK(stream_stats(steps).total_update_distance.at(0) ==
          doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("stream file round trip preserves events") {
    const PoseStream s = read_pose_stream(kData + "/update_boundary_0450.jsonl");
    const std::string path = "/tmp/recon_test_stream.jsonl";
    write_pose_stream(path, s);
    const PoseStream back = read_pose_stream(path);
    REQUIRE(back.events.size() == s.events.size());
    for (size_t i = 0; i < s.events.size(); ++i) {
        CHECK(back.events[i].time == s.events[i].time);
        CHECK(back.events[i].frame_id == s.events[i].frame_id);
        CHECK(back.events[i].is_new_frame == s.events[i].is_new_frame);
        CHECK(back.events[i].pose.translation.x == s.events[i].pose.translation.x);
    }
}
