#include "recon/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "recon/errors.hpp"
#include "recon/rng.hpp"

namespace recon {

using nlohmann::json;

namespace {

double sdf_sphere(const SpherePrim& s, const Vec3& p) { return (p - s.center).norm() - s.radius; }

double sdf_box(const BoxPrim& b, const Vec3& p) {
    const Vec3 d = p - b.center;
    const Vec3 q{std::abs(d.x) - b.half_extents.x, std::abs(d.y) - b.half_extents.y,
                 std::abs(d.z) - b.half_extents.z};
    const Vec3 outside{std::max(q.x, 0.0), std::max(q.y, 0.0), std::max(q.z, 0.0)};
    const double inside = std::min(std::max(q.x, std::max(q.y, q.z)), 0.0);
    return outside.norm() + inside;
}

double sdf_plane(const PlanePrim& pl, const Vec3& p) { return pl.normal.dot(p) - pl.offset; }

}  // namespace

double scene_sdf(const Scene& scene, const Vec3& p) {
    double d = std::numeric_limits<double>::infinity();
    for (const Primitive& prim : scene.primitives) {
        const double pd = std::visit(
            [&](const auto& s) {
                using T = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<T, SpherePrim>) return sdf_sphere(s, p);
                else if constexpr (std::is_same_v<T, BoxPrim>) return sdf_box(s, p);
                else return sdf_plane(s, p);
            },
            prim);
        d = std::min(d, pd);
    }
    return d;
}

namespace {

Vec3 vec3_from_json(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 3) throw DataError(where + ": expected [x, y, z]");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json vec3_to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

}  // namespace

Scene read_scene(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw DataError(path + ": " + e.what());
    }
    Scene scene;
    if (!j.contains("primitives") || !j["primitives"].is_array())
        throw DataError(path + ": missing \"primitives\" array");
    int i = 0;
    for (const json& pj : j["primitives"]) {
        const std::string where = path + ": primitive " + std::to_string(i++);
        const std::string type = pj.value("type", "");
        if (type == "sphere") {
            SpherePrim s{vec3_from_json(pj.at("center"), where), pj.at("radius").get<double>()};
            if (!(s.radius > 0)) throw DataError(where + ": radius must be positive");
            scene.primitives.push_back(s);
        } else if (type == "box") {
            BoxPrim b{vec3_from_json(pj.at("center"), where),
                      vec3_from_json(pj.at("half_extents"), where)};
            if (!(b.half_extents.x > 0 && b.half_extents.y > 0 && b.half_extents.z > 0))
                throw DataError(where + ": half_extents must be positive");
            scene.primitives.push_back(b);
        } else if (type == "plane") {
            PlanePrim pl{vec3_from_json(pj.at("normal"), where), pj.at("offset").get<double>()};
            if (pl.normal.norm() < 1e-12) throw DataError(where + ": zero normal");
            pl.normal = pl.normal.normalized();
            scene.primitives.push_back(pl);
        } else {
            throw DataError(where + ": unknown type \"" + type + "\"");
        }
    }
    if (scene.primitives.empty()) throw DataError(path + ": scene has no primitives");
    return scene;
}

void write_scene(const std::string& path, const Scene& scene) {
    json prims = json::array();
    for (const Primitive& prim : scene.primitives) {
        std::visit(
            [&](const auto& s) {
                using T = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<T, SpherePrim>)
                    prims.push_back({{"type", "sphere"}, {"center", vec3_to_json(s.center)},
                                     {"radius", s.radius}});
                else if constexpr (std::is_same_v<T, BoxPrim>)
                    prims.push_back({{"type", "box"}, {"center", vec3_to_json(s.center)},
                                     {"half_extents", vec3_to_json(s.half_extents)}});
                else
                    prims.push_back({{"type", "plane"}, {"normal", vec3_to_json(s.normal)},
                                     {"offset", s.offset}});
            },
            prim);
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << json{{"primitives", prims}}.dump(2) << "\n";
}

Scene default_room_scene() {
    Scene scene;
    scene.primitives.push_back(BoxPrim{{0.0, 0.0, -0.05}, {3.0, 3.0, 0.05}});    // floor
    scene.primitives.push_back(BoxPrim{{0.9, 0.4, 0.35}, {0.5, 0.35, 0.35}});    // table
    scene.primitives.push_back(BoxPrim{{-1.1, -0.7, 0.5}, {0.3, 0.3, 0.5}});     // cabinet
    scene.primitives.push_back(BoxPrim{{0.2, -1.0, 0.22}, {0.45, 0.25, 0.22}});  // bench
    scene.primitives.push_back(BoxPrim{{-0.6, 1.05, 0.45}, {0.35, 0.3, 0.45}});  // shelf
    return scene;
}

namespace {

constexpr double kTraceEps = 1e-4;
constexpr int kTraceMaxSteps = 256;

bool pose_equal(const Pose& a, const Pose& b) {
    for (int i = 0; i < 9; ++i)
        if (a.rotation.m[i] != b.rotation.m[i]) return false;
    return a.translation.x == b.translation.x && a.translation.y == b.translation.y &&
           a.translation.z == b.translation.z;
}

float trace_pixel(const Scene& scene, const Pose& camera_pose, const Intrinsics& k,
                  double max_range, int u, int v) {
    const Vec3 dir_cam{(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0};
    const double dir_norm = dir_cam.norm();
    const Vec3 dir_world = (camera_pose.rotation * dir_cam) * (1.0 / dir_norm);
    const Vec3 origin = camera_pose.translation;
    double t = 0.0;
    for (int step = 0; step < kTraceMaxSteps && t <= max_range; ++step) {
        const double d = scene_sdf(scene, origin + dir_world * t);
        if (d < kTraceEps) {
            const double z = t / dir_norm;  // ray parameter to z-depth
            return z > 0.0 ? float(z) : 0.0f;
        }
        t += d;
    }
    return 0.0f;
}

DepthImage render_impl(const Scene& scene, const Pose& camera_pose, const Intrinsics& k,
                       double max_range, bool parallel) {
    validate(k);
    DepthImage img(k.width, k.height);
    if (scene.primitives.empty()) return img;
    if (parallel) {
#pragma omp parallel for schedule(dynamic, 8)
        for (int v = 0; v < k.height; ++v)
            for (int u = 0; u < k.width; ++u)
                img.at(u, v) = trace_pixel(scene, camera_pose, k, max_range, u, v);
    } else {
        for (int v = 0; v < k.height; ++v)
            for (int u = 0; u < k.width; ++u)
                img.at(u, v) = trace_pixel(scene, camera_pose, k, max_range, u, v);
    }
    return img;
}

}  // namespace

DepthImage render_depth(const Scene& scene, const Pose& camera_pose, const Intrinsics& k,
                        double max_range) {
    return render_impl(scene, camera_pose, k, max_range, true);
}

DepthImage render_depth_reference(const Scene& scene, const Pose& camera_pose,
                                  const Intrinsics& k, double max_range) {
    return render_impl(scene, camera_pose, k, max_range, false);
}

Pose look_at(const Vec3& eye, const Vec3& target) {
    const Vec3 forward = (target - eye).normalized();
    const Vec3 up{0, 0, 1};
    Vec3 right = forward.cross(up);
    if (right.norm() < 1e-9) right = Vec3{1, 0, 0};  // gaze along up: pick any right
    right = right.normalized();
    const Vec3 down = forward.cross(right);
    Pose p;
    for (int r = 0; r < 3; ++r) {
        p.rotation.at(r, 0) = r == 0 ? right.x : r == 1 ? right.y : right.z;
        p.rotation.at(r, 1) = r == 0 ? down.x : r == 1 ? down.y : down.z;
        p.rotation.at(r, 2) = r == 0 ? forward.x : r == 1 ? forward.y : forward.z;
    }
    p.translation = eye;
    return p;
}

std::vector<Pose> orbit_trajectory(int frames, const Vec3& target, double radius, double height) {
    if (frames <= 0) throw DataError("orbit_trajectory: frames must be positive");
    std::vector<Pose> poses;
    poses.reserve(size_t(frames));
    for (int t = 0; t < frames; ++t) {
        const double a = 2.0 * std::numbers::pi * double(t) / double(frames);
        const Vec3 eye{target.x + radius * std::cos(a), target.y + radius * std::sin(a), height};
        poses.push_back(look_at(eye, target));
    }
    return poses;
}

SimulationResult simulate_stream(const std::vector<Pose>& trajectory, const DriftConfig& cfg) {
    if (trajectory.empty()) throw DataError("simulate_stream: empty trajectory");
    if (cfg.sigma_translation < 0 || cfg.sigma_rotation_deg < 0)
        throw DataError("simulate_stream: sigmas must be non-negative");
    for (const LoopClosure& lc : cfg.loop_closures)
        if (lc.correction_fraction < 0 || lc.correction_fraction > 1)
            throw DataError("simulate_stream: correction fraction must be in [0, 1]");

    SimulationResult result;
    result.true_poses = trajectory;
    Rng rng(cfg.seed);
    Pose drift = Pose::identity();
    std::vector<Pose> estimates;  // current estimate per emitted frame
    const double deg2rad = std::numbers::pi / 180.0;

    for (int64_t t = 0; t < int64_t(trajectory.size()); ++t) {
        // Advance the drift random walk (a world-frame perturbation).
        if (cfg.sigma_translation > 0 || cfg.sigma_rotation_deg > 0) {
            Pose step;
            step.translation = rng.next_gaussian_vec3(cfg.sigma_translation);
            const Vec3 axis = rng.next_unit_vector();
            const double angle = rng.next_gaussian() * cfg.sigma_rotation_deg * deg2rad;
            step.rotation = rotation_axis_angle(axis, angle);
            drift = compose(step, drift);
        }
        const Pose estimate = compose(drift, trajectory[size_t(t)]);
        estimates.push_back(estimate);
        result.stream.events.push_back({t, t, estimate, true, 0});

        for (const LoopClosure& lc : cfg.loop_closures) {
            if (lc.trigger_time != t) continue;
            for (int64_t f = 0; f <= t; ++f) {
                // An estimate already at ground truth has nothing to correct;
                // emitting a no-op update would fabricate SLAM activity.
                if (pose_equal(estimates[size_t(f)], trajectory[size_t(f)])) continue;
                const Pose corrected =
                    interpolate(estimates[size_t(f)], trajectory[size_t(f)],
                                lc.correction_fraction);
                estimates[size_t(f)] = corrected;
                result.stream.events.push_back({t, f, corrected, false, 0});
            }
            // Shrink the accumulated drift so post-closure frames continue
            // from the corrected state.
            drift = interpolate(drift, Pose::identity(), lc.correction_fraction);
        }
    }

    // Synthetic streams get line numbers for error reporting parity.
    for (size_t i = 0; i < result.stream.events.size(); ++i)
        result.stream.events[i].source_line = int64_t(i) + 1;
    return result;
}

void write_trajectory(const std::string& path, const std::vector<Pose>& poses) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    for (size_t t = 0; t < poses.size(); ++t) {
        const Pose& p = poses[t];
        json m = json::array();
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 4; ++c)
                m.push_back(c < 3 ? p.rotation.at(r, c)
                                  : (r == 0 ? p.translation.x
                                            : r == 1 ? p.translation.y : p.translation.z));
        for (int c = 0; c < 4; ++c) m.push_back(c == 3 ? 1.0 : 0.0);
        out << json{{"t", t}, {"pose", m}}.dump() << "\n";
    }
}

std::vector<Pose> read_trajectory(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open: " + path);
    std::vector<Pose> poses;
    std::string line;
    int64_t line_no = 0;
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
        const json& m = j.at("pose");
        if (!m.is_array() || m.size() != 16)
            throw DataError(where + ": pose must be an array of 16 numbers");
        Pose p;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) p.rotation.at(r, c) = m[r * 4 + c].get<double>();
            (r == 0 ? p.translation.x : r == 1 ? p.translation.y : p.translation.z) =
                m[r * 4 + 3].get<double>();
        }
        if (!is_rigid(p)) throw DataError(where + ": rotation is not orthonormal");
        poses.push_back(p);
    }
    return poses;
}

}  // namespace recon
