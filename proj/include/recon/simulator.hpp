#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "recon/geometry.hpp"
#include "recon/pose_filter.hpp"

namespace recon {

struct SpherePrim {
    Vec3 center;
    double radius = 1.0;
};
struct BoxPrim {
    Vec3 center;
    Vec3 half_extents;
};
struct PlanePrim {
    Vec3 normal{0, 0, 1};  // stored normalized
    double offset = 0.0;   // plane is dot(normal, p) == offset, positive side out
};

using Primitive = std::variant<SpherePrim, BoxPrim, PlanePrim>;

/// Analytic scene as a union (min) of exact signed distance primitives.
struct Scene {
    std::vector<Primitive> primitives;
};

double scene_sdf(const Scene& scene, const Vec3& p);

// Scene file: JSON {"primitives": [{"type": "sphere"|"box"|"plane", ...}]}.
Scene read_scene(const std::string& path);
void write_scene(const std::string& path, const Scene& scene);

/// Five boxes in a 6x6x3 m bound: a floor slab plus four furniture blocks.
Scene default_room_scene();

/// Sphere-traced z-depth render; pixels with no hit within max_range are
/// invalid (0). Convergence 1e-4 m, 256 steps.
DepthImage render_depth(const Scene& scene, const Pose& camera_pose, const Intrinsics& k,
                        double max_range = 10.0);
DepthImage render_depth_reference(const Scene& scene, const Pose& camera_pose,
                                  const Intrinsics& k, double max_range = 10.0);

/// Camera pose looking from eye toward target with +z as world up.
/// Camera frame: x right, y down, z forward.
Pose look_at(const Vec3& eye, const Vec3& target);

/// Inward-gazing circular orbit around `target` at the given radius/height.
std::vector<Pose> orbit_trajectory(int frames, const Vec3& target, double radius, double height);

struct LoopClosure {
    int64_t trigger_time = 0;
    double correction_fraction = 1.0;  // 0 leaves estimates, 1 snaps to ground truth
};

struct DriftConfig {
    uint64_t seed = 7;
    double sigma_translation = 0.002;  // meters per step, random walk
    double sigma_rotation_deg = 0.0;   // degrees per step
    std::vector<LoopClosure> loop_closures;
};

struct SimulationResult {
    PoseStream stream;             // dynamic estimates: new frames + update events
    std::vector<Pose> true_poses;  // ground-truth trajectory, one per tick
};

/// Emits frame t at tick t with a drifted pose estimate; each loop closure
/// moves every past estimate toward ground truth by its correction fraction.
/// Depth is rendered from TRUE poses elsewhere; estimates only steer the
/// reconstruction.
SimulationResult simulate_stream(const std::vector<Pose>& trajectory, const DriftConfig& cfg);

// Trajectory file: JSON Lines of {"t": int, "pose": [16 floats]}.
void write_trajectory(const std::string& path, const std::vector<Pose>& poses);
std::vector<Pose> read_trajectory(const std::string& path);

}  // namespace recon
