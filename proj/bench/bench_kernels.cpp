// Times the OpenMP kernels against their serial reference implementations on
// the default desk-scale workload and prints one line per kernel.

#include <chrono>
#include <cstdio>
#include <functional>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "recon/featvol.hpp"
#include "recon/metrics.hpp"
#include "recon/pipeline.hpp"
#include "recon/simulator.hpp"
#include "recon/tsdf.hpp"

using namespace recon;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    // One warmup, then best-of-reps.
    fn();
    double best = 1e30;
    for (int i = 0; i < reps; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

void report(const char* name, double serial_ms, double parallel_ms) {
    std::printf("%-28s serial %8.2f ms   parallel %8.2f ms   speedup %.2fx\n", name, serial_ms,
                parallel_ms, serial_ms / parallel_ms);
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("threads: %d\n", omp_get_max_threads());
#else
    std::printf("threads: 1 (OpenMP disabled)\n");
#endif

    const Scene scene = default_room_scene();
    const Intrinsics camera{277.0, 277.0, 160.0, 120.0, 320, 240};
    const Pose pose = look_at({2.4, 0.0, 1.5}, {0.0, 0.0, 0.9});
    const ExperimentConfig cfg;
    const GridSpec grid = cfg.grid();
    const double trunc = cfg.truncation();

    report("render_depth 320x240",
           time_ms([&] { (void)render_depth_reference(scene, pose, camera); }, 3),
           time_ms([&] { (void)render_depth(scene, pose, camera); }, 3));

    const DepthImage depth = render_depth(scene, pose, camera);

    {
        TsdfVolume a(grid, trunc), b(grid, trunc);
        report("tsdf integrate",
               time_ms([&] { a.integrate_reference(depth, pose, camera, +1); }, 5),
               time_ms([&] { b.integrate(depth, pose, camera, +1); }, 5));
    }

    {
        FeatureVolume a(grid, 1), b(grid, 1);
        report("featvol tsdf-sample integrate",
               time_ms([&] { a.integrate_tsdf_samples_reference(depth, pose, camera, +1, trunc); }, 5),
               time_ms([&] { b.integrate_tsdf_samples(depth, pose, camera, +1, trunc); }, 5));
    }

    {
        const FeatureMap fmap = extract_features(depth, FeatureMode::Hashed, 0, 8);
        FeatureVolume a(grid, 8), b(grid, 8);
        report("featvol dense backproject x8",
               time_ms([&] { a.integrate_reference(fmap, pose, camera, +1); }, 3),
               time_ms([&] { b.integrate(fmap, pose, camera, +1); }, 3));
    }

    {
        TsdfVolume vol(grid, trunc);
        const auto views = orbit_trajectory(24, {0.0, 0.0, 0.9}, 2.4, 1.5);
        for (const Pose& p : views) vol.integrate(render_depth(scene, p, camera), p, camera, +1);
        report("extract_mesh",
               time_ms([&] { (void)extract_mesh_reference(vol); }, 3),
               time_ms([&] { (void)extract_mesh(vol); }, 3));

        const TriangleMesh mesh = extract_mesh(vol);
        const std::vector<Vec3> a_pts = point_sample(mesh, 200000, 1);
        const std::vector<Vec3> b_pts = point_sample(mesh, 200000, 2);
        EvalParams p;
        const double eval_ms = time_ms([&] { (void)evaluate(mesh, mesh, p); }, 3);
        std::printf("%-28s %zu pts vs %zu pts: %8.2f ms\n", "evaluate (parallel NN)",
                    a_pts.size(), b_pts.size(), eval_ms);
    }
    return 0;
}
