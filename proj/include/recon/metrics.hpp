#pragma once

#include <cstdint>
#include <vector>

#include "recon/geometry.hpp"
#include "recon/marching.hpp"
#include "recon/tsdf.hpp"

namespace recon {

struct MetricsReport {
    double accuracy = 0.0;      // mean pred->gt distance, meters
    double completeness = 0.0;  // mean gt->pred distance, meters
    double chamfer = 0.0;       // (accuracy + completeness) / 2
    double precision = 0.0;     // fraction of pred samples within threshold of gt
    double recall = 0.0;        // fraction of gt samples within threshold of pred
    double fscore = 0.0;        // harmonic mean; 0 when precision + recall == 0
};

struct EvalParams {
    double inlier_threshold = 0.05;  // strict < comparison
    int samples = 200000;            // points per mesh, area-uniform
    double clip = 1.0;               // cap on nearest-neighbor distances, meters
    uint64_t pred_seed = 1;          // seed follows the mesh, not the argument slot
    uint64_t gt_seed = 2;
};

/// Area-uniform deterministic surface sampling. Empty mesh gives an empty set.
std::vector<Vec3> point_sample(const TriangleMesh& mesh, int n, uint64_t seed);

/// Sampled point-to-point reconstruction metrics. An empty prediction scores
/// worst-case accuracy (= clip) and zero precision. Throws DataError when the
/// ground truth is empty.
MetricsReport evaluate(const TriangleMesh& pred, const TriangleMesh& gt, const EvalParams& p);

/// One view for time-dependent ground-truth fusion.
struct DepthView {
    const DepthImage* depth = nullptr;
    Pose camera_pose;
};

/// Ground truth at a time point: every observed depth fused from scratch with
/// the pose estimates current at that time, then meshed.
TriangleMesh ground_truth_at(const std::vector<DepthView>& views, const Intrinsics& k,
                             const GridSpec& grid, double truncation);

}  // namespace recon
