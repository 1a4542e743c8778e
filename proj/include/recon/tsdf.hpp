#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recon/geometry.hpp"
#include "recon/marching.hpp"

namespace recon {

// Per-observation samples are quantized to fixed point and accumulated in
// 64-bit integers. Integer sums commute and cancel exactly, so de-integration
// restores the prior state bitwise and integration order never changes the
// result. The quantization step (2^-20 per unit weight) is far below every
// tolerance in the pipeline.
inline constexpr double kAccumScale = 1048576.0;  // 2^20
inline constexpr double kAccumInvScale = 1.0 / kAccumScale;

inline int64_t quantize_sample(double v) { return int64_t(std::llround(v * kAccumScale)); }

inline double exposed_mean(int64_t sum, int64_t count) {
    return double(sum) * kAccumInvScale / double(count);
}

/// Truncated SDF sample of a depth observation at a camera-space point.
/// Returns false when the point is behind the camera, projects off the image,
/// hits an invalid pixel, or lies more than `truncation` behind the surface.
/// Shared by TsdfVolume and the feature-volume equivalence path so both see
/// bit-identical samples.
inline bool depth_sample_quantized(double px, double py, double pz, const DepthImage& depth,
                                   const Intrinsics& k, double truncation, int64_t& q_out) {
    if (pz <= 0.0) return false;
    const double invz = 1.0 / pz;
    const auto pix = nearest_pixel(k.fx * px * invz + k.cx, k.fy * py * invz + k.cy, k);
    if (!pix) return false;
    const float d = depth.at(pix->u, pix->v);
    if (!DepthImage::valid_depth(d)) return false;
    const double sdf = double(d) - pz;
    if (sdf <= -truncation) return false;
    const double sample = std::min(1.0, std::max(-1.0, sdf / truncation));
    q_out = quantize_sample(sample);
    return true;
}

/// Truncated signed distance volume with paired integrate / de-integrate.
/// integrate(..., -1) with arguments identical to an earlier integrate(..., +1)
/// removes that observation exactly.
class TsdfVolume {
public:
    TsdfVolume(const GridSpec& grid, double truncation);

    const GridSpec& grid() const { return grid_; }
    double truncation() const { return truncation_; }

    /// Fuses (sign = +1) or removes (sign = -1) one depth observation.
    /// camera_pose maps camera to world coordinates.
    void integrate(const DepthImage& depth, const Pose& camera_pose, const Intrinsics& k,
                   int sign);
    /// Serial reference; produces bit-identical state to integrate().
    void integrate_reference(const DepthImage& depth, const Pose& camera_pose,
                             const Intrinsics& k, int sign);

    bool observed(size_t idx) const { return weight_[idx] > 0; }
    double tsdf_at(size_t idx) const { return exposed_mean(tsdf_sum_[idx], weight_[idx]); }
    int64_t weight_at(size_t idx) const { return weight_[idx]; }
    int64_t total_weight() const;

    /// Direct sample injection, used by tests and analytic fixtures.
    void set_sample(int ix, int iy, int iz, double tsdf, int64_t weight);

    const std::vector<int64_t>& raw_sums() const { return tsdf_sum_; }
    const std::vector<int64_t>& raw_weights() const { return weight_; }
    std::vector<int64_t>& raw_sums() { return tsdf_sum_; }
    std::vector<int64_t>& raw_weights() { return weight_; }

private:
    void integrate_impl(const DepthImage& depth, const Pose& camera_pose, const Intrinsics& k,
                        int sign, bool parallel);

    GridSpec grid_;
    double truncation_;
    std::vector<int64_t> tsdf_sum_;
    std::vector<int64_t> weight_;
};

TriangleMesh extract_mesh(const TsdfVolume& vol, bool parallel = true);
TriangleMesh extract_mesh_reference(const TsdfVolume& vol);

// Volume snapshot, magic "TSD1": u32 dims x3, f32 origin x3, f32 voxel_size,
// then per-voxel f32 (weighted_sum, weight_sum) pairs, x-fastest.
void write_tsdf_snapshot(const std::string& path, const TsdfVolume& vol);

struct VolumeSnapshot {
    GridSpec grid;
    int channels = 1;
    std::vector<float> sums;   // count() * channels
    std::vector<float> counts;
};
VolumeSnapshot read_tsdf_snapshot(const std::string& path);

}  // namespace recon
