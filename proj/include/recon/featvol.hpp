#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recon/geometry.hpp"
#include "recon/marching.hpp"
#include "recon/tsdf.hpp"

namespace recon {

enum class FeatureMode { IdentityDepth, Hashed };

struct FeatureMap {
    int width = 0, height = 0, channels = 0;
    std::vector<float> data;  // row-major, channel-interleaved

    FeatureMap() = default;
    FeatureMap(int w, int h, int c)
        : width(w), height(h), channels(c), data(size_t(w) * h * c, 0.0f) {}

    float at(int u, int v, int c) const {
        return data[(size_t(v) * width + u) * channels + c];
    }
    float& at(int u, int v, int c) {
        return data[(size_t(v) * width + u) * channels + c];
    }
};

/// Deterministic per-pixel features standing in for a learned encoder.
/// IdentityDepth emits one channel holding the depth value; Hashed emits a
/// fixed pseudo-random vector keyed by (pixel, frame id).
FeatureMap extract_features(const DepthImage& depth, FeatureMode mode, int64_t frame_id,
                            int channels = 8);

/// Per-voxel running average of back-projected view features, with the same
/// exact-inverse accumulation scheme as TsdfVolume.
class FeatureVolume {
public:
    FeatureVolume(const GridSpec& grid, int channels);

    const GridSpec& grid() const { return grid_; }
    int channels() const { return channels_; }

    /// Densely back-projects the feature map: every voxel in front of the
    /// camera whose projection lands on the image samples its nearest pixel.
    /// sign = -1 with identical arguments exactly inverts sign = +1.
    void integrate(const FeatureMap& fmap, const Pose& camera_pose, const Intrinsics& k,
                   int sign);
    void integrate_reference(const FeatureMap& fmap, const Pose& camera_pose,
                             const Intrinsics& k, int sign);

    /// Integrates truncated-SDF samples of a depth map into channel 0 under
    /// the TSDF visibility rule, making the exposed channel directly
    /// meshable. Sample-for-sample identical to TsdfVolume::integrate.
    void integrate_tsdf_samples(const DepthImage& depth, const Pose& camera_pose,
                                const Intrinsics& k, int sign, double truncation);
    void integrate_tsdf_samples_reference(const DepthImage& depth, const Pose& camera_pose,
                                          const Intrinsics& k, int sign, double truncation);

    bool observed(size_t idx) const { return count_[idx] > 0; }
    int64_t count_at(size_t idx) const { return count_[idx]; }
    double feature_at(size_t idx, int channel) const {
        return exposed_mean(feature_sum_[idx * channels_ + channel], count_[idx]);
    }
    int64_t total_count() const;

    const std::vector<int64_t>& raw_sums() const { return feature_sum_; }
    const std::vector<int64_t>& raw_counts() const { return count_; }

private:
    void integrate_impl(const FeatureMap& fmap, const Pose& camera_pose, const Intrinsics& k,
                        int sign, bool parallel);
    void integrate_tsdf_impl(const DepthImage& depth, const Pose& camera_pose,
                             const Intrinsics& k, int sign, double truncation, bool parallel);

    GridSpec grid_;
    int channels_;
    std::vector<int64_t> feature_sum_;
    std::vector<int64_t> count_;
};

/// Marching cubes over the exposed values of one channel.
TriangleMesh extract_mesh(const FeatureVolume& vol, int channel = 0, bool parallel = true);

// Volume snapshot, magic "FVL1": header as TSD1 plus u32 channels, then
// per-voxel f32 feature_sum x channels and f32 count, x-fastest.
void write_featvol_snapshot(const std::string& path, const FeatureVolume& vol);
VolumeSnapshot read_featvol_snapshot(const std::string& path);

}  // namespace recon
