#include "recon/featvol.hpp"

#include <atomic>
#include <cstdio>
#include <cstring>
#include <memory>

#include "recon/errors.hpp"
#include "recon/rng.hpp"

namespace recon {

FeatureMap extract_features(const DepthImage& depth, FeatureMode mode, int64_t frame_id,
                            int channels) {
    if (depth.data.size() != size_t(depth.width) * depth.height)
        throw DataError("extract_features: depth image data length mismatch");
    if (mode == FeatureMode::IdentityDepth) {
        FeatureMap fmap(depth.width, depth.height, 1);
        std::copy(depth.data.begin(), depth.data.end(), fmap.data.begin());
        return fmap;
    }
    if (channels <= 0) throw DataError("extract_features: channels must be positive");
    FeatureMap fmap(depth.width, depth.height, channels);
    const size_t pixels = size_t(depth.width) * depth.height;
    for (size_t p = 0; p < pixels; ++p) {
        for (int c = 0; c < channels; ++c) {
            const uint64_t h =
                splitmix64(hash_combine(hash_combine(uint64_t(frame_id), p), uint64_t(c)));
            fmap.data[p * channels + c] = float(double(h >> 11) * 0x1.0p-53 * 2.0 - 1.0);
        }
    }
    return fmap;
}

FeatureVolume::FeatureVolume(const GridSpec& grid, int channels)
    : grid_(grid),
      channels_(channels),
      feature_sum_(grid.count() * size_t(channels), 0),
      count_(grid.count(), 0) {
    if (channels <= 0) throw DataError("featvol: channels must be positive");
    if (grid.nx <= 0 || grid.ny <= 0 || grid.nz <= 0) throw DataError("featvol: empty grid");
}

namespace {

struct CullBox {
    int lo[3] = {0, 0, 0};
    int hi[3] = {-1, -1, -1};
    bool empty() const { return hi[0] < lo[0] || hi[1] < lo[1] || hi[2] < lo[2]; }
};

CullBox frustum_cull(const GridSpec& grid, const Pose& camera_pose, const Intrinsics& k,
                     double max_z) {
    CullBox box;
    if (max_z <= 0.0) return box;
    Vec3 lo = camera_pose.translation, hi = camera_pose.translation;
    const double us[2] = {0.0, double(k.width - 1)};
    const double vs[2] = {0.0, double(k.height - 1)};
    for (double u : us)
        for (double v : vs) {
            const Vec3 dir_cam{(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0};
            const Vec3 p = camera_pose.apply(dir_cam * max_z);
            lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
            hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
        }
    const double inv = 1.0 / grid.voxel_size;
    const int n[3] = {grid.nx, grid.ny, grid.nz};
    const double lo_a[3] = {lo.x, lo.y, lo.z}, hi_a[3] = {hi.x, hi.y, hi.z};
    const double org[3] = {grid.origin.x, grid.origin.y, grid.origin.z};
    for (int a = 0; a < 3; ++a) {
        box.lo[a] = std::max(0, int(std::floor((lo_a[a] - org[a]) * inv)));
        box.hi[a] = std::min(n[a] - 1, int(std::ceil((hi_a[a] - org[a]) * inv)));
    }
    return box;
}

void check_sign(int sign) {
    if (sign != 1 && sign != -1) throw DataError("integrate: sign must be +1 or -1");
}

// Camera depth of the farthest grid corner; bounds the dense back-projection.
double far_grid_depth(const GridSpec& grid, const Pose& cam_from_world) {
    double far_z = 0.0;
    const Vec3 mx = grid.max_corner();
    for (int c = 0; c < 8; ++c) {
        const Vec3 p{(c & 1) ? mx.x : grid.origin.x, (c & 2) ? mx.y : grid.origin.y,
                     (c & 4) ? mx.z : grid.origin.z};
        far_z = std::max(far_z, cam_from_world.apply(p).z);
    }
    return far_z;
}

[[noreturn]] void throw_violation(const GridSpec& grid, size_t idx) {
    const int ix = int(idx % grid.nx);
    const int iy = int((idx / grid.nx) % grid.ny);
    const int iz = int(idx / (size_t(grid.nx) * grid.ny));
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "de-integration drove count below zero at voxel (%d, %d, %d)", ix, iy, iz);
    throw ProtocolViolation(buf);
}

}  // namespace

void FeatureVolume::integrate(const FeatureMap& fmap, const Pose& camera_pose,
                              const Intrinsics& k, int sign) {
    integrate_impl(fmap, camera_pose, k, sign, true);
}

void FeatureVolume::integrate_reference(const FeatureMap& fmap, const Pose& camera_pose,
                                        const Intrinsics& k, int sign) {
    integrate_impl(fmap, camera_pose, k, sign, false);
}

void FeatureVolume::integrate_impl(const FeatureMap& fmap, const Pose& camera_pose,
                                   const Intrinsics& k, int sign, bool parallel) {
    check_sign(sign);
    if (fmap.width != k.width || fmap.height != k.height)
        throw DataError("integrate: feature map size does not match intrinsics");
    if (fmap.channels != channels_)
        throw DataError("integrate: feature map channel count does not match volume");

    const Pose cam_from_world = inverse(camera_pose);
    const CullBox box = frustum_cull(grid_, camera_pose, k,
                                     far_grid_depth(grid_, cam_from_world) + grid_.voxel_size);
    if (box.empty()) return;

    const Vec3 xstep = cam_from_world.rotation.col(0) * grid_.voxel_size;
    const int nch = channels_;
    std::atomic<int64_t> violation{-1};

    const auto process_row = [&](int iz, int iy) {
        Vec3 p = cam_from_world.apply(grid_.position(box.lo[0], iy, iz));
        size_t idx = grid_.index(box.lo[0], iy, iz);
        for (int ix = box.lo[0]; ix <= box.hi[0]; ++ix, ++idx, p += xstep) {
            if (p.z <= 0.0) continue;
            const double invz = 1.0 / p.z;
            const auto pix = nearest_pixel(k.fx * p.x * invz + k.cx, k.fy * p.y * invz + k.cy, k);
            if (!pix) continue;
            for (int c = 0; c < nch; ++c) {
                const int64_t q = quantize_sample(double(fmap.at(pix->u, pix->v, c)));
                feature_sum_[idx * nch + c] += sign * q;
            }
            count_[idx] += sign;
            if (count_[idx] < 0) {
                int64_t expected = -1;
                violation.compare_exchange_strong(expected, int64_t(idx));
            }
        }
    };

    if (parallel) {
#pragma omp parallel for collapse(2) schedule(static)
        for (int iz = box.lo[2]; iz <= box.hi[2]; ++iz)
            for (int iy = box.lo[1]; iy <= box.hi[1]; ++iy) process_row(iz, iy);
    } else {
        for (int iz = box.lo[2]; iz <= box.hi[2]; ++iz)
            for (int iy = box.lo[1]; iy <= box.hi[1]; ++iy) process_row(iz, iy);
    }

    if (violation.load() >= 0) throw_violation(grid_, size_t(violation.load()));
}

void FeatureVolume::integrate_tsdf_samples(const DepthImage& depth, const Pose& camera_pose,
                                           const Intrinsics& k, int sign, double truncation) {
    integrate_tsdf_impl(depth, camera_pose, k, sign, truncation, true);
}

void FeatureVolume::integrate_tsdf_samples_reference(const DepthImage& depth,
                                                     const Pose& camera_pose,
                                                     const Intrinsics& k, int sign,
                                                     double truncation) {
    integrate_tsdf_impl(depth, camera_pose, k, sign, truncation, false);
}

void FeatureVolume::integrate_tsdf_impl(const DepthImage& depth, const Pose& camera_pose,
                                        const Intrinsics& k, int sign, double truncation,
                                        bool parallel) {
    check_sign(sign);
    if (channels_ != 1)
        throw DataError("integrate_tsdf_samples requires a single-channel volume");
    if (depth.width != k.width || depth.height != k.height)
        throw DataError("integrate: depth image size does not match intrinsics");

    float max_d = 0.0f;
    for (float d : depth.data)
        if (DepthImage::valid_depth(d) && d > max_d) max_d = d;
    const CullBox box = frustum_cull(grid_, camera_pose, k, double(max_d) + truncation);
    if (box.empty()) return;

    const Pose cam_from_world = inverse(camera_pose);
    const Vec3 xstep = cam_from_world.rotation.col(0) * grid_.voxel_size;
    std::atomic<int64_t> violation{-1};

    const auto process_row = [&](int iz, int iy) {
        Vec3 p = cam_from_world.apply(grid_.position(box.lo[0], iy, iz));
        size_t idx = grid_.index(box.lo[0], iy, iz);
        for (int ix = box.lo[0]; ix <= box.hi[0]; ++ix, ++idx, p += xstep) {
            int64_t q;
            if (!depth_sample_quantized(p.x, p.y, p.z, depth, k, truncation, q)) continue;
            feature_sum_[idx] += sign * q;
            count_[idx] += sign;
            if (count_[idx] < 0) {
                int64_t expected = -1;
                violation.compare_exchange_strong(expected, int64_t(idx));
            }
        }
    };

    if (parallel) {
#pragma omp parallel for collapse(2) schedule(static)
        for (int iz = box.lo[2]; iz <= box.hi[2]; ++iz)
            for (int iy = box.lo[1]; iy <= box.hi[1]; ++iy) process_row(iz, iy);
    } else {
        for (int iz = box.lo[2]; iz <= box.hi[2]; ++iz)
            for (int iy = box.lo[1]; iy <= box.hi[1]; ++iy) process_row(iz, iy);
    }

    if (violation.load() >= 0) throw_violation(grid_, size_t(violation.load()));
}

int64_t FeatureVolume::total_count() const {
    int64_t total = 0;
    for (int64_t c : count_) total += c;
    return total;
}

namespace {

struct ChannelSampler {
    const FeatureVolume* vol;
    int channel;
    double value(int ix, int iy, int iz) const {
        return vol->feature_at(vol->grid().index(ix, iy, iz), channel);
    }
    bool observed(int ix, int iy, int iz) const {
        return vol->observed(vol->grid().index(ix, iy, iz));
    }
};

struct FileCloser {
    void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

TriangleMesh extract_mesh(const FeatureVolume& vol, int channel, bool parallel) {
    if (channel < 0 || channel >= vol.channels())
        throw DataError("extract_mesh: channel out of range");
    return extract_isosurface(vol.grid(), ChannelSampler{&vol, channel}, parallel);
}

void write_featvol_snapshot(const std::string& path, const FeatureVolume& vol) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw DataError("cannot open for writing: " + path);
    const GridSpec& g = vol.grid();
    const uint32_t dims[3] = {uint32_t(g.nx), uint32_t(g.ny), uint32_t(g.nz)};
    const float origin[3] = {float(g.origin.x), float(g.origin.y), float(g.origin.z)};
    const float vs = float(g.voxel_size);
    const uint32_t ch = uint32_t(vol.channels());
    std::fwrite("FVL1", 1, 4, f.get());
    std::fwrite(dims, 4, 3, f.get());
    std::fwrite(origin, 4, 3, f.get());
    std::fwrite(&vs, 4, 1, f.get());
    std::fwrite(&ch, 4, 1, f.get());
    const size_t n = g.count();
    std::vector<float> buf(n * (ch + 1));
    size_t o = 0;
    for (size_t i = 0; i < n; ++i) {
        for (uint32_t c = 0; c < ch; ++c)
            buf[o++] = float(double(vol.raw_sums()[i * ch + c]) * kAccumInvScale);
        buf[o++] = float(vol.raw_counts()[i]);
    }
    if (std::fwrite(buf.data(), 4, buf.size(), f.get()) != buf.size())
        throw DataError("short write: " + path);
}

VolumeSnapshot read_featvol_snapshot(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw DataError("cannot open: " + path);
    char magic[4];
    uint32_t dims[3], ch;
    float origin[3], vs;
    if (std::fread(magic, 1, 4, f.get()) != 4 || std::memcmp(magic, "FVL1", 4) != 0)
        throw DataError("not a FVL1 file: " + path);
    if (std::fread(dims, 4, 3, f.get()) != 3 || std::fread(origin, 4, 3, f.get()) != 3 ||
        std::fread(&vs, 4, 1, f.get()) != 1 || std::fread(&ch, 4, 1, f.get()) != 1)
        throw DataError("truncated snapshot header: " + path);
    VolumeSnapshot snap;
    snap.grid.origin = {origin[0], origin[1], origin[2]};
    snap.grid.voxel_size = vs;
    snap.grid.nx = int(dims[0]);
    snap.grid.ny = int(dims[1]);
    snap.grid.nz = int(dims[2]);
    snap.channels = int(ch);
    const size_t n = snap.grid.count();
    std::vector<float> buf(n * (ch + 1));
    if (std::fread(buf.data(), 4, buf.size(), f.get()) != buf.size())
        throw DataError("truncated snapshot payload: " + path);
    snap.sums.resize(n * ch);
    snap.counts.resize(n);
    size_t o = 0;
    for (size_t i = 0; i < n; ++i) {
        for (uint32_t c = 0; c < ch; ++c) snap.sums[i * ch + c] = buf[o++];
        snap.counts[i] = buf[o++];
    }
    return snap;
}

}  // namespace recon
