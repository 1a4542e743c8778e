#include "recon/tsdf.hpp"

#include <atomic>
#include <cstdio>
#include <cstring>
#include <memory>

#include "recon/errors.hpp"

namespace recon {

namespace {

struct CullBox {
    int lo[3] = {0, 0, 0};
    int hi[3] = {-1, -1, -1};  // empty by default
    bool empty() const { return hi[0] < lo[0] || hi[1] < lo[1] || hi[2] < lo[2]; }
};

// Grid index range covered by the view frustum out to max_z camera depth.
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

void check_camera(const DepthImage& depth, const Intrinsics& k) {
    if (depth.width != k.width || depth.height != k.height)
        throw DataError("integrate: depth image size does not match intrinsics");
    if (depth.data.size() != size_t(depth.width) * depth.height)
        throw DataError("integrate: depth image data length mismatch");
}

float max_valid_depth(const DepthImage& depth) {
    float m = 0.0f;
    for (float d : depth.data)
        if (DepthImage::valid_depth(d) && d > m) m = d;
    return m;
}

}  // namespace

TsdfVolume::TsdfVolume(const GridSpec& grid, double truncation)
    : grid_(grid), truncation_(truncation), tsdf_sum_(grid.count(), 0), weight_(grid.count(), 0) {
    if (!(truncation > 0)) throw DataError("tsdf: truncation must be positive");
    if (grid.nx <= 0 || grid.ny <= 0 || grid.nz <= 0) throw DataError("tsdf: empty grid");
}

void TsdfVolume::integrate(const DepthImage& depth, const Pose& camera_pose, const Intrinsics& k,
                           int sign) {
    integrate_impl(depth, camera_pose, k, sign, true);
}

void TsdfVolume::integrate_reference(const DepthImage& depth, const Pose& camera_pose,
                                     const Intrinsics& k, int sign) {
    integrate_impl(depth, camera_pose, k, sign, false);
}

void TsdfVolume::integrate_impl(const DepthImage& depth, const Pose& camera_pose,
                                const Intrinsics& k, int sign, bool parallel) {
    check_sign(sign);
    check_camera(depth, k);

    const float max_d = max_valid_depth(depth);
    const CullBox box = frustum_cull(grid_, camera_pose, k, double(max_d) + truncation_);
    if (box.empty()) return;

    const Pose cam_from_world = inverse(camera_pose);
    const Vec3 xstep = cam_from_world.rotation.col(0) * grid_.voxel_size;
    const double trunc = truncation_;
    std::atomic<int64_t> violation{-1};

    const auto process_row = [&](int iz, int iy) {
        Vec3 p = cam_from_world.apply(grid_.position(box.lo[0], iy, iz));
        size_t idx = grid_.index(box.lo[0], iy, iz);
        for (int ix = box.lo[0]; ix <= box.hi[0]; ++ix, ++idx, p += xstep) {
            int64_t q;
            if (!depth_sample_quantized(p.x, p.y, p.z, depth, k, trunc, q)) continue;
            tsdf_sum_[idx] += sign * q;
            weight_[idx] += sign;
            if (weight_[idx] < 0) {
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

    const int64_t bad = violation.load();
    if (bad >= 0) {
        const size_t i = size_t(bad);
        const int ix = int(i % grid_.nx);
        const int iy = int((i / grid_.nx) % grid_.ny);
        const int iz = int(i / (size_t(grid_.nx) * grid_.ny));
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "de-integration drove weight below zero at voxel (%d, %d, %d)", ix, iy, iz);
        throw ProtocolViolation(buf);
    }
}

int64_t TsdfVolume::total_weight() const {
    int64_t total = 0;
    for (int64_t w : weight_) total += w;
    return total;
}

void TsdfVolume::set_sample(int ix, int iy, int iz, double tsdf, int64_t weight) {
    const size_t idx = grid_.index(ix, iy, iz);
    tsdf_sum_[idx] = quantize_sample(tsdf) * weight;
    weight_[idx] = weight;
}

namespace {

struct TsdfSampler {
    const TsdfVolume* vol;
    double value(int ix, int iy, int iz) const {
        return vol->tsdf_at(vol->grid().index(ix, iy, iz));
    }
    bool observed(int ix, int iy, int iz) const {
        return vol->observed(vol->grid().index(ix, iy, iz));
    }
};

}  // namespace

TriangleMesh extract_mesh(const TsdfVolume& vol, bool parallel) {
    return extract_isosurface(vol.grid(), TsdfSampler{&vol}, parallel);
}

TriangleMesh extract_mesh_reference(const TsdfVolume& vol) {
    return extract_isosurface(vol.grid(), TsdfSampler{&vol}, false);
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_snapshot_header(std::FILE* f, const char* magic, const GridSpec& g) {
    const uint32_t dims[3] = {uint32_t(g.nx), uint32_t(g.ny), uint32_t(g.nz)};
    const float origin[3] = {float(g.origin.x), float(g.origin.y), float(g.origin.z)};
    const float vs = float(g.voxel_size);
    std::fwrite(magic, 1, 4, f);
    std::fwrite(dims, 4, 3, f);
    std::fwrite(origin, 4, 3, f);
    std::fwrite(&vs, 4, 1, f);
}

GridSpec read_snapshot_header(std::FILE* f, const char* magic, const std::string& path) {
    char got[4];
    uint32_t dims[3];
    float origin[3], vs;
    if (std::fread(got, 1, 4, f) != 4 || std::memcmp(got, magic, 4) != 0)
        throw DataError(std::string("not a ") + magic + " file: " + path);
    if (std::fread(dims, 4, 3, f) != 3 || std::fread(origin, 4, 3, f) != 3 ||
        std::fread(&vs, 4, 1, f) != 1)
        throw DataError("truncated snapshot header: " + path);
    GridSpec g;
    g.origin = {origin[0], origin[1], origin[2]};
    g.voxel_size = vs;
    g.nx = int(dims[0]);
    g.ny = int(dims[1]);
    g.nz = int(dims[2]);
    return g;
}

}  // namespace

void write_tsdf_snapshot(const std::string& path, const TsdfVolume& vol) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw DataError("cannot open for writing: " + path);
    write_snapshot_header(f.get(), "TSD1", vol.grid());
    const size_t n = vol.grid().count();
    std::vector<float> buf(2 * n);
    for (size_t i = 0; i < n; ++i) {
        buf[2 * i] = float(double(vol.raw_sums()[i]) * kAccumInvScale);
        buf[2 * i + 1] = float(vol.raw_weights()[i]);
    }
    if (std::fwrite(buf.data(), 4, buf.size(), f.get()) != buf.size())
        throw DataError("short write: " + path);
}

VolumeSnapshot read_tsdf_snapshot(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw DataError("cannot open: " + path);
    VolumeSnapshot snap;
    snap.grid = read_snapshot_header(f.get(), "TSD1", path);
    const size_t n = snap.grid.count();
    std::vector<float> buf(2 * n);
    if (std::fread(buf.data(), 4, buf.size(), f.get()) != buf.size())
        throw DataError("truncated snapshot payload: " + path);
    snap.channels = 1;
    snap.sums.resize(n);
    snap.counts.resize(n);
    for (size_t i = 0; i < n; ++i) {
        snap.sums[i] = buf[2 * i];
        snap.counts[i] = buf[2 * i + 1];
    }
    return snap;
}

}  // namespace recon
