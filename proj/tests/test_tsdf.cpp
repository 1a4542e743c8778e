#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "recon/errors.hpp"
#include "recon/rng.hpp"
#include "recon/tsdf.hpp"

using namespace recon;

namespace {

const Intrinsics kCam{60.0, 60.0, 32.0, 24.0, 64, 48};

DepthImage random_depth(Rng& rng, double lo = 0.8, double hi = 1.6) {
    DepthImage img(kCam.width, kCam.height);
    for (float& d : img.data) {
        d = float(lo + rng.next_double() * (hi - lo));
        if (rng.next_double() < 0.03) d = 0.0f;  // sprinkle invalid pixels
    }
    return img;
}

Pose jittered_view(Rng& rng) {
    Pose p;
    p.rotation = rotation_axis_angle(rng.next_unit_vector(), (rng.next_double() - 0.5) * 0.2);
    p.translation = {(rng.next_double() - 0.5) * 0.3, (rng.next_double() - 0.5) * 0.3,
                     (rng.next_double() - 0.5) * 0.2};
    return p;
}

GridSpec test_grid() { return GridSpec{{-0.32, -0.32, 0.5}, 0.04, 16, 16, 16}; }

bool volume_equal(const TsdfVolume& a, const TsdfVolume& b) {
    return a.raw_sums() == b.raw_sums() && a.raw_weights() == b.raw_weights();
}

}  // namespace

TEST_CASE("single observation gives the clamped truncated sample") {
    // One voxel exactly 1.00m in front of the camera, surface at 1.06m,
    // truncation 0.12m: sample is +0.5 at weight 1.
    TsdfVolume vol(GridSpec{{0, 0, 1.0}, 0.04, 1, 1, 1}, 0.12);
    DepthImage depth(kCam.width, kCam.height, 1.06f);
    vol.integrate(depth, Pose::identity(), kCam, +1);
    REQUIRE(vol.weight_at(0) == 1);
    CHECK(vol.tsdf_at(0) == doctest::Approx(0.5).epsilon(1e-9));

    // A second observation at 0.94m samples -0.5: the running mean is 0.
    DepthImage depth2(kCam.width, kCam.height, 0.94f);
    vol.integrate(depth2, Pose::identity(), kCam, +1);
    REQUIRE(vol.weight_at(0) == 2);
    CHECK(vol.tsdf_at(0) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("voxels far behind the surface receive no update") {
    // Surface at 0.5m; a voxel at 1.0m sits 0.5m behind it, beyond the 0.12m
    // truncation band.
    TsdfVolume vol(GridSpec{{0, 0, 1.0}, 0.04, 1, 1, 1}, 0.12);
    DepthImage depth(kCam.width, kCam.height, 0.5f);
    vol.integrate(depth, Pose::identity(), kCam, +1);
    CHECK(vol.weight_at(0) == 0);
}

TEST_CASE("de-integration restores the prior state bitwise") {
    Rng rng(21);
    TsdfVolume vol(test_grid(), 0.12);
    const Pose p1 = jittered_view(rng), p2 = jittered_view(rng);
    const DepthImage d1 = random_depth(rng), d2 = random_depth(rng);

    vol.integrate(d1, p1, kCam, +1);
    const TsdfVolume before = vol;
    vol.integrate(d2, p2, kCam, +1);
    CHECK_FALSE(volume_equal(vol, before));
    vol.integrate(d2, p2, kCam, -1);
    CHECK(volume_equal(vol, before));
}

TEST_CASE("de-integrating any earlier view matches integrate-without-it") {
    Rng rng(22);
    const int n = 10;
    std::vector<DepthImage> depths;
    std::vector<Pose> poses;
    for (int i = 0; i < n; ++i) {
        depths.push_back(random_depth(rng));
        poses.push_back(jittered_view(rng));
    }

    for (int k : {0, 3, n - 1}) {
        TsdfVolume vol(test_grid(), 0.12);
        for (int i = 0; i < n; ++i) vol.integrate(depths[i], poses[i], kCam, +1);
        vol.integrate(depths[k], poses[k], kCam, -1);

        TsdfVolume oracle(test_grid(), 0.12);
        for (int i = 0; i < n; ++i)
            if (i != k) oracle.integrate(depths[i], poses[i], kCam, +1);

        CHECK(volume_equal(vol, oracle));
    }
}

TEST_CASE("integration order does not change the state") {
    Rng rng(23);
    const int n = 8;
    std::vector<DepthImage> depths;
    std::vector<Pose> poses;
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int i = 0; i < n; ++i) {
        depths.push_back(random_depth(rng));
        poses.push_back(jittered_view(rng));
    }

    TsdfVolume a(test_grid(), 0.12), b(test_grid(), 0.12);
    for (int i : order) a.integrate(depths[i], poses[i], kCam, +1);
    for (int i = 0; i < n; ++i) std::swap(order[i], order[size_t(rng.next_u64() % n)]);
    for (int i : order) b.integrate(depths[i], poses[i], kCam, +1);
    CHECK(volume_equal(a, b));
}

TEST_CASE("balanced sequences conserve total weight exactly") {
    Rng rng(24);
    TsdfVolume vol(test_grid(), 0.12);
    const Pose pa = jittered_view(rng), pb = jittered_view(rng);
    const DepthImage da = random_depth(rng), db = random_depth(rng);

    vol.integrate(da, pa, kCam, +1);
    vol.integrate(db, pb, kCam, +1);
    vol.integrate(da, pa, kCam, -1);

    TsdfVolume only_b(test_grid(), 0.12);
    only_b.integrate(db, pb, kCam, +1);
    CHECK(volume_equal(vol, only_b));
    CHECK(vol.total_weight() == only_b.total_weight());

    vol.integrate(db, pb, kCam, -1);
    CHECK(vol.total_weight() == 0);
}

TEST_CASE("de-integrating something never integrated is a protocol violation") {
    Rng rng(25);
    TsdfVolume vol(test_grid(), 0.12);
    CHECK_THROWS_AS(vol.integrate(random_depth(rng), Pose::identity(), kCam, -1),
                    ProtocolViolation);
}

TEST_CASE("integrate rejects bad arguments") {
    Rng rng(26);
    TsdfVolume vol(test_grid(), 0.12);
    CHECK_THROWS_AS(vol.integrate(random_depth(rng), Pose::identity(), kCam, 2), DataError);
    DepthImage wrong(10, 10, 1.0f);
    CHECK_THROWS_AS(vol.integrate(wrong, Pose::identity(), kCam, +1), DataError);
}

TEST_CASE("camera looking away from the grid is a no-op") {
    Rng rng(27);
    TsdfVolume vol(test_grid(), 0.12);
    Pose away;
    away.rotation = rotation_y(3.14159265358979);  // about-face
    vol.integrate(random_depth(rng), away, kCam, +1);
    CHECK(vol.total_weight() == 0);
}

TEST_CASE("parallel and serial integration agree bitwise") {
    Rng rng(28);
    TsdfVolume a(test_grid(), 0.12), b(test_grid(), 0.12);
    for (int i = 0; i < 4; ++i) {
        const DepthImage d = random_depth(rng);
        const Pose p = jittered_view(rng);
        a.integrate(d, p, kCam, +1);
        b.integrate_reference(d, p, kCam, +1);
    }
    CHECK(volume_equal(a, b));
}

TEST_CASE("mesh extraction skips unobserved voxels") {
    const GridSpec grid{{-0.5, -0.5, -0.5}, 0.05, 21, 21, 21};
    TsdfVolume clean(grid, 0.15);
    for (int iz = 0; iz < grid.nz; ++iz)
        for (int iy = 0; iy < grid.ny; ++iy)
            for (int ix = 0; ix < grid.nx; ++ix) {
                const Vec3 p = grid.position(ix, iy, iz);
                const double sdf = p.norm() - 0.3;
                if (std::abs(sdf) < 0.2) clean.set_sample(ix, iy, iz, std::clamp(sdf, -1.0, 1.0), 1);
            }
    TsdfVolume poisoned = clean;
    Rng rng(29);
    for (size_t i = 0; i < poisoned.raw_sums().size(); ++i)
        if (poisoned.raw_weights()[i] == 0)
            poisoned.raw_sums()[i] = int64_t(rng.next_u64());  // garbage behind zero weight

    const TriangleMesh a = extract_mesh(clean);
    const TriangleMesh b = extract_mesh(poisoned);
    REQUIRE(!a.empty());
    CHECK(a.triangles == b.triangles);
    REQUIRE(a.vertices.size() == b.vertices.size());
    for (size_t i = 0; i < a.vertices.size(); ++i)
        CHECK((a.vertices[i] - b.vertices[i]).norm() == 0.0);

    const TriangleMesh ref = extract_mesh_reference(clean);
    CHECK(ref.triangles == a.triangles);
}

TEST_CASE("all-positive volume has no surface") {
    TsdfVolume vol(GridSpec{{0, 0, 0}, 0.1, 6, 6, 6}, 0.3);
    for (int iz = 0; iz < 6; ++iz)
        for (int iy = 0; iy < 6; ++iy)
            for (int ix = 0; ix < 6; ++ix) vol.set_sample(ix, iy, iz, 0.8, 1);
    CHECK(extract_mesh(vol).empty());
}

TEST_CASE("snapshot round trip") {
    Rng rng(30);
    TsdfVolume vol(test_grid(), 0.12);
    vol.integrate(random_depth(rng), jittered_view(rng), kCam, +1);
    const std::string path = "/tmp/recon_test_vol.tsd1";
    write_tsdf_snapshot(path, vol);
    const VolumeSnapshot snap = read_tsdf_snapshot(path);
    CHECK(snap.grid.nx == vol.grid().nx);
    CHECK(snap.grid.voxel_size == doctest::Approx(vol.grid().voxel_size));
    REQUIRE(snap.sums.size() == vol.grid().count());
    for (size_t i = 0; i < snap.sums.size(); ++i) {
        CHECK(snap.sums[i] == float(double(vol.raw_sums()[i]) * kAccumInvScale));
        CHECK(snap.counts[i] == float(vol.raw_weights()[i]));
    }
    CHECK_THROWS_AS(read_tsdf_snapshot("/tmp/recon_missing.tsd1"), DataError);
}
