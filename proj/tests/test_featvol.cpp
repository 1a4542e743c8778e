#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "recon/errors.hpp"
#include "recon/featvol.hpp"
#include "recon/rng.hpp"

using namespace recon;

namespace {

const Intrinsics kCam{60.0, 60.0, 32.0, 24.0, 64, 48};

DepthImage random_depth(Rng& rng, double lo = 0.8, double hi = 1.6) {
    DepthImage img(kCam.width, kCam.height);
    for (float& d : img.data) d = float(lo + rng.next_double() * (hi - lo));
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

bool volume_equal(const FeatureVolume& a, const FeatureVolume& b) {
    return a.raw_sums() == b.raw_sums() && a.raw_counts() == b.raw_counts();
}

FeatureMap constant_map(float v0, float v1) {
    FeatureMap fmap(kCam.width, kCam.height, 2);
    for (int v = 0; v < fmap.height; ++v)
        for (int u = 0; u < fmap.width; ++u) {
            fmap.at(u, v, 0) = v0;
            fmap.at(u, v, 1) = v1;
        }
    return fmap;
}

}  // namespace

TEST_CASE("identity-depth features carry the depth value") {
    DepthImage depth(8, 6, 2.0f);
    const FeatureMap fmap = extract_features(depth, FeatureMode::IdentityDepth, 0);
    CHECK(fmap.channels == 1);
    for (float f : fmap.data) CHECK(f == 2.0f);
}

TEST_CASE("hashed features are deterministic and frame-dependent") {
    DepthImage depth(8, 6, 2.0f);
    const FeatureMap a = extract_features(depth, FeatureMode::Hashed, 42, 8);
    const FeatureMap b = extract_features(depth, FeatureMode::Hashed, 42, 8);
    CHECK(a.data == b.data);
    for (float f : a.data) {
        CHECK(f >= -1.0f);
        CHECK(f <= 1.0f);
    }

    // Distinct frame ids must produce distinct maps across a corpus.
    std::vector<FeatureMap> maps;
    for (int64_t frame = 0; frame < 50; ++frame)
        maps.push_back(extract_features(depth, FeatureMode::Hashed, frame, 4));
    for (size_t i = 0; i < maps.size(); ++i)
        for (size_t j = i + 1; j < maps.size(); ++j) CHECK(maps[i].data != maps[j].data);
}

TEST_CASE("running average over one voxel") {
    // A single voxel in front of the camera: features [2,4] then [4,8]
    // average to [3,6]; removing [4,8] restores [2,4] bitwise.
    FeatureVolume vol(GridSpec{{0, 0, 1.0}, 0.04, 1, 1, 1}, 2);
    vol.integrate(constant_map(2.0f, 4.0f), Pose::identity(), kCam, +1);
    const FeatureVolume single = vol;
    REQUIRE(vol.count_at(0) == 1);
    CHECK(vol.feature_at(0, 0) == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(vol.feature_at(0, 1) == doctest::Approx(4.0).epsilon(1e-9));

    vol.integrate(constant_map(4.0f, 8.0f), Pose::identity(), kCam, +1);
    REQUIRE(vol.count_at(0) == 2);
    CHECK(vol.feature_at(0, 0) == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(vol.feature_at(0, 1) == doctest::Approx(6.0).epsilon(1e-9));

    vol.integrate(constant_map(4.0f, 8.0f), Pose::identity(), kCam, -1);
    CHECK(volume_equal(vol, single));
}

TEST_CASE("back-projection fills the whole frustum") {
    // No depth masking: a voxel far behind the observed depth still samples.
    FeatureVolume vol(GridSpec{{0, 0, 3.0}, 0.04, 1, 1, 1}, 2);
    vol.integrate(constant_map(1.0f, -1.0f), Pose::identity(), kCam, +1);
    CHECK(vol.count_at(0) == 1);
}

TEST_CASE("integration order invariance for feature volumes") {
    Rng rng(31);
    const int n = 8;
    std::vector<FeatureMap> maps;
    std::vector<Pose> poses;
    for (int i = 0; i < n; ++i) {
        maps.push_back(extract_features(random_depth(rng), FeatureMode::Hashed, i, 3));
        poses.push_back(jittered_view(rng));
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    FeatureVolume a(test_grid(), 3), b(test_grid(), 3);
    for (int i : order) a.integrate(maps[i], poses[i], kCam, +1);
    std::reverse(order.begin(), order.end());
    for (int i : order) b.integrate(maps[i], poses[i], kCam, +1);
    CHECK(volume_equal(a, b));
}

TEST_CASE("de-integrating an earlier view matches integrate-without-it") {
    Rng rng(32);
    const int n = 6;
    std::vector<FeatureMap> maps;
    std::vector<Pose> poses;
    for (int i = 0; i < n; ++i) {
        maps.push_back(extract_features(random_depth(rng), FeatureMode::Hashed, i, 2));
        poses.push_back(jittered_view(rng));
    }
    FeatureVolume vol(test_grid(), 2);
    for (int i = 0; i < n; ++i) vol.integrate(maps[i], poses[i], kCam, +1);
    vol.integrate(maps[2], poses[2], kCam, -1);

    FeatureVolume oracle(test_grid(), 2);
    for (int i = 0; i < n; ++i)
        if (i != 2) oracle.integrate(maps[i], poses[i], kCam, +1);
    CHECK(volume_equal(vol, oracle));
}

TEST_CASE("tsdf-sample integration matches TsdfVolume bitwise") {
    Rng rng(33);
    const double trunc = 0.12;
    TsdfVolume tsdf(test_grid(), trunc);
    FeatureVolume feat(test_grid(), 1);
    for (int i = 0; i < 6; ++i) {
        const DepthImage d = random_depth(rng);
        const Pose p = jittered_view(rng);
        tsdf.integrate(d, p, kCam, +1);
        feat.integrate_tsdf_samples(d, p, kCam, +1, trunc);
    }
    REQUIRE(feat.raw_counts() == tsdf.raw_weights());
    REQUIRE(feat.raw_sums() == tsdf.raw_sums());
    for (size_t i = 0; i < tsdf.grid().count(); ++i) {
        if (!tsdf.observed(i)) continue;
        CHECK(feat.feature_at(i, 0) == tsdf.tsdf_at(i));
    }
    const TriangleMesh ma = extract_mesh(tsdf);
    const TriangleMesh mb = extract_mesh(feat, 0);
    CHECK(ma.triangles == mb.triangles);
}

TEST_CASE("parallel and serial back-projection agree bitwise") {
    Rng rng(34);
    FeatureVolume a(test_grid(), 4), b(test_grid(), 4);
    for (int i = 0; i < 3; ++i) {
        const FeatureMap m = extract_features(random_depth(rng), FeatureMode::Hashed, i, 4);
        const Pose p = jittered_view(rng);
        a.integrate(m, p, kCam, +1);
        b.integrate_reference(m, p, kCam, +1);
    }
    CHECK(volume_equal(a, b));
}

TEST_CASE("negative count is a protocol violation") {
    FeatureVolume vol(test_grid(), 2);
    CHECK_THROWS_AS(vol.integrate(constant_map(1.0f, 1.0f), Pose::identity(), kCam, -1),
                    ProtocolViolation);
}

TEST_CASE("channel and size mismatches are rejected") {
    FeatureVolume vol(test_grid(), 3);
    CHECK_THROWS_AS(vol.integrate(constant_map(1.0f, 1.0f), Pose::identity(), kCam, +1),
                    DataError);
    CHECK_THROWS_AS(vol.integrate_tsdf_samples(DepthImage(4, 4, 1.0f), Pose::identity(), kCam,
                                               +1, 0.12),
                    DataError);
    CHECK_THROWS_AS(extract_mesh(vol, 5), DataError);
}

TEST_CASE("featvol snapshot round trip") {
    Rng rng(35);
    FeatureVolume vol(test_grid(), 2);
    vol.integrate(extract_features(random_depth(rng), FeatureMode::Hashed, 9, 2),
                  jittered_view(rng), kCam, +1);
    const std::string path = "/tmp/recon_test_vol.fvl1";
    write_featvol_snapshot(path, vol);
    const VolumeSnapshot snap = read_featvol_snapshot(path);
    CHECK(snap.channels == 2);
    CHECK(snap.grid.nx == vol.grid().nx);
    REQUIRE(snap.sums.size() == vol.grid().count() * 2);
    for (size_t i = 0; i < vol.grid().count(); ++i) {
        CHECK(snap.counts[i] == float(vol.raw_counts()[i]));
        for (int c = 0; c < 2; ++c)
            CHECK(snap.sums[i * 2 + c] ==
                  float(double(vol.raw_sums()[i * 2 + c]) * kAccumInvScale));
    }
}
