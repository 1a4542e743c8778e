#include <doctest.h>

#include <cmath>
#include <map>

#include "recon/marching.hpp"
#include "recon/rng.hpp"
#include "recon/tsdf.hpp"

using namespace recon;

namespace {

GridSpec small_grid(int n, double vs, Vec3 origin) { return GridSpec{origin, vs, n, n, n}; }

// Analytic field sampler with every sample observed.
struct FieldSampler {
    const GridSpec* grid;
    double (*field)(const Vec3&);
    double value(int ix, int iy, int iz) const { return field(grid->position(ix, iy, iz)); }
    bool observed(int, int, int) const { return true; }
};

double sphere_field(const Vec3& p) { return (p - Vec3{0, 0, 0}).norm() - 0.5; }
double plane_field(const Vec3& p) { return p.z - 0.5; }

}  // namespace

TEST_CASE("cube table covers all mixed configurations") {
    const CubeTable& table = CubeTable::instance();
    CHECK(table.tris[0].empty());
    CHECK(table.tris[255].empty());
    for (int c = 1; c < 255; ++c) {
        CHECK(!table.tris[c].empty());
        for (const auto& t : table.tris[c]) {
            for (int e : t) {
                CHECK(e >= 0);
                CHECK(e < 12);
                // every referenced edge must cross the surface
                const bool a = (c >> CubeTable::edge_corner[e][0]) & 1;
                const bool b = (c >> CubeTable::edge_corner[e][1]) & 1;
                CHECK(a != b);
            }
        }
    }
}

TEST_CASE("isosurface of a linear field is exact") {
    const GridSpec grid = small_grid(26, 0.04, {0, 0, 0});
    const TriangleMesh mesh = extract_isosurface(grid, FieldSampler{&grid, plane_field}, false);
    REQUIRE(!mesh.empty());
    for (const Vec3& v : mesh.vertices) CHECK(std::abs(v.z - 0.5) <= 1e-6);
}

TEST_CASE("sphere surface lands within a voxel of the true radius") {
    const GridSpec grid = small_grid(40, 0.04, {-0.78, -0.78, -0.78});
    const TriangleMesh mesh = extract_isosurface(grid, FieldSampler{&grid, sphere_field}, true);
    REQUIRE(mesh.vertices.size() > 100);
    for (const Vec3& v : mesh.vertices) CHECK(std::abs(v.norm() - 0.5) <= grid.voxel_size);
}

TEST_CASE("closed blob produces a watertight mesh") {
    // Smooth random blob strictly inside the grid: every boundary sample is
    // positive, so the surface must close and every edge pairs two triangles.
    const GridSpec grid = small_grid(20, 0.1, {-1.0, -1.0, -1.0});
    struct Blob {
        const GridSpec* grid;
        double value(int ix, int iy, int iz) const {
            const Vec3 p = grid->position(ix, iy, iz);
            const double r = p.norm();
            return r - (0.55 + 0.18 * std::sin(3 * p.x) * std::cos(2 * p.y) +
                        0.12 * std::sin(2.5 * p.z));
        }
        bool observed(int, int, int) const { return true; }
    };
    const TriangleMesh mesh = extract_isosurface(grid, Blob{&grid}, true);
    REQUIRE(!mesh.empty());

    std::map<std::pair<int, int>, int> edge_uses;
    for (const auto& t : mesh.triangles)
        for (int i = 0; i < 3; ++i) {
            int a = t[i], b = t[(i + 1) % 3];
            if (a > b) std::swap(a, b);
            if (a != b) ++edge_uses[{a, b}];
        }
    for (const auto& [edge, uses] : edge_uses) CHECK(uses == 2);
}

TEST_CASE("parallel and serial extraction agree bitwise") {
    const GridSpec grid = small_grid(32, 0.05, {-0.8, -0.8, -0.8});
    const FieldSampler s{&grid, sphere_field};
    const TriangleMesh a = extract_isosurface(grid, s, true);
    const TriangleMesh b = extract_isosurface(grid, s, false);
    REQUIRE(a.vertices.size() == b.vertices.size());
    REQUIRE(a.triangles.size() == b.triangles.size());
    for (size_t i = 0; i < a.vertices.size(); ++i) {
        CHECK(a.vertices[i].x == b.vertices[i].x);
        CHECK(a.vertices[i].y == b.vertices[i].y);
        CHECK(a.vertices[i].z == b.vertices[i].z);
    }
    CHECK(a.triangles == b.triangles);
}

TEST_CASE("ply round trip") {
    const GridSpec grid = small_grid(16, 0.08, {-0.6, -0.6, -0.6});
    const TriangleMesh mesh = extract_isosurface(grid, FieldSampler{&grid, sphere_field}, false);
    const std::string path = "/tmp/recon_test_mesh.ply";
    write_mesh_ply(path, mesh);
    const TriangleMesh back = read_mesh_ply(path);
    REQUIRE(back.vertices.size() == mesh.vertices.size());
    REQUIRE(back.triangles == mesh.triangles);
    for (size_t i = 0; i < mesh.vertices.size(); ++i)
        CHECK((back.vertices[i] - mesh.vertices[i]).norm() <= 1e-6);
}

TEST_CASE("empty and degenerate grids") {
    const GridSpec grid = small_grid(8, 0.1, {0, 0, 0});
    struct Positive {
        double value(int, int, int) const { return 1.0; }
        bool observed(int, int, int) const { return true; }
    };
    CHECK(extract_isosurface(grid, Positive{}, true).empty());

    GridSpec flat{{0, 0, 0}, 0.1, 8, 8, 1};
    CHECK(extract_isosurface(flat, Positive{}, true).empty());
}
