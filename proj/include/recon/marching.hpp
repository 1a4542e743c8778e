#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "recon/geometry.hpp"

namespace recon {

/// Axis-aligned sample grid: samples sit at origin + index * voxel_size.
struct GridSpec {
    Vec3 origin;
    double voxel_size = 0.04;
    int nx = 0, ny = 0, nz = 0;

    size_t count() const { return size_t(nx) * ny * nz; }
    size_t index(int ix, int iy, int iz) const {
        return (size_t(iz) * ny + iy) * nx + ix;
    }
    Vec3 position(int ix, int iy, int iz) const {
        return {origin.x + voxel_size * ix, origin.y + voxel_size * iy,
                origin.z + voxel_size * iz};
    }
    Vec3 max_corner() const { return position(nx - 1, ny - 1, nz - 1); }

    /// Smallest grid covering [min, max] at the given spacing.
    static GridSpec from_bounds(const Vec3& min, const Vec3& max, double voxel_size);
};

struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;

    bool empty() const { return triangles.empty(); }
};

/// Isosurface triangulation table for the 256 corner-sign configurations.
/// Generated once by walking segment cycles over the cube faces; ambiguous
/// faces are resolved by always separating the inside corners, which keeps
/// adjacent cubes crack-free.
struct CubeTable {
    std::vector<std::array<int, 3>> tris[256];  // triples of cube-edge ids
    // Edge endpoints as corner ids; corner i sits at ((i&1), (i>>1)&1, (i>>2)&1).
    static constexpr int edge_corner[12][2] = {
        {0, 1}, {2, 3}, {4, 5}, {6, 7},  // along x
        {0, 2}, {1, 3}, {4, 6}, {5, 7},  // along y
        {0, 4}, {1, 5}, {2, 6}, {3, 7},  // along z
    };
    static const CubeTable& instance();
};

// Mesh file I/O: ASCII PLY with float vertex positions and integer face lists.
void write_mesh_ply(const std::string& path, const TriangleMesh& mesh);
TriangleMesh read_mesh_ply(const std::string& path);

namespace detail {

struct CubeTri {
    uint64_t edge_key[3];
};

// Global key of a cube edge: owning sample index * 3 + axis.
inline uint64_t edge_key(const GridSpec& g, int ix, int iy, int iz, int edge) {
    static constexpr int corner_off[8][3] = {
        {0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0},
        {0, 0, 1}, {1, 0, 1}, {0, 1, 1}, {1, 1, 1},
    };
    const int a = CubeTable::edge_corner[edge][0];
    const int axis = edge / 4;
    const int gx = ix + corner_off[a][0];
    const int gy = iy + corner_off[a][1];
    const int gz = iz + corner_off[a][2];
    return uint64_t(g.index(gx, gy, gz)) * 3 + axis;
}

template <typename Sampler>
void polygonize_slab(const GridSpec& g, const Sampler& s, int iz, std::vector<CubeTri>& out) {
    const CubeTable& table = CubeTable::instance();
    for (int iy = 0; iy + 1 < g.ny; ++iy) {
        for (int ix = 0; ix + 1 < g.nx; ++ix) {
            bool ok = true;
            int config = 0;
            for (int c = 0; c < 8; ++c) {
                const int gx = ix + (c & 1), gy = iy + ((c >> 1) & 1), gz = iz + ((c >> 2) & 1);
                if (!s.observed(gx, gy, gz)) { ok = false; break; }
                if (s.value(gx, gy, gz) < 0.0) config |= 1 << c;
            }
            if (!ok || config == 0 || config == 255) continue;
            for (const auto& t : table.tris[config]) {
                CubeTri ct;
                for (int i = 0; i < 3; ++i) ct.edge_key[i] = edge_key(g, ix, iy, iz, t[i]);
                out.push_back(ct);
            }
        }
    }
}

}  // namespace detail

/// Shared marching-cubes driver. Sampler must provide:
///   double value(int ix, int iy, int iz) const;   // iso field, surface at 0
///   bool observed(int ix, int iy, int iz) const;  // cubes with any unobserved corner are skipped
/// Output is identical for parallel and serial execution: the cube pass runs
/// per z-slab and the stitch pass walks slabs in order.
template <typename Sampler>
TriangleMesh extract_isosurface(const GridSpec& grid, const Sampler& s, bool parallel = true) {
    const int nslabs = grid.nz > 1 ? grid.nz - 1 : 0;
    std::vector<std::vector<detail::CubeTri>> slabs(static_cast<size_t>(nslabs));
    if (parallel) {
#pragma omp parallel for schedule(dynamic)
        for (int iz = 0; iz < nslabs; ++iz) detail::polygonize_slab(grid, s, iz, slabs[iz]);
    } else {
        for (int iz = 0; iz < nslabs; ++iz) detail::polygonize_slab(grid, s, iz, slabs[iz]);
    }

    TriangleMesh mesh;
    std::unordered_map<uint64_t, int> vertex_of_edge;
    const size_t plane = size_t(grid.nx) * grid.ny;
    for (const auto& slab : slabs) {
        for (const detail::CubeTri& t : slab) {
            std::array<int, 3> tri{};
            for (int i = 0; i < 3; ++i) {
                const uint64_t key = t.edge_key[i];
                auto it = vertex_of_edge.find(key);
                if (it == vertex_of_edge.end()) {
                    const size_t base = size_t(key / 3);
                    const int axis = int(key % 3);
                    const int ix = int(base % grid.nx);
                    const int iy = int((base / grid.nx) % grid.ny);
                    const int iz = int(base / plane);
                    const double v0 = s.value(ix, iy, iz);
                    const double v1 = s.value(axis == 0 ? ix + 1 : ix, axis == 1 ? iy + 1 : iy,
                                              axis == 2 ? iz + 1 : iz);
                    const double frac = v0 / (v0 - v1);
                    Vec3 p = grid.position(ix, iy, iz);
                    const double off = frac * grid.voxel_size;
                    if (axis == 0) p.x += off;
                    else if (axis == 1) p.y += off;
                    else p.z += off;
                    it = vertex_of_edge.emplace(key, int(mesh.vertices.size())).first;
                    mesh.vertices.push_back(p);
                }
                tri[i] = it->second;
            }
            mesh.triangles.push_back(tri);
        }
    }
    return mesh;
}

}  // namespace recon
