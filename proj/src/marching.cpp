#include "recon/marching.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include "recon/errors.hpp"

namespace recon {

GridSpec GridSpec::from_bounds(const Vec3& min, const Vec3& max, double voxel_size) {
    if (!(voxel_size > 0)) throw DataError("grid: voxel size must be positive");
    if (!(max.x > min.x && max.y > min.y && max.z > min.z))
        throw DataError("grid: empty bounds");
    GridSpec g;
    g.origin = min;
    g.voxel_size = voxel_size;
    g.nx = int(std::llround((max.x - min.x) / voxel_size)) + 1;
    g.ny = int(std::llround((max.y - min.y) / voxel_size)) + 1;
    g.nz = int(std::llround((max.z - min.z) / voxel_size)) + 1;
    return g;
}

namespace {

struct Face {
    int corners[4];  // cyclic order
    int edges[4];    // edges[i] joins corners[i] and corners[(i+1)%4]
};

constexpr Face kFaces[6] = {
    {{0, 2, 6, 4}, {4, 10, 6, 8}},   // x = 0
    {{1, 3, 7, 5}, {5, 11, 7, 9}},   // x = 1
    {{0, 1, 5, 4}, {0, 9, 2, 8}},    // y = 0
    {{2, 3, 7, 6}, {1, 11, 3, 10}},  // y = 1
    {{0, 1, 3, 2}, {0, 5, 1, 4}},    // z = 0
    {{4, 5, 7, 6}, {2, 7, 3, 6}},    // z = 1
};

Vec3 corner_pos(int c) {
    return {double(c & 1), double((c >> 1) & 1), double((c >> 2) & 1)};
}

Vec3 edge_midpoint(int e) {
    return (corner_pos(CubeTable::edge_corner[e][0]) + corner_pos(CubeTable::edge_corner[e][1])) *
           0.5;
}

CubeTable build_table() {
    CubeTable table;
    for (int config = 1; config < 255; ++config) {
        const auto inside = [&](int c) { return (config >> c) & 1; };
        const auto active = [&](int e) {
            return inside(CubeTable::edge_corner[e][0]) != inside(CubeTable::edge_corner[e][1]);
        };

        // Two segment partners per active edge, one from each adjacent face.
        int partner[12][2];
        int partner_count[12] = {};
        const auto link = [&](int a, int b) {
            partner[a][partner_count[a]++] = b;
            partner[b][partner_count[b]++] = a;
        };
        for (const Face& f : kFaces) {
            int act[4], n_act = 0;
            for (int i = 0; i < 4; ++i)
                if (active(f.edges[i])) act[n_act++] = i;
            if (n_act == 2) {
                link(f.edges[act[0]], f.edges[act[1]]);
            } else if (n_act == 4) {
                // Diagonal face: one segment per inside corner, cutting it off.
                for (int p = 0; p < 4; ++p)
                    if (inside(f.corners[p])) link(f.edges[(p + 3) % 4], f.edges[p]);
            }
        }

        // Collect cycles.
        bool used[12] = {};
        for (int start = 0; start < 12; ++start) {
            if (!active(start) || used[start]) continue;
            std::vector<int> cycle;
            int prev = -1, cur = start;
            do {
                cycle.push_back(cur);
                used[cur] = true;
                const int next = partner[cur][0] == prev ? partner[cur][1] : partner[cur][0];
                prev = cur;
                cur = next;
            } while (cur != start);

            // Orient so triangle normals point from inside (negative) to outside.
            Vec3 area{0, 0, 0}, centroid{0, 0, 0}, inner{0, 0, 0};
            for (size_t i = 0; i < cycle.size(); ++i) {
                const Vec3 a = edge_midpoint(cycle[i]);
                const Vec3 b = edge_midpoint(cycle[(i + 1) % cycle.size()]);
                area += a.cross(b);
                centroid += a;
                const int e = cycle[i];
                const int in_corner = inside(CubeTable::edge_corner[e][0])
                                          ? CubeTable::edge_corner[e][0]
                                          : CubeTable::edge_corner[e][1];
                inner += corner_pos(in_corner);
            }
            centroid = centroid * (1.0 / double(cycle.size()));
            inner = inner * (1.0 / double(cycle.size()));
            if (area.dot(centroid - inner) < 0.0) std::reverse(cycle.begin(), cycle.end());

            for (size_t i = 1; i + 1 < cycle.size(); ++i)
                table.tris[config].push_back({cycle[0], cycle[i], cycle[i + 1]});
        }
    }
    return table;
}

}  // namespace

const CubeTable& CubeTable::instance() {
    static const CubeTable table = build_table();
    return table;
}

void write_mesh_ply(const std::string& path, const TriangleMesh& mesh) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw DataError("cannot open for writing: " + path);
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> guard(f, std::fclose);
    std::fprintf(f,
                 "ply\nformat ascii 1.0\nelement vertex %zu\n"
                 "property float x\nproperty float y\nproperty float z\n"
                 "element face %zu\nproperty list uchar int vertex_indices\nend_header\n",
                 mesh.vertices.size(), mesh.triangles.size());
    for (const Vec3& v : mesh.vertices)
        std::fprintf(f, "%.9g %.9g %.9g\n", v.x, v.y, v.z);
    for (const auto& t : mesh.triangles)
        std::fprintf(f, "3 %d %d %d\n", t[0], t[1], t[2]);
}

TriangleMesh read_mesh_ply(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "ply") throw DataError("not a PLY file: " + path);
    size_t n_vertex = 0, n_face = 0;
    std::string element;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "element") {
            size_t n;
            ls >> element >> n;
            if (element == "vertex") n_vertex = n;
            else if (element == "face") n_face = n;
        } else if (tok == "end_header") {
            break;
        } else if (tok == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt != "ascii") throw DataError("only ascii PLY supported: " + path);
        }
    }
    TriangleMesh mesh;
    mesh.vertices.reserve(n_vertex);
    for (size_t i = 0; i < n_vertex; ++i) {
        if (!std::getline(in, line)) throw DataError("truncated PLY vertices: " + path);
        Vec3 v;
        if (std::sscanf(line.c_str(), "%lf %lf %lf", &v.x, &v.y, &v.z) != 3)
            throw DataError("bad PLY vertex line: " + path);
        if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z))
            throw DataError("non-finite PLY vertex: " + path);
        mesh.vertices.push_back(v);
    }
    mesh.triangles.reserve(n_face);
    for (size_t i = 0; i < n_face; ++i) {
        if (!std::getline(in, line)) throw DataError("truncated PLY faces: " + path);
        int n, a, b, c;
        if (std::sscanf(line.c_str(), "%d %d %d %d", &n, &a, &b, &c) != 4 || n != 3)
            throw DataError("bad PLY face line (triangles only): " + path);
        for (int idx : {a, b, c})
            if (idx < 0 || size_t(idx) >= mesh.vertices.size())
                throw DataError("PLY face index out of range: " + path);
        mesh.triangles.push_back({a, b, c});
    }
    return mesh;
}

}  // namespace recon
