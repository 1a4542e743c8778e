#include "recon/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "recon/errors.hpp"
#include "recon/rng.hpp"

namespace recon {

std::vector<Vec3> point_sample(const TriangleMesh& mesh, int n, uint64_t seed) {
    std::vector<Vec3> points;
    if (mesh.triangles.empty() || n <= 0) return points;

    std::vector<double> cum_area(mesh.triangles.size());
    double total = 0.0;
    for (size_t i = 0; i < mesh.triangles.size(); ++i) {
        const auto& t = mesh.triangles[i];
        const Vec3 a = mesh.vertices[size_t(t[0])];
        const Vec3 ab = mesh.vertices[size_t(t[1])] - a;
        const Vec3 ac = mesh.vertices[size_t(t[2])] - a;
        total += 0.5 * ab.cross(ac).norm();
        cum_area[i] = total;
    }
    if (!(total > 0.0)) return points;

    points.reserve(size_t(n));
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        const double pick = rng.next_double() * total;
        const size_t tri =
            size_t(std::lower_bound(cum_area.begin(), cum_area.end(), pick) - cum_area.begin());
        const auto& t = mesh.triangles[std::min(tri, mesh.triangles.size() - 1)];
        const Vec3 a = mesh.vertices[size_t(t[0])];
        const Vec3 b = mesh.vertices[size_t(t[1])];
        const Vec3 c = mesh.vertices[size_t(t[2])];
        const double r1 = std::sqrt(rng.next_double());
        const double r2 = rng.next_double();
        const double wa = 1.0 - r1, wb = r1 * (1.0 - r2), wc = r1 * r2;
        points.push_back(a * wa + b * wb + c * wc);
    }
    return points;
}

namespace {

/// Uniform hash grid for nearest-neighbor distance queries over a fixed
/// point set. Queries are independent, so they parallelize cleanly.
class PointGrid {
public:
    PointGrid(const std::vector<Vec3>& points, double cell) : points_(points), cell_(cell) {
        lo_ = {0, 0, 0};
        if (points.empty()) return;
        Vec3 hi = points[0];
        lo_ = points[0];
        for (const Vec3& p : points) {
            lo_ = {std::min(lo_.x, p.x), std::min(lo_.y, p.y), std::min(lo_.z, p.z)};
            hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
        }
        nx_ = int((hi.x - lo_.x) / cell_) + 1;
        ny_ = int((hi.y - lo_.y) / cell_) + 1;
        nz_ = int((hi.z - lo_.z) / cell_) + 1;
        const size_t n_cells = size_t(nx_) * ny_ * nz_;
        std::vector<int> counts(n_cells, 0);
        std::vector<int> cell_of(points.size());
        for (size_t i = 0; i < points.size(); ++i) {
            cell_of[i] = cell_index(points[i]);
            ++counts[size_t(cell_of[i])];
        }
        start_.assign(n_cells + 1, 0);
        for (size_t c = 0; c < n_cells; ++c) start_[c + 1] = start_[c] + counts[c];
        entries_.resize(points.size());
        std::vector<int> cursor(start_.begin(), start_.end() - 1);
        for (size_t i = 0; i < points.size(); ++i)
            entries_[size_t(cursor[size_t(cell_of[i])]++)] = int(i);
    }

    /// Distance to the nearest stored point, capped at clip.
    double nearest(const Vec3& q, double clip) const {
        if (points_.empty()) return clip;
        const int cx = coord(q.x - lo_.x), cy = coord(q.y - lo_.y), cz = coord(q.z - lo_.z);
        double best_sq = clip * clip;
        const int max_ring = int(clip / cell_) + 2;
        for (int ring = 0; ring <= max_ring; ++ring) {
            const double ring_min = double(ring - 1) * cell_;
            if (ring_min > 0.0 && ring_min * ring_min >= best_sq) break;
            for (int dz = -ring; dz <= ring; ++dz) {
                const int z = cz + dz;
                if (z < 0 || z >= nz_) continue;
                for (int dy = -ring; dy <= ring; ++dy) {
                    const int y = cy + dy;
                    if (y < 0 || y >= ny_) continue;
                    const bool face = std::abs(dz) == ring || std::abs(dy) == ring;
                    const int step = face ? 1 : (ring == 0 ? 1 : 2 * ring);
                    for (int dx = -ring; dx <= ring; dx += step) {
                        const int x = cx + dx;
                        if (x < 0 || x >= nx_) continue;
                        const size_t cell = (size_t(z) * ny_ + y) * nx_ + x;
                        for (int e = start_[cell]; e < start_[cell + 1]; ++e) {
                            const double d = (points_[size_t(entries_[size_t(e)])] - q).squared_norm();
                            if (d < best_sq) best_sq = d;
                        }
                    }
                }
            }
        }
        return std::sqrt(best_sq);
    }

private:
    int coord(double d) const { return int(d / cell_); }
    int cell_index(const Vec3& p) const {
        const int x = std::clamp(coord(p.x - lo_.x), 0, nx_ - 1);
        const int y = std::clamp(coord(p.y - lo_.y), 0, ny_ - 1);
        const int z = std::clamp(coord(p.z - lo_.z), 0, nz_ - 1);
        return int((size_t(z) * ny_ + y) * nx_ + x);
    }

    const std::vector<Vec3>& points_;
    double cell_;
    Vec3 lo_;
    int nx_ = 0, ny_ = 0, nz_ = 0;
    std::vector<int> start_;
    std::vector<int> entries_;
};

void nearest_all(const std::vector<Vec3>& queries, const PointGrid& grid, double clip,
                 std::vector<double>& out) {
    out.resize(queries.size());
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < int64_t(queries.size()); ++i)
        out[size_t(i)] = grid.nearest(queries[size_t(i)], clip);
}

}  // namespace

MetricsReport evaluate(const TriangleMesh& pred, const TriangleMesh& gt, const EvalParams& p) {
    if (gt.empty()) throw DataError("evaluate: empty ground-truth mesh");
    if (!(p.inlier_threshold > 0) || p.samples <= 0 || !(p.clip > 0))
        throw DataError("evaluate: bad parameters");

    const std::vector<Vec3> gt_pts = point_sample(gt, p.samples, p.gt_seed);
    if (gt_pts.empty()) throw DataError("evaluate: ground-truth mesh has zero area");
    const std::vector<Vec3> pred_pts = point_sample(pred, p.samples, p.pred_seed);

    MetricsReport r;
    if (pred_pts.empty()) {
        // Nothing reconstructed: worst-case accuracy, zero coverage.
        r.accuracy = p.clip;
        r.completeness = p.clip;
        r.chamfer = (r.accuracy + r.completeness) / 2.0;
        return r;
    }

    const double cell = std::max(p.inlier_threshold, 0.02);
    const PointGrid gt_grid(gt_pts, cell);
    const PointGrid pred_grid(pred_pts, cell);

    std::vector<double> d_pred, d_gt;
    nearest_all(pred_pts, gt_grid, p.clip, d_pred);
    nearest_all(gt_pts, pred_grid, p.clip, d_gt);

    double acc_sum = 0.0;
    int64_t inliers_pred = 0;
    for (double d : d_pred) {
        acc_sum += d;
        if (d < p.inlier_threshold) ++inliers_pred;
    }
    double comp_sum = 0.0;
    int64_t inliers_gt = 0;
    for (double d : d_gt) {
        comp_sum += d;
        if (d < p.inlier_threshold) ++inliers_gt;
    }

    r.accuracy = acc_sum / double(d_pred.size());
    r.completeness = comp_sum / double(d_gt.size());
    r.chamfer = (r.accuracy + r.completeness) / 2.0;
    r.precision = double(inliers_pred) / double(d_pred.size());
    r.recall = double(inliers_gt) / double(d_gt.size());
    r.fscore = (r.precision + r.recall) > 0.0
                   ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
                   : 0.0;
    return r;
}

TriangleMesh ground_truth_at(const std::vector<DepthView>& views, const Intrinsics& k,
                             const GridSpec& grid, double truncation) {
    TsdfVolume vol(grid, truncation);
    for (const DepthView& view : views) {
        if (!view.depth) throw DataError("ground_truth_at: null depth view");
        vol.integrate(*view.depth, view.camera_pose, k, +1);
    }
    return extract_mesh(vol);
}

}  // namespace recon
