#include "recon/geometry.hpp"

#include <cstdio>
#include <cstring>
#include <memory>
#include <numbers>

#include "recon/errors.hpp"

namespace recon {

Mat3 rotation_x(double radians) {
    const double c = std::cos(radians), s = std::sin(radians);
    Mat3 r;
    r.m[0] = 1; r.m[1] = 0; r.m[2] = 0;
    r.m[3] = 0; r.m[4] = c; r.m[5] = -s;
    r.m[6] = 0; r.m[7] = s; r.m[8] = c;
    return r;
}

Mat3 rotation_y(double radians) {
    const double c = std::cos(radians), s = std::sin(radians);
    Mat3 r;
    r.m[0] = c;  r.m[1] = 0; r.m[2] = s;
    r.m[3] = 0;  r.m[4] = 1; r.m[5] = 0;
    r.m[6] = -s; r.m[7] = 0; r.m[8] = c;
    return r;
}

Mat3 rotation_z(double radians) {
    const double c = std::cos(radians), s = std::sin(radians);
    Mat3 r;
    r.m[0] = c; r.m[1] = -s; r.m[2] = 0;
    r.m[3] = s; r.m[4] = c;  r.m[5] = 0;
    r.m[6] = 0; r.m[7] = 0;  r.m[8] = 1;
    return r;
}

Mat3 rotation_axis_angle(const Vec3& axis, double radians) {
    const Vec3 a = axis.normalized();
    const double c = std::cos(radians), s = std::sin(radians), t = 1.0 - c;
    Mat3 r;
    r.m[0] = t * a.x * a.x + c;
    r.m[1] = t * a.x * a.y - s * a.z;
    r.m[2] = t * a.x * a.z + s * a.y;
    r.m[3] = t * a.x * a.y + s * a.z;
    r.m[4] = t * a.y * a.y + c;
    r.m[5] = t * a.y * a.z - s * a.x;
    r.m[6] = t * a.x * a.z - s * a.y;
    r.m[7] = t * a.y * a.z + s * a.x;
    r.m[8] = t * a.z * a.z + c;
    return r;
}

Pose compose(const Pose& a, const Pose& b) {
    return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

Pose inverse(const Pose& p) {
    const Mat3 rt = p.rotation.transposed();
    return {rt, -(rt * p.translation)};
}

bool is_rigid(const Pose& p, double tol) {
    const Mat3 g = p.rotation.transposed() * p.rotation;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            const double want = (i == j) ? 1.0 : 0.0;
            if (std::abs(g.at(i, j) - want) > tol) return false;
        }
    if (std::abs(p.rotation.determinant() - 1.0) > tol) return false;
    for (double v : {p.translation.x, p.translation.y, p.translation.z})
        if (!std::isfinite(v)) return false;
    return true;
}

double translation_distance(const Pose& a, const Pose& b) {
    return (a.translation - b.translation).norm();
}

namespace {

// Relative rotation decomposed as (cos, sin) of its angle; atan2 keeps the
// result accurate near 0 and 180 degrees.
double rotation_angle_rad(const Mat3& rel) {
    const double c = (rel.trace() - 1.0) * 0.5;
    const Vec3 s_vec{0.5 * (rel.at(2, 1) - rel.at(1, 2)),
                     0.5 * (rel.at(0, 2) - rel.at(2, 0)),
                     0.5 * (rel.at(1, 0) - rel.at(0, 1))};
    return std::atan2(s_vec.norm(), c);
}

// Axis-angle logarithm; valid away from 180 degrees, which the interpolation
// below never needs exactly.
Vec3 rotation_log(const Mat3& r) {
    const double angle = rotation_angle_rad(r);
    if (angle < 1e-12) return {0, 0, 0};
    const Vec3 s_vec{0.5 * (r.at(2, 1) - r.at(1, 2)),
                     0.5 * (r.at(0, 2) - r.at(2, 0)),
                     0.5 * (r.at(1, 0) - r.at(0, 1))};
    const double sn = s_vec.norm();
    if (sn < 1e-12) {
        // Near pi: recover the axis from the symmetric part.
        Vec3 axis{std::sqrt(std::max(0.0, (r.at(0, 0) + 1.0) * 0.5)),
                  std::sqrt(std::max(0.0, (r.at(1, 1) + 1.0) * 0.5)),
                  std::sqrt(std::max(0.0, (r.at(2, 2) + 1.0) * 0.5))};
        if (r.at(0, 1) + r.at(1, 0) < 0) axis.y = -axis.y;
        if (r.at(0, 2) + r.at(2, 0) < 0) axis.z = -axis.z;
        return axis.normalized() * angle;
    }
    return s_vec * (angle / sn);
}

}  // namespace

double rotation_angle_deg(const Pose& a, const Pose& b) {
    const Mat3 rel = a.rotation.transposed() * b.rotation;
    return rotation_angle_rad(rel) * (180.0 / std::numbers::pi);
}

Pose interpolate(const Pose& a, const Pose& b, double alpha) {
    if (alpha <= 0.0) return a;
    if (alpha >= 1.0) return b;
    const Mat3 rel = a.rotation.transposed() * b.rotation;
    const Vec3 w = rotation_log(rel);
    const double angle = w.norm();
    Mat3 r = a.rotation;
    if (angle > 0.0) r = a.rotation * rotation_axis_angle(w, alpha * angle);
    const Vec3 t = a.translation * (1.0 - alpha) + b.translation * alpha;
    return {r, t};
}

void validate(const Intrinsics& k) {
    if (!(k.fx > 0) || !(k.fy > 0))
        throw DataError("intrinsics: focal lengths must be positive");
    if (k.width <= 0 || k.height <= 0)
        throw DataError("intrinsics: image size must be positive");
    if (!(k.cx >= 0 && k.cx < k.width) || !(k.cy >= 0 && k.cy < k.height))
        throw DataError("intrinsics: principal point outside the image");
}

std::optional<Projection> project(const Vec3& point_world, const Pose& cam_from_world,
                                  const Intrinsics& k) {
    const Vec3 pc = cam_from_world.apply(point_world);
    if (pc.z <= 0.0) return std::nullopt;
    const double u = k.fx * pc.x / pc.z + k.cx;
    const double v = k.fy * pc.y / pc.z + k.cy;
    if (u < 0.0 || u >= k.width || v < 0.0 || v >= k.height) return std::nullopt;
    return Projection{u, v, pc.z};
}

Vec3 backproject(double u, double v, double z, const Pose& cam_from_world, const Intrinsics& k) {
    const Vec3 pc{(u - k.cx) / k.fx * z, (v - k.cy) / k.fy * z, z};
    return inverse(cam_from_world).apply(pc);
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_depth(const std::string& path, const DepthImage& img) {
    if (img.data.size() != size_t(img.width) * img.height)
        throw DataError("depth image: data length does not match dimensions");
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw DataError("cannot open for writing: " + path);
    const char magic[4] = {'D', 'P', 'T', '1'};
    const uint32_t w = uint32_t(img.width), h = uint32_t(img.height);
    if (std::fwrite(magic, 1, 4, f.get()) != 4 ||
        std::fwrite(&w, 4, 1, f.get()) != 1 ||
        std::fwrite(&h, 4, 1, f.get()) != 1 ||
        std::fwrite(img.data.data(), 4, img.data.size(), f.get()) != img.data.size())
        throw DataError("short write: " + path);
}

DepthImage read_depth(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw DataError("cannot open: " + path);
    char magic[4];
    uint32_t w = 0, h = 0;
    if (std::fread(magic, 1, 4, f.get()) != 4 || std::memcmp(magic, "DPT1", 4) != 0)
        throw DataError("not a DPT1 file: " + path);
    if (std::fread(&w, 4, 1, f.get()) != 1 || std::fread(&h, 4, 1, f.get()) != 1)
        throw DataError("truncated DPT1 header: " + path);
    if (w == 0 || h == 0 || w > 1u << 16 || h > 1u << 16)
        throw DataError("implausible DPT1 dimensions: " + path);
    DepthImage img(static_cast<int>(w), static_cast<int>(h));
    if (std::fread(img.data.data(), 4, img.data.size(), f.get()) != img.data.size())
        throw DataError("truncated DPT1 payload: " + path);
    return img;
}

}  // namespace recon
