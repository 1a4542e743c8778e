#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace recon {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double squared_norm() const { return dot(*this); }
    double norm() const { return std::sqrt(squared_norm()); }
    Vec3 normalized() const {
        const double n = norm();
        return {x / n, y / n, z / n};
    }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

/// Row-major 3x3 matrix.
struct Mat3 {
    double m[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Mat3 identity() { return {}; }

    double& at(int r, int c) { return m[r * 3 + c]; }
    double at(int r, int c) const { return m[r * 3 + c]; }

    Vec3 col(int c) const { return {m[c], m[3 + c], m[6 + c]}; }
    Vec3 row(int r) const { return {m[r * 3], m[r * 3 + 1], m[r * 3 + 2]}; }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                r.at(i, j) = at(i, 0) * o.at(0, j) + at(i, 1) * o.at(1, j) + at(i, 2) * o.at(2, j);
        return r;
    }
    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r.at(i, j) = at(j, i);
        return r;
    }
    double trace() const { return m[0] + m[4] + m[8]; }
    double determinant() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }
};

Mat3 rotation_x(double radians);
Mat3 rotation_y(double radians);
Mat3 rotation_z(double radians);
Mat3 rotation_axis_angle(const Vec3& axis, double radians);

/// Rigid transform mapping camera coordinates to world coordinates when used
/// as a camera pose. Rotation is kept orthonormal with determinant +1.
struct Pose {
    Mat3 rotation;
    Vec3 translation;

    static Pose identity() { return {}; }
    static Pose translate(double x, double y, double z) { return {Mat3::identity(), {x, y, z}}; }

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
};

Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& p);

/// True when the rotation is orthonormal with determinant +1 within tol.
bool is_rigid(const Pose& p, double tol = 1e-9);

/// Euclidean distance between the two translations, in meters.
double translation_distance(const Pose& a, const Pose& b);

/// Geodesic angle of the relative rotation, in degrees, in [0, 180].
double rotation_angle_deg(const Pose& a, const Pose& b);

/// Pose-space interpolation: rotation along the geodesic, translation linear.
/// alpha = 0 gives a, alpha = 1 gives b exactly.
Pose interpolate(const Pose& a, const Pose& b, double alpha);

struct Intrinsics {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;
};

/// Throws DataError when focal lengths or the principal point are out of range.
void validate(const Intrinsics& k);

struct DepthImage {
    int width = 0, height = 0;
    std::vector<float> data;  // row-major; <= 0 or non-finite marks an invalid pixel

    DepthImage() = default;
    DepthImage(int w, int h, float fill = 0.0f) : width(w), height(h), data(size_t(w) * h, fill) {}

    float at(int u, int v) const { return data[size_t(v) * width + u]; }
    float& at(int u, int v) { return data[size_t(v) * width + u]; }
    static bool valid_depth(float d) { return std::isfinite(d) && d > 0.0f; }
};

struct Projection {
    double u = 0, v = 0, z = 0;
};

/// Pinhole projection of a world point through cam_from_world. Empty when the
/// point is behind the camera or projects outside [0,width) x [0,height).
std::optional<Projection> project(const Vec3& point_world, const Pose& cam_from_world,
                                  const Intrinsics& k);

/// Inverse of project for a pixel observation at depth z (meters).
Vec3 backproject(double u, double v, double z, const Pose& cam_from_world, const Intrinsics& k);

/// Nearest pixel index for continuous image coordinates; empty when the
/// rounded index falls outside the image. Shared by all volume kernels.
struct PixelIndex {
    int u = 0, v = 0;
};
inline std::optional<PixelIndex> nearest_pixel(double u, double v, const Intrinsics& k) {
    const int ui = int(std::lround(u));
    const int vi = int(std::lround(v));
    if (ui < 0 || ui >= k.width || vi < 0 || vi >= k.height) return std::nullopt;
    return PixelIndex{ui, vi};
}

// Depth file I/O, magic "DPT1": u32 width, u32 height, then width*height
// little-endian float32 depths in meters, row-major. Invalid = 0.
void write_depth(const std::string& path, const DepthImage& img);
DepthImage read_depth(const std::string& path);

}  // namespace recon
