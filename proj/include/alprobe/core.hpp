#pragma once

#include <array>
#include <cstdint>
#include <numbers>
#include <vector>

#include "alprobe/dual.hpp"
#include "alprobe/error.hpp"

namespace alp {

inline constexpr double kPi = std::numbers::pi;

template <class T>
struct Vec3T {
    T x{}, y{}, z{};

    Vec3T() = default;
    Vec3T(T x_, T y_, T z_) : x(x_), y(y_), z(z_) {}
    template <class U>
    explicit Vec3T(const Vec3T<U> &o) : x(o.x), y(o.y), z(o.z) {}

    T &operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
    const T &operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

    Vec3T &operator+=(const Vec3T &o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3T &operator-=(const Vec3T &o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    Vec3T &operator*=(const T &s) { x *= s; y *= s; z *= s; return *this; }
};

using Vec3 = Vec3T<double>;
// Linear RGB triple. Shares the vector arithmetic.
using Rgb = Vec3;

template <class T>
Vec3T<T> operator+(Vec3T<T> a, const Vec3T<T> &b) { return a += b; }
template <class T>
Vec3T<T> operator-(Vec3T<T> a, const Vec3T<T> &b) { return a -= b; }
template <class T>
Vec3T<T> operator-(const Vec3T<T> &a) { return {-a.x, -a.y, -a.z}; }
template <class T, Scalar S>
Vec3T<T> operator*(const Vec3T<T> &a, const S &s) { return {a.x * s, a.y * s, a.z * s}; }
template <class T, Scalar S>
Vec3T<T> operator*(const S &s, const Vec3T<T> &a) { return {a.x * s, a.y * s, a.z * s}; }
template <class T, Scalar S>
Vec3T<T> operator/(const Vec3T<T> &a, const S &s) { return {a.x / s, a.y / s, a.z / s}; }

// Component-wise product, used for colors.
template <class T>
Vec3T<T> hadamard(const Vec3T<T> &a, const Vec3T<T> &b) { return {a.x * b.x, a.y * b.y, a.z * b.z}; }

template <class T>
T dot(const Vec3T<T> &a, const Vec3T<T> &b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
template <class T>
Vec3T<T> cross(const Vec3T<T> &a, const Vec3T<T> &b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
template <class T>
T length(const Vec3T<T> &a) { return sqrt(dot(a, a)); }
template <class T>
Vec3T<T> normalize(const Vec3T<T> &a) { return a / length(a); }

template <class T>
Vec3 value(const Vec3T<T> &a) { return {value(a.x), value(a.y), value(a.z)}; }

// Direction with unit norm. Every constructing path renormalizes.
class UnitVec3 {
public:
    UnitVec3() : v_(0.0, 0.0, 1.0) {}
    // Throws InvalidArgument for a zero or non-finite vector.
    static UnitVec3 normalize(const Vec3 &v);
    // Trusts the caller that |v| is already 1 (checked in debug builds).
    static UnitVec3 from_unit(const Vec3 &v);

    const Vec3 &vec() const { return v_; }
    double x() const { return v_.x; }
    double y() const { return v_.y; }
    double z() const { return v_.z; }
    UnitVec3 operator-() const { return from_unit(-v_); }
    operator const Vec3 &() const { return v_; }

private:
    explicit UnitVec3(const Vec3 &v) : v_(v) {}
    Vec3 v_;
};

struct Mat3 {
    // Row-major.
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    double operator()(int r, int c) const { return m[r * 3 + c]; }
    double &operator()(int r, int c) { return m[r * 3 + c]; }

    template <class T>
    Vec3T<T> operator*(const Vec3T<T> &v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Mat3 operator*(const Mat3 &o) const;
    Mat3 transposed() const;
    static Mat3 from_rows(const Vec3 &r0, const Vec3 &r1, const Vec3 &r2);
};

struct Quaternion {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    static Quaternion identity() { return {}; }
    static Quaternion from_axis_angle(const Vec3 &axis, double angle);
    // Rotation by the rotation vector omega (axis * angle).
    static Quaternion from_rotation_vector(const Vec3 &omega);
    static Quaternion from_matrix(const Mat3 &r);

    double norm() const;
    Quaternion normalized() const;
    Quaternion conjugate() const { return {w, -x, -y, -z}; }
    // Sign representative with w >= 0.
    Quaternion canonical() const;
    Mat3 to_matrix() const;
    double dot(const Quaternion &o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }

    Quaternion operator-() const { return {-w, -x, -y, -z}; }
};

// Hamilton product; (a * b) rotates by b first, then a.
Quaternion operator*(const Quaternion &a, const Quaternion &b);

Vec3 rotate(const Quaternion &q, const Vec3 &v);
// min(|q - r|, |q + r|): respects the double cover.
double quaternion_distance(const Quaternion &q, const Quaternion &r);
// Geodesic angle in radians between the two rotations.
double rotation_angle(const Quaternion &a, const Quaternion &b);
// Returns q or -q, whichever is closer to ref.
Quaternion align_sign(const Quaternion &q, const Quaternion &ref);

struct PoseScale {
    Quaternion rotation;
    Vec3 translation;
    double scale = 1.0;

    void validate() const;
    Vec3 transform_point(const Vec3 &x) const;
    Vec3 transform_direction(const Vec3 &d) const;
    Vec3 inverse_transform_point(const Vec3 &x) const;
};

inline Vec3 transform_point(const PoseScale &p, const Vec3 &x) { return p.transform_point(x); }

struct Ray {
    Vec3 origin;
    Vec3 direction;
};

struct PixelCoord {
    double u = 0.0;
    double v = 0.0;
};

struct Projection {
    double u = 0.0;
    double v = 0.0;
    double depth = 0.0;
};

// Pinhole camera. Pixel (i, j) has its center at image coordinates (i, j);
// the camera frame is right-handed, y-up, looking down -z.
struct PinholeCamera {
    double focal = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;
    Mat3 rotation;    // camera-from-world
    Vec3 translation; // camera-from-world

    static PinholeCamera look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &up, int width,
                                 int height, double focal);

    void validate() const;
    Vec3 center() const;
    Vec3 to_camera(const Vec3 &x_world) const { return rotation * x_world + translation; }
    Ray pixel_ray(double u, double v) const;
};

// Throws BehindCamera when depth <= 1e-6.
Projection project(const PinholeCamera &cam, const Vec3 &x_world);
Vec3 unproject(const PinholeCamera &cam, double u, double v, double depth);

class HdrImage {
public:
    HdrImage() = default;
    HdrImage(int width, int height);

    int width() const { return width_; }
    int height() const { return height_; }
    size_t pixel_count() const { return static_cast<size_t>(width_) * height_; }

    Rgb at(int x, int y) const {
        size_t i = 3 * (static_cast<size_t>(y) * width_ + x);
        return {data_[i], data_[i + 1], data_[i + 2]};
    }
    void set(int x, int y, const Rgb &c);

    std::vector<double> &data() { return data_; }
    const std::vector<double> &data() const { return data_; }

    // Checks every channel is finite and >= 0.
    void validate() const;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> data_;
};

class MaskImage {
public:
    MaskImage() = default;
    MaskImage(int width, int height, double fill = 0.0);

    int width() const { return width_; }
    int height() const { return height_; }
    size_t pixel_count() const { return values_.size(); }

    double at(int x, int y) const { return values_[static_cast<size_t>(y) * width_ + x]; }
    // Clamps to [0, 1].
    void set(int x, int y, double v);

    std::vector<double> &values() { return values_; }
    const std::vector<double> &values() const { return values_; }

    double sum() const;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> values_;
};

// Coverage-weighted mean pixel coordinate. Throws EmptyMask.
PixelCoord mask_barycenter(const MaskImage &m);

inline double image_diagonal(int width, int height) {
    return std::sqrt(static_cast<double>(width) * width + static_cast<double>(height) * height);
}

} // namespace alp
