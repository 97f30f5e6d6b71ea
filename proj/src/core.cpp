#include "alprobe/core.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <sstream>

namespace alp {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::BehindCamera: return "BehindCamera";
        case ErrorCode::InvalidResolution: return "InvalidResolution";
        case ErrorCode::InvalidMesh: return "InvalidMesh";
        case ErrorCode::DegenerateTriangle: return "DegenerateTriangle";
        case ErrorCode::EmptyMask: return "EmptyMask";
        case ErrorCode::ObjectNotVisible: return "ObjectNotVisible";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::TooFewViews: return "TooFewViews";
        case ErrorCode::DegenerateReference: return "DegenerateReference";
        case ErrorCode::MalformedHeader: return "MalformedHeader";
        case ErrorCode::TruncatedPayload: return "TruncatedPayload";
        case ErrorCode::UnsupportedBitDepth: return "UnsupportedBitDepth";
        case ErrorCode::UnsupportedColorType: return "UnsupportedColorType";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

UnitVec3 UnitVec3::normalize(const Vec3 &v) {
    double len = length(v);
    if (!(len > 0.0) || !std::isfinite(len)) {
        throw Error(ErrorCode::InvalidArgument, "cannot normalize a zero or non-finite vector");
    }
    return UnitVec3(v / len);
}

UnitVec3 UnitVec3::from_unit(const Vec3 &v) {
    assert(std::abs(length(v) - 1.0) < 1e-6);
    return UnitVec3(v);
}

Mat3 Mat3::operator*(const Mat3 &o) const {
    Mat3 r;
    for (int i = 0; i < 3; i++) {
        for (int j = 0; j < 3; j++) {
            double s = 0.0;
            for (int k = 0; k < 3; k++) s += (*this)(i, k) * o(k, j);
            r(i, j) = s;
        }
    }
    return r;
}

Mat3 Mat3::transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; i++)
        for (int j = 0; j < 3; j++) r(i, j) = (*this)(j, i);
    return r;
}

Mat3 Mat3::from_rows(const Vec3 &r0, const Vec3 &r1, const Vec3 &r2) {
    Mat3 r;
    r.m = {r0.x, r0.y, r0.z, r1.x, r1.y, r1.z, r2.x, r2.y, r2.z};
    return r;
}

Quaternion Quaternion::from_axis_angle(const Vec3 &axis, double angle) {
    Vec3 a = normalize(axis);
    double s = std::sin(0.5 * angle);
    return {std::cos(0.5 * angle), a.x * s, a.y * s, a.z * s};
}

Quaternion Quaternion::from_rotation_vector(const Vec3 &omega) {
    double angle = length(omega);
    if (angle < 1e-12) {
        // Second-order accurate near zero.
        return Quaternion{1.0, 0.5 * omega.x, 0.5 * omega.y, 0.5 * omega.z}.normalized();
    }
    return from_axis_angle(omega / angle, angle);
}

Quaternion Quaternion::from_matrix(const Mat3 &r) {
    // Shepperd's method.
    double tr = r(0, 0) + r(1, 1) + r(2, 2);
    Quaternion q;
    if (tr > 0.0) {
        double s = std::sqrt(tr + 1.0) * 2.0;
        q = {0.25 * s, (r(2, 1) - r(1, 2)) / s, (r(0, 2) - r(2, 0)) / s, (r(1, 0) - r(0, 1)) / s};
    } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
        double s = std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2)) * 2.0;
        q = {(r(2, 1) - r(1, 2)) / s, 0.25 * s, (r(0, 1) + r(1, 0)) / s, (r(0, 2) + r(2, 0)) / s};
    } else if (r(1, 1) > r(2, 2)) {
        double s = std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2)) * 2.0;
        q = {(r(0, 2) - r(2, 0)) / s, (r(0, 1) + r(1, 0)) / s, 0.25 * s, (r(1, 2) + r(2, 1)) / s};
    } else {
        double s = std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1)) * 2.0;
        q = {(r(1, 0) - r(0, 1)) / s, (r(0, 2) + r(2, 0)) / s, (r(1, 2) + r(2, 1)) / s, 0.25 * s};
    }
    return q.normalized();
}

double Quaternion::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Quaternion Quaternion::normalized() const {
    double n = norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
        throw Error(ErrorCode::InvalidArgument, "cannot normalize a zero or non-finite quaternion");
    }
    return {w / n, x / n, y / n, z / n};
}

Quaternion Quaternion::canonical() const { return w < 0.0 ? -*this : *this; }

Mat3 Quaternion::to_matrix() const {
    Quaternion q = normalized();
    double ww = q.w * q.w, xx = q.x * q.x, yy = q.y * q.y, zz = q.z * q.z;
    double xy = q.x * q.y, xz = q.x * q.z, yz = q.y * q.z;
    double wx = q.w * q.x, wy = q.w * q.y, wz = q.w * q.z;
    Mat3 r;
    r.m = {ww + xx - yy - zz, 2 * (xy - wz),     2 * (xz + wy),
           2 * (xy + wz),     ww - xx + yy - zz, 2 * (yz - wx),
           2 * (xz - wy),     2 * (yz + wx),     ww - xx - yy + zz};
    return r;
}

Quaternion operator*(const Quaternion &a, const Quaternion &b) {
    return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

Vec3 rotate(const Quaternion &q_in, const Vec3 &v) {
    Quaternion q = q_in.normalized();
    // v' = v + 2w (u x v) + 2 u x (u x v), u = vector part.
    Vec3 u{q.x, q.y, q.z};
    Vec3 t = 2.0 * cross(u, v);
    return v + q.w * t + cross(u, t);
}

double quaternion_distance(const Quaternion &q, const Quaternion &r) {
    double dm = std::sqrt((q.w - r.w) * (q.w - r.w) + (q.x - r.x) * (q.x - r.x) +
                          (q.y - r.y) * (q.y - r.y) + (q.z - r.z) * (q.z - r.z));
    double dp = std::sqrt((q.w + r.w) * (q.w + r.w) + (q.x + r.x) * (q.x + r.x) +
                          (q.y + r.y) * (q.y + r.y) + (q.z + r.z) * (q.z + r.z));
    return std::min(dm, dp);
}

double rotation_angle(const Quaternion &a, const Quaternion &b) {
    double d = std::abs(a.normalized().dot(b.normalized()));
    return 2.0 * std::acos(std::min(1.0, d));
}

Quaternion align_sign(const Quaternion &q, const Quaternion &ref) { return q.dot(ref) < 0.0 ? -q : q; }

void PoseScale::validate() const {
    if (!(scale > 0.0) || !std::isfinite(scale)) {
        throw Error(ErrorCode::InvalidArgument, "pose scale must be positive and finite");
    }
    double n = rotation.norm();
    if (std::abs(n - 1.0) > 1e-6) {
        throw Error(ErrorCode::InvalidArgument, "pose rotation must be a unit quaternion");
    }
    if (!std::isfinite(translation.x) || !std::isfinite(translation.y) || !std::isfinite(translation.z)) {
        throw Error(ErrorCode::InvalidArgument, "pose translation must be finite");
    }
}

Vec3 PoseScale::transform_point(const Vec3 &x) const { return scale * rotate(rotation, x) + translation; }

Vec3 PoseScale::transform_direction(const Vec3 &d) const { return rotate(rotation, d); }

Vec3 PoseScale::inverse_transform_point(const Vec3 &x) const {
    return rotate(rotation.conjugate(), x - translation) / scale;
}

PinholeCamera PinholeCamera::look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &up, int width,
                                     int height, double focal) {
    Vec3 back = normalize(eye - target); // camera +z
    Vec3 right = normalize(cross(up, back));
    Vec3 cam_up = cross(back, right);
    PinholeCamera cam;
    cam.focal = focal;
    cam.width = width;
    cam.height = height;
    cam.cx = 0.5 * (width - 1);
    cam.cy = 0.5 * (height - 1);
    cam.rotation = Mat3::from_rows(right, cam_up, back);
    cam.translation = -(cam.rotation * eye);
    return cam;
}

void PinholeCamera::validate() const {
    if (!(focal > 0.0) || !std::isfinite(focal)) {
        throw Error(ErrorCode::InvalidArgument, "camera focal length must be positive");
    }
    if (width < 1 || height < 1) {
        throw Error(ErrorCode::InvalidResolution, "camera width and height must be >= 1");
    }
}

Vec3 PinholeCamera::center() const { return -(rotation.transposed() * translation); }

Ray PinholeCamera::pixel_ray(double u, double v) const {
    Vec3 d_cam{(u - cx) / focal, -(v - cy) / focal, -1.0};
    return {center(), normalize(rotation.transposed() * d_cam)};
}

Projection project(const PinholeCamera &cam, const Vec3 &x_world) {
    Vec3 xc = cam.to_camera(x_world);
    double depth = -xc.z;
    if (depth <= 1e-6) {
        std::ostringstream os;
        os << "point is behind the camera (depth " << depth << ")";
        throw Error(ErrorCode::BehindCamera, os.str());
    }
    return {cam.cx + cam.focal * xc.x / depth, cam.cy - cam.focal * xc.y / depth, depth};
}

Vec3 unproject(const PinholeCamera &cam, double u, double v, double depth) {
    Vec3 xc{(u - cam.cx) / cam.focal * depth, -(v - cam.cy) / cam.focal * depth, -depth};
    return cam.rotation.transposed() * (xc - cam.translation);
}

HdrImage::HdrImage(int width, int height) : width_(width), height_(height) {
    if (width < 0 || height < 0) throw Error(ErrorCode::InvalidResolution, "negative image size");
    data_.assign(3 * static_cast<size_t>(width) * height, 0.0);
}

void HdrImage::set(int x, int y, const Rgb &c) {
    size_t i = 3 * (static_cast<size_t>(y) * width_ + x);
    data_[i] = c.x;
    data_[i + 1] = c.y;
    data_[i + 2] = c.z;
}

void HdrImage::validate() const {
    for (size_t i = 0; i < data_.size(); i++) {
        if (!std::isfinite(data_[i]) || data_[i] < 0.0) {
            std::ostringstream os;
            os << "image channel " << i << " is negative or non-finite";
            throw Error(ErrorCode::InvalidArgument, os.str());
        }
    }
}

MaskImage::MaskImage(int width, int height, double fill) : width_(width), height_(height) {
    if (width < 0 || height < 0) throw Error(ErrorCode::InvalidResolution, "negative mask size");
    values_.assign(static_cast<size_t>(width) * height, std::clamp(fill, 0.0, 1.0));
}

void MaskImage::set(int x, int y, double v) {
    values_[static_cast<size_t>(y) * width_ + x] = std::clamp(v, 0.0, 1.0);
}

double MaskImage::sum() const {
    double s = 0.0;
    for (double v : values_) s += v;
    return s;
}

PixelCoord mask_barycenter(const MaskImage &m) {
    double su = 0.0, sv = 0.0, sw = 0.0;
    for (int y = 0; y < m.height(); y++) {
        for (int x = 0; x < m.width(); x++) {
            double w = m.at(x, y);
            su += w * x;
            sv += w * y;
            sw += w;
        }
    }
    if (!(sw > 0.0)) throw Error(ErrorCode::EmptyMask, "mask has zero total coverage");
    return {su / sw, sv / sw};
}

} // namespace alp
