#pragma once

#include "alprobe/core.hpp"

namespace alp {

// Roughness floor; near-mirror materials are represented at this value.
inline constexpr double kMinRoughness = 0.03;

// Metallic microfacet material: specular albedo and roughness r. The
// distribution width is alpha = r^2, so alpha^2 appears as r^4.
struct BrdfParams {
    Rgb albedo{1.0, 1.0, 1.0};
    double roughness = 0.5;

    // Clamps albedo into [0,1]^3 and roughness into [kMinRoughness, 1].
    static BrdfParams make(const Rgb &albedo, double roughness);
};

double ggx_ndf(double r, double cos_nh);
Rgb schlick_fresnel(const Rgb &albedo, double cos_ho);
// Single-direction masking term of the separable Smith product.
double smith_g1(double r, double cos_n);
double smith_g(double r, double cos_ni, double cos_no);

// f(wi, wo); zero when either direction is below the horizon of n.
Rgb eval_brdf(const BrdfParams &p, const UnitVec3 &wi, const UnitVec3 &wo, const UnitVec3 &n);

struct SampleRecord {
    UnitVec3 direction;
    double pdf = 0.0;   // per steradian; 0 for rejected samples
    Rgb weight;         // f * (n . wi) / pdf; 0 for rejected samples
    bool valid = false; // false when the reflected direction fell below the horizon
};

// Samples the visible normal distribution for wo and reflects wo about the
// sampled microfacet normal.
SampleRecord sample_vndf(const BrdfParams &p, const UnitVec3 &wo, const UnitVec3 &n, double u1, double u2);
double vndf_pdf(const BrdfParams &p, const UnitVec3 &wo, const UnitVec3 &wi, const UnitVec3 &n);

// Kernels shared with the renderer, generic over double and Dual<N>.
namespace brdf {

template <class T>
T ndf(const T &r, const T &cos_nh) {
    T r2 = r * r;
    T a2 = r2 * r2;
    T c = cos_nh * cos_nh * (a2 - 1.0) + 1.0;
    return a2 / (kPi * c * c);
}

template <class T>
T g1(const T &r, const T &cos_n) {
    T r2 = r * r;
    T a2 = r2 * r2;
    T c = cos_n;
    return 2.0 * c / (c + sqrt(a2 + (1.0 - a2) * c * c));
}

template <class T>
Vec3T<T> fresnel(const Vec3T<T> &albedo, const T &cos_ho) {
    T k = powi(T(1.0) - cos_ho, 5);
    return {albedo.x + (1.0 - albedo.x) * k, albedo.y + (1.0 - albedo.y) * k,
            albedo.z + (1.0 - albedo.z) * k};
}

template <class T>
struct VndfSample {
    Vec3T<T> wi;
    Vec3T<T> h;
    T cos_ho; // wo . h
};

// VNDF sampling in the frame (t1, t2, n) where t1 is the tangential part of
// wo. Tying the frame to wo makes the sampled direction a smooth function of
// n and wo, which keeps pose derivatives of the estimator well defined.
template <class T>
VndfSample<T> sample_vndf(const T &roughness, const Vec3T<T> &n, const Vec3T<T> &wo, double u1, double u2) {
    T alpha = roughness * roughness;
    T cos_o = dot(n, wo);
    Vec3T<T> tangential = wo - n * cos_o;
    T sin_o = length(tangential);
    Vec3T<T> t1, t2;
    if (value(sin_o) > 1e-9) {
        t1 = tangential / sin_o;
    } else {
        Vec3 nv = value(n);
        Vec3 a = std::abs(nv.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
        Vec3 p = normalize(cross(nv, a));
        t1 = {T(p.x), T(p.y), T(p.z)};
        sin_o = T(0.0);
    }
    t2 = cross(n, t1);

    // Stretch the view direction into the hemisphere configuration.
    T vx = alpha * sin_o;
    T vlen = sqrt(vx * vx + cos_o * cos_o);
    T vhx = vx / vlen;
    T vhz = cos_o / vlen;

    double rr = std::sqrt(u1);
    double phi = 2.0 * kPi * u2;
    double p1 = rr * std::cos(phi);
    double p2 = rr * std::sin(phi);
    T s = 0.5 * (1.0 + vhz);
    T q2 = (1.0 - s) * std::sqrt(1.0 - p1 * p1) + s * p2;
    T nz = sqrt(max_value(T(0.0), 1.0 - p1 * p1 - q2 * q2));

    // Nh = p1 * T1 + q2 * T2 + nz * Vh with T1 = (0,1,0), T2 = (-vhz, 0, vhx).
    T nhx = nz * vhx - q2 * vhz;
    T nhy = T(p1);
    T nhz = q2 * vhx + nz * vhz;

    // Unstretch.
    Vec3T<T> ne{alpha * nhx, alpha * nhy, max_value(T(0.0), nhz)};
    ne = normalize(ne);
    Vec3T<T> h = t1 * ne.x + t2 * ne.y + n * ne.z;
    T cos_ho = dot(wo, h);
    Vec3T<T> wi = h * (2.0 * cos_ho) - wo;
    return {wi, h, cos_ho};
}

} // namespace brdf

} // namespace alp
