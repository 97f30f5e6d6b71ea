#include "alprobe/brdf.hpp"

#include <algorithm>
#include <cmath>

namespace alp {

BrdfParams BrdfParams::make(const Rgb &albedo, double roughness) {
    BrdfParams p;
    p.albedo = {std::clamp(albedo.x, 0.0, 1.0), std::clamp(albedo.y, 0.0, 1.0), std::clamp(albedo.z, 0.0, 1.0)};
    p.roughness = std::clamp(roughness, kMinRoughness, 1.0);
    return p;
}

double ggx_ndf(double r, double cos_nh) { return brdf::ndf(r, std::abs(cos_nh)); }

Rgb schlick_fresnel(const Rgb &albedo, double cos_ho) { return brdf::fresnel(albedo, std::abs(cos_ho)); }

double smith_g1(double r, double cos_n) { return brdf::g1(r, std::abs(cos_n)); }

double smith_g(double r, double cos_ni, double cos_no) { return smith_g1(r, cos_ni) * smith_g1(r, cos_no); }

Rgb eval_brdf(const BrdfParams &p, const UnitVec3 &wi, const UnitVec3 &wo, const UnitVec3 &n) {
    double cos_i = dot(n.vec(), wi.vec());
    double cos_o = dot(n.vec(), wo.vec());
    if (cos_i <= 0.0 || cos_o <= 0.0) return {0.0, 0.0, 0.0};
    Vec3 h = normalize(wi.vec() + wo.vec());
    double d = ggx_ndf(p.roughness, dot(n.vec(), h));
    Rgb f = schlick_fresnel(p.albedo, dot(h, wo.vec()));
    double g = smith_g(p.roughness, cos_i, cos_o);
    return f * (d * g / (4.0 * cos_i * cos_o));
}

SampleRecord sample_vndf(const BrdfParams &p, const UnitVec3 &wo, const UnitVec3 &n, double u1, double u2) {
    auto s = brdf::sample_vndf(p.roughness, n.vec(), wo.vec(), u1, u2);
    SampleRecord rec;
    rec.direction = UnitVec3::normalize(s.wi);
    double cos_i = dot(n.vec(), rec.direction.vec());
    if (cos_i <= 0.0 || dot(n.vec(), wo.vec()) <= 0.0) return rec;
    rec.valid = true;
    rec.pdf = vndf_pdf(p, wo, rec.direction, n);
    // f * cos_i / pdf collapses to F * G1(wi) for the separable Smith term.
    rec.weight = schlick_fresnel(p.albedo, s.cos_ho) * smith_g1(p.roughness, cos_i);
    return rec;
}

double vndf_pdf(const BrdfParams &p, const UnitVec3 &wo, const UnitVec3 &wi, const UnitVec3 &n) {
    double cos_i = dot(n.vec(), wi.vec());
    double cos_o = dot(n.vec(), wo.vec());
    if (cos_i <= 0.0 || cos_o <= 0.0) return 0.0;
    Vec3 h = normalize(wi.vec() + wo.vec());
    // D_v(h) / (4 wo.h) with D_v = G1(wo) (wo.h) D(h) / cos_o.
    return smith_g1(p.roughness, cos_o) * ggx_ndf(p.roughness, dot(n.vec(), h)) / (4.0 * cos_o);
}

} // namespace alp
